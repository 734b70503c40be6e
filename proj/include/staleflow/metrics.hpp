// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "staleflow/health.hpp"
#include "staleflow/result.hpp"
#include "staleflow/types.hpp"

namespace staleflow {

enum class EventKind : std::uint8_t {
  StageStart,
  StageEnd,
  PermitWait,
  DataWait,
  Switch,
  Fault,
  Recovery,
  Barrier,
};

const char* event_kind_name(EventKind k);
Result<EventKind> event_kind_from_name(const std::string& s);

struct TimelineEvent {
  TimePoint time = 0.0;
  std::uint64_t seq = 0;  // insertion tie-break; (time, seq) totally orders the trace
  EventKind kind = EventKind::StageStart;
  std::string role;
  Step step = 0;
  double duration = 0.0;

  bool operator==(const TimelineEvent& o) const {
    return time == o.time && seq == o.seq && kind == o.kind && role == o.role && step == o.step &&
           duration == o.duration;
  }
};

struct RecoveryRecord {
  TimePoint at = 0.0;
  PlanKind plan = PlanKind::InPlace;
  std::string role;
  double downtime = 0.0;
  Version restored_version = -1;
};

struct MetricsReport {
  std::string mode;  // colocate | on_policy | near_on_policy | fully_async
  int max_staleness = 0;
  std::uint64_t seed = 0;
  int steps = 0;
  std::vector<double> step_times;  // interval between consecutive version publications
  int warmup_steps = 0;
  double mean_step = 0.0;  // over post-warmup step times
  double steps_per_hour = 0.0;
  double idle_ratio = 0.0;  // trainer data-wait share, post-warmup window
  double data_wait_per_step = 0.0;
  std::map<Version, std::uint64_t> staleness_hist;  // per consumed trainer micro-batch
  double switch_total = 0.0;
  std::vector<RecoveryRecord> recoveries;
  double total_time = 0.0;

  void finalize();  // mean_step / steps_per_hour from step_times[warmup..]
};

nlohmann::json metrics_to_json(const MetricsReport& m);
std::string timeline_to_csv(const std::vector<TimelineEvent>& trace);
nlohmann::json timeline_to_json(const std::vector<TimelineEvent>& trace);
Result<std::vector<TimelineEvent>> parse_timeline_csv(const std::string& csv);

Status write_file(const std::string& path, const std::string& contents);

// Shortest-round-trip double formatting, pinned for byte-stable outputs.
std::string format_double(double v);

}  // namespace staleflow
