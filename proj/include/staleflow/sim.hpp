// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <string>
#include <vector>

#include "staleflow/config.hpp"
#include "staleflow/controller.hpp"
#include "staleflow/health.hpp"
#include "staleflow/metrics.hpp"
#include "staleflow/result.hpp"
#include "staleflow/types.hpp"

namespace staleflow {

// Deterministic discrete-event engine: events fire in (time, insertion seq)
// order, so identical (config, seed) pairs replay identical traces.
class SimEngine {
 public:
  using Fn = std::function<void()>;

  void schedule(TimePoint t, Fn fn);
  void schedule_now(Fn fn) { schedule(now_, std::move(fn)); }
  TimePoint now() const { return now_; }
  bool empty() const { return events_.empty(); }
  std::uint64_t events_processed() const { return processed_; }

  // Hook run after every event; the runtime uses it to wake blocked actors.
  void set_post_event_hook(Fn hook) { post_event_ = std::move(hook); }

  // Runs until stop() returns true or no events remain. Returns false when the
  // event budget is exhausted (deadlock guard).
  bool run(const std::function<bool()>& stop, std::uint64_t max_events = 200'000'000);

 private:
  struct Ev {
    TimePoint t;
    std::uint64_t seq;
    Fn fn;
  };
  struct Cmp {
    bool operator()(const Ev& a, const Ev& b) const {
      return a.t > b.t || (a.t == b.t && a.seq > b.seq);
    }
  };

  std::priority_queue<Ev, std::vector<Ev>, Cmp> events_;
  TimePoint now_ = 0.0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t processed_ = 0;
  Fn post_event_;
};

// Resource pool. Exclusive pools admit their owners immediately; a
// time-multiplexed pool admits one occupant group at a time and charges the
// sleep/wakeup pair (switch_overhead) when the trainer takes the pool over
// from a producer group - one charge per alternation cycle.
class SimPool {
 public:
  SimPool() = default;
  SimPool(std::string id, bool multiplexed, double switch_overhead)
      : id_(std::move(id)), multiplexed_(multiplexed), switch_overhead_(switch_overhead) {}

  // granted() runs at occupancy-grant time (after any switch charge).
  void acquire(SimEngine& engine, const std::string& group, const std::string& trainer_group,
               std::function<void()> granted);
  void release(SimEngine& engine, const std::string& group, const std::string& trainer_group);
  void reset();

  // Fired at handoff start whenever a switch is charged.
  void set_switch_hook(std::function<void(double)> hook) { on_switch_ = std::move(hook); }

  const std::string& id() const { return id_; }
  bool multiplexed() const { return multiplexed_; }

 private:
  void grant_next(SimEngine& engine, const std::string& trainer_group);

  std::string id_;
  bool multiplexed_ = false;
  double switch_overhead_ = 0.0;
  std::string occupant_;       // current occupant group, empty when free
  std::string last_occupant_;  // survives release; detects producer->trainer handoff
  int active_ = 0;
  std::deque<std::pair<std::string, std::function<void()>>> waiters_;
  std::function<void(double)> on_switch_;
};

// Per-consumed-batch audit record for the staleness invariant.
struct ConsumedBatchAudit {
  TimePoint time = 0.0;
  Version v_t = 0;
  Version min_producer_version = 0;
  Version staleness = 0;
  Step min_step = 0;
  Step max_step = 0;
};

struct RunResult {
  MetricsReport metrics;
  std::vector<TimelineEvent> trace;
  DirectiveLog directives;
  std::vector<std::string> gate_callers;
  std::vector<ConsumedBatchAudit> consumed_batches;
  QueueStats final_queue_stats;
  std::map<std::string, std::vector<std::pair<LifecycleState, LifecycleState>>>
      replica_lifecycles;
  std::vector<double> trainer_fetch_waits;
};

// Runs a scenario on the backend selected by config.transport: in_process ->
// deterministic virtual clock, tcp -> wall clock over real sockets.
Result<RunResult> run_scenario(const ScenarioConfig& config);
Result<RunResult> run_scenario_virtual(const ScenarioConfig& config);
Result<RunResult> run_scenario_wall(const ScenarioConfig& config);

// Analytic steady-state step time for fully deterministic configs:
//   colocate:          sum of per-step stage spans + switch_overhead + sync
//   separated, K = 0:  rollout span + stage-DAG critical path + train + sync
//   separated, K >= 1: max per-pool span (trainer span includes sync)
Result<double> closed_form_step_time(const ScenarioConfig& config);

// Per-step spans the formula is built from (exposed for tests).
struct StepSpans {
  double rollout = 0.0;
  std::map<std::string, double> stages;  // by role kind name
  double train = 0.0;
  double stage_critical_path = 0.0;  // intermediates only
  double stage_sum = 0.0;
};
Result<StepSpans> compute_step_spans(const ScenarioConfig& config);

}  // namespace staleflow
