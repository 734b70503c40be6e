// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "staleflow/transfer_queue.hpp"
#include "staleflow/types.hpp"

namespace staleflow {

enum class DeliveryTopology : std::uint8_t { RootBroadcast, PerStagePull };

struct LoaderConfig {
  DeliveryTopology delivery = DeliveryTopology::RootBroadcast;
  int micro_batch_size = 32;
  int global_batch_size = 256;
  std::vector<std::string> required_fields;
  int stages = 1;       // pipeline stages consuming each batch
  bool on_policy = false;  // per-version quota: StepBoundary once exhausted
};

struct WaitStats {
  std::vector<double> per_fetch_wait;
  double total_wait = 0.0;
  TimePoint window_start = -1.0;
  TimePoint window_end = 0.0;
  std::uint64_t bus_bytes = 0;        // pulled through the queue
  std::uint64_t broadcast_bytes = 0;  // root-broadcast fan-out to peer stages

  double idle_ratio() const {
    double span = window_end - window_start;
    if (window_start < 0.0 || span <= 0.0) return 0.0;
    double r = total_wait / span;
    return r < 0.0 ? 0.0 : (r > 1.0 ? 1.0 : r);
  }
};

// Turns partition-ready data into a continuous micro-batch feed for one
// consumer role. Streaming fetches deliver in readiness order; drain_step is
// the global-batch-synchronous baseline measured against it.
class StreamLoader {
 public:
  StreamLoader(Bus& bus, std::string group_id, LoaderConfig config, NowFn now);

  Status attach();

  // Blocking fetch (wall-clock backend); wait is measured request-to-return.
  Result<MicroBatch> next_micro_batch();
  // Non-blocking fetch for the virtual-clock backend, which does its own
  // waiting and reports the observed wait through note_fetch().
  Result<MicroBatch> try_next();
  void note_fetch(double wait, TimePoint end_time, std::uint64_t bytes);

  // Global-batch-synchronous baseline: nothing is delivered until every
  // sample of the step is ready, then all micro-batches come back at once.
  Result<std::vector<MicroBatch>> drain_step(Step step);
  Result<std::vector<MicroBatch>> try_drain(Step step);

  Status ack(const MicroBatch& batch);
  // On-policy bookkeeping: opens the quota for the next step.
  void advance_step();

  const WaitStats& wait_stats() const { return stats_; }
  int micros_per_step() const { return config_.global_batch_size / config_.micro_batch_size; }
  const LoaderConfig& config() const { return config_; }
  const std::string& group() const { return group_; }

 private:
  std::string stage_group(int stage) const;
  Result<MicroBatch> fetch_once(bool blocking, std::optional<Step> step_filter);
  Status drain_poll_events(bool blocking);
  std::uint64_t batch_bytes(const MicroBatch& b) const;

  Bus& bus_;
  std::string group_;
  LoaderConfig config_;
  NowFn now_;
  WaitStats stats_;
  int delivered_in_step_ = 0;
  std::unique_ptr<EventStream> drain_events_;
  std::map<Step, int> step_ready_counts_;
};

// Pure replay oracle used to compare scheduling policies on one recorded
// readiness trace: returns cumulative trainer wait for streaming consumption
// versus whole-batch drain, given per-sample readiness times.
struct TraceWaits {
  double streaming_wait = 0.0;
  double drain_wait = 0.0;
  double streaming_finish = 0.0;
  double drain_finish = 0.0;
};
TraceWaits replay_waits(std::vector<double> readiness_times, int micro_batch_size,
                        double micro_compute_time);

}  // namespace staleflow
