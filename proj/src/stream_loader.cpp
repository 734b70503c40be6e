// SPDX-License-Identifier: Apache-2.0
#include "staleflow/stream_loader.hpp"

#include <algorithm>
#include <chrono>

namespace staleflow {

namespace {

NowFn default_now() {
  auto start = std::chrono::steady_clock::now();
  return [start] {
    auto d = std::chrono::steady_clock::now() - start;
    return std::chrono::duration<double>(d).count();
  };
}

}  // namespace

StreamLoader::StreamLoader(Bus& bus, std::string group_id, LoaderConfig config, NowFn now)
    : bus_(bus),
      group_(std::move(group_id)),
      config_(std::move(config)),
      now_(now ? std::move(now) : default_now()) {}

std::string StreamLoader::stage_group(int stage) const {
  return group_ + ".s" + std::to_string(stage);
}

Status StreamLoader::attach() {
  if (config_.delivery == DeliveryTopology::RootBroadcast || config_.stages <= 1) {
    return bus_.register_group(group_);
  }
  for (int i = 0; i < config_.stages; ++i) {
    auto st = bus_.register_group(stage_group(i));
    if (!st.ok()) return st;
  }
  return ok_status();
}

std::uint64_t StreamLoader::batch_bytes(const MicroBatch& b) const {
  std::uint64_t n = 0;
  for (const auto& row : b.payloads)
    for (const auto& bytes : row) n += bytes.size();
  return n;
}

Result<MicroBatch> StreamLoader::fetch_once(bool blocking, std::optional<Step> step_filter) {
  if (config_.delivery == DeliveryTopology::RootBroadcast || config_.stages <= 1) {
    auto batch = bus_.get_ready_batch(group_, config_.required_fields, config_.micro_batch_size,
                                      blocking, true, step_filter);
    if (!batch.ok()) return batch;
    std::uint64_t bytes = batch_bytes(batch.value());
    stats_.bus_bytes += bytes;
    // Root pulls once and re-broadcasts to the remaining stages.
    stats_.broadcast_bytes += bytes * std::uint64_t(config_.stages > 0 ? config_.stages - 1 : 0);
    return batch;
  }
  // Independent per-stage pulls. The queue's deterministic readiness order
  // hands every stage the same sequence; stage 0's copy is returned and peer
  // copies are acknowledged on the spot.
  Result<MicroBatch> root = Result<MicroBatch>::err(Errc::Internal, "no stages");
  for (int i = 0; i < config_.stages; ++i) {
    auto batch = bus_.get_ready_batch(stage_group(i), config_.required_fields,
                                      config_.micro_batch_size, blocking, true, step_filter);
    if (!batch.ok()) return batch;
    stats_.bus_bytes += batch_bytes(batch.value());
    if (i == 0)
      root = std::move(batch);
    else
      bus_.mark_consumed(stage_group(i), batch.value().batch_id);
  }
  return root;
}

Result<MicroBatch> StreamLoader::next_micro_batch() {
  if (config_.on_policy && delivered_in_step_ >= config_.global_batch_size)
    return Result<MicroBatch>::err(Errc::StepBoundary,
                                   "on-policy quota for current version exhausted");
  TimePoint start = now_();
  if (stats_.window_start < 0.0) stats_.window_start = start;
  auto batch = fetch_once(true, std::nullopt);
  if (!batch.ok()) return batch;
  TimePoint end = now_();
  stats_.per_fetch_wait.push_back(end - start);
  stats_.total_wait += end - start;
  stats_.window_end = end;
  delivered_in_step_ += int(batch.value().size());
  return batch;
}

Result<MicroBatch> StreamLoader::try_next() {
  if (config_.on_policy && delivered_in_step_ >= config_.global_batch_size)
    return Result<MicroBatch>::err(Errc::StepBoundary,
                                   "on-policy quota for current version exhausted");
  auto batch = fetch_once(false, std::nullopt);
  if (batch.ok()) delivered_in_step_ += int(batch.value().size());
  return batch;
}

void StreamLoader::note_fetch(double wait, TimePoint end_time, std::uint64_t bytes) {
  if (stats_.window_start < 0.0) stats_.window_start = end_time - wait;
  stats_.per_fetch_wait.push_back(wait);
  stats_.total_wait += wait;
  stats_.window_end = end_time;
  (void)bytes;
}

Status StreamLoader::drain_poll_events(bool blocking) {
  if (!drain_events_) {
    auto stream = bus_.subscribe(
        config_.delivery == DeliveryTopology::PerStagePull && config_.stages > 1 ? stage_group(0)
                                                                                 : group_,
        config_.required_fields);
    if (!stream.ok()) return Status(stream.error());
    drain_events_ = std::move(stream.value());
  }
  bool first = blocking;
  for (;;) {
    auto ev = drain_events_->next(first);
    first = false;
    if (!ev.ok()) {
      if (ev.error().code == Errc::NotReady) return ok_status();
      return Status(ev.error());
    }
    step_ready_counts_[ev.value().global_step] += 1;
  }
}

Result<std::vector<MicroBatch>> StreamLoader::try_drain(Step step) {
  if (config_.global_batch_size <= 0)
    return Result<std::vector<MicroBatch>>::err(Errc::BadFrame, "zero-size step");
  if (auto st = drain_poll_events(false); !st.ok())
    return Result<std::vector<MicroBatch>>(st.error());
  auto it = step_ready_counts_.find(step);
  if (it == step_ready_counts_.end() || it->second < config_.global_batch_size)
    return Result<std::vector<MicroBatch>>::err(
        Errc::NotReady, "step " + std::to_string(step) + " not fully generated");
  std::vector<MicroBatch> out;
  for (int i = 0; i < micros_per_step(); ++i) {
    auto batch = fetch_once(false, step);
    if (!batch.ok()) return Result<std::vector<MicroBatch>>(batch.error());
    out.push_back(std::move(batch.value()));
  }
  return out;
}

Result<std::vector<MicroBatch>> StreamLoader::drain_step(Step step) {
  if (config_.global_batch_size <= 0)
    return Result<std::vector<MicroBatch>>::err(Errc::BadFrame, "zero-size step");
  TimePoint start = now_();
  if (stats_.window_start < 0.0) stats_.window_start = start;
  for (;;) {
    auto got = try_drain(step);
    if (got.ok()) {
      TimePoint end = now_();
      stats_.per_fetch_wait.push_back(end - start);
      stats_.total_wait += end - start;
      stats_.window_end = end;
      return got;
    }
    if (got.error().code != Errc::NotReady) return got;
    // Sleep until the next readiness event; a draining queue surfaces here.
    if (auto st = drain_poll_events(true); !st.ok())
      return Result<std::vector<MicroBatch>>(st.error());
  }
}

Status StreamLoader::ack(const MicroBatch& batch) {
  if (config_.delivery == DeliveryTopology::PerStagePull && config_.stages > 1) {
    // Stage 0 carries the returned batch id; peer stages acked on fetch is not
    // tracked here, so acknowledge stage 0 only.
    return bus_.mark_consumed(stage_group(0), batch.batch_id);
  }
  return bus_.mark_consumed(group_, batch.batch_id);
}

void StreamLoader::advance_step() { delivered_in_step_ = 0; }

TraceWaits replay_waits(std::vector<double> readiness_times, int micro_batch_size,
                        double micro_compute_time) {
  TraceWaits out;
  std::sort(readiness_times.begin(), readiness_times.end());
  const int n = int(readiness_times.size());
  const int micros = n / micro_batch_size;

  // Streaming: consume each micro-batch when its last sample is ready or the
  // previous compute finishes, whichever is later.
  double t = 0.0;
  for (int i = 0; i < micros; ++i) {
    double ready = readiness_times[std::size_t(i + 1) * micro_batch_size - 1];
    double start = std::max(t, ready);
    out.streaming_wait += start - t;
    t = start + micro_compute_time;
  }
  out.streaming_finish = t;

  // Drain: nothing starts before the whole batch is ready.
  double all_ready = readiness_times.empty() ? 0.0 : readiness_times.back();
  out.drain_wait = all_ready;
  out.drain_finish = all_ready + micros * micro_compute_time;
  return out;
}

}  // namespace staleflow
