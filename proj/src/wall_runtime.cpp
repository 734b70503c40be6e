// SPDX-License-Identifier: Apache-2.0
//
// Wall-clock backend: roles run as threads against the real bus (in-process
// or TCP) and real weight-sync transport. Timings are not reproducible, but
// the logical contracts (exactly-once delivery, staleness bound, barrier
// completeness) are the same as on the virtual clock.
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <memory>
#include <mutex>
#include <thread>
#include <unistd.h>

#include "staleflow/log.hpp"
#include "staleflow/queue_service.hpp"
#include "staleflow/sim.hpp"
#include "staleflow/staleness.hpp"
#include "staleflow/stream_loader.hpp"
#include "staleflow/transfer_queue.hpp"
#include "staleflow/weight_sync.hpp"

namespace staleflow {

namespace {

struct WallWorld {
  const ScenarioConfig* cfg = nullptr;
  NowFn now;  // virtual units derived from the wall clock
  std::function<void(double)> sleep_units;

  std::shared_ptr<TransferQueue> queue;
  std::unique_ptr<QueueServer> server;
  std::unique_ptr<StalenessGate> gate;
  std::unique_ptr<CheckpointStore> store;
  std::unique_ptr<WeightSyncCoordinator> sync;
  HealthStore health;

  std::vector<std::unique_ptr<WeightReceiverServer>> receivers;
  std::vector<std::unique_ptr<TcpQueueClient>> clients;  // owned per role

  std::mutex mu;
  std::vector<TimelineEvent> trace;
  std::uint64_t seq = 0;
  MetricsReport metrics;
  std::vector<ConsumedBatchAudit> consumed;
  std::vector<TimePoint> publish_times;
  std::vector<double> trainer_waits;
  std::atomic<bool> stop{false};
  std::string error_message;
  std::atomic<bool> failed{false};

  void emit(EventKind kind, const std::string& role, Step step, double duration) {
    std::lock_guard<std::mutex> lock(mu);
    trace.push_back(TimelineEvent{now(), seq++, kind, role, step, duration});
  }
  Bus& bus_for(std::size_t idx) { return *clients[idx]; }
};

std::filesystem::path wall_checkpoint_dir(const ScenarioConfig& cfg) {
  if (!cfg.checkpoint_dir.empty()) return cfg.checkpoint_dir;
  static std::atomic<std::uint64_t> counter{0};
  return std::filesystem::temp_directory_path() /
         ("staleflow-wall-" + std::to_string(std::uint64_t(::getpid())) + "-" +
          std::to_string(counter.fetch_add(1)));
}

void rollout_thread(WallWorld& w, const std::string& id, Bus& bus) {
  const ScenarioConfig& cfg = *w.cfg;
  const StageSpec& stage = cfg.algorithm.stages.front();
  while (!w.stop.load()) {
    auto permit = w.gate->acquire_generation_permit_blocking(id);
    if (!permit.ok()) return;  // gate shut down
    const GenerationPermit& p = permit.value();
    double max_latency = 0.0;
    std::vector<double> lats(p.sample_count);
    for (std::uint32_t j = 0; j < p.sample_count; ++j) {
      SplitMix64 rng(derive_seed(cfg.seed, "rollout.sample", p.first_sample_id + j));
      lats[j] = cfg.rollout_latency.draw(rng);
      max_latency = std::max(max_latency, lats[j]);
    }
    w.sleep_units(max_latency);
    for (std::uint32_t j = 0; j < p.sample_count && !w.stop.load(); ++j) {
      SampleMeta meta;
      meta.sample_id = p.first_sample_id + j;
      meta.global_step = p.global_step;
      meta.producer_version = p.granted_at_version;
      meta.micro_batch_id = id + "/" + std::to_string(p.permit_id);
      for (const auto& field : stage.produces) {
        Bytes payload(std::size_t(cfg.payload_bytes), std::uint8_t(j));
        auto ack = bus.put_field(meta, FieldKey{field, cfg.modality_of(field)}, std::move(payload),
                                 stage.produces);
        if (!ack.ok() && ack.error().code != Errc::Shutdown)
          SF_LOG_WARN("wall rollout put failed: %s", ack.error().message.c_str());
      }
    }
    w.gate->complete_permit(p.permit_id);
    w.emit(EventKind::StageEnd, id, p.global_step, max_latency);
  }
}

void stage_thread(WallWorld& w, const StageSpec& spec, Bus& bus) {
  const ScenarioConfig& cfg = *w.cfg;
  const std::string id = role_kind_name(spec.kind);
  bus.register_group(id);
  int counter = 0;
  while (!w.stop.load()) {
    auto batch =
        bus.get_ready_batch(id, spec.consumes, cfg.micro_batch_size, true, false, std::nullopt);
    if (!batch.ok()) return;  // shutdown
    double micro = 0.0;
    auto it = cfg.stage_latency.find(id);
    if (it != cfg.stage_latency.end()) {
      SplitMix64 rng(derive_seed(cfg.seed, "stage." + id, std::uint64_t(counter++)));
      micro = cfg.per_micro(it->second.draw(rng), it->second.per);
    }
    w.sleep_units(micro);
    const MicroBatch& b = batch.value();
    for (std::size_t i = 0; i < b.sample_ids.size(); ++i) {
      SampleMeta meta;
      meta.sample_id = b.sample_ids[i];
      meta.global_step = b.global_steps[i];
      meta.producer_version = b.producer_versions[i];
      meta.micro_batch_id = id;
      for (const auto& field : spec.produces) {
        Bytes payload(std::size_t(cfg.payload_bytes), std::uint8_t(i));
        bus.put_field(meta, FieldKey{field, cfg.modality_of(field)}, std::move(payload), {});
      }
    }
    bus.mark_consumed(id, b.batch_id);
    w.emit(EventKind::StageEnd, id, b.global_steps.empty() ? 0 : b.global_steps.front(), micro);
  }
}

void trainer_thread(WallWorld& w, Bus& bus) {
  const ScenarioConfig& cfg = *w.cfg;
  LoaderConfig lc;
  lc.delivery = cfg.delivery;
  lc.micro_batch_size = cfg.micro_batch_size;
  lc.global_batch_size = cfg.global_batch_size;
  lc.required_fields = trainer_fields(cfg.algorithm);
  lc.stages = cfg.pull_stages;
  StreamLoader loader(bus, "actor", lc, w.now);
  loader.attach();
  const bool drain = cfg.max_staleness == 0 || cfg.deployment == Deployment::Colocate ||
                     cfg.loader == "drain";
  TimePoint last_publish = 0.0;

  for (Version v = 0; v < cfg.steps && !w.stop.load(); ++v) {
    SplitMix64 rng(derive_seed(cfg.seed, "train", std::uint64_t(v)));
    double micro_compute = cfg.per_micro(cfg.train_latency.draw(rng), cfg.train_latency.per);
    std::vector<MicroBatch> batches;
    if (drain) {
      auto got = loader.drain_step(v);
      if (!got.ok()) {
        if (got.error().code != Errc::Shutdown) {
          w.failed.store(true);
          w.error_message = "drain failed: " + got.error().message;
        }
        return;
      }
      batches = std::move(got.value());
      for (const auto& b : batches) {
        ConsumedBatchAudit a;
        a.time = w.now();
        a.v_t = w.gate->train_version();
        a.min_producer_version = b.min_producer_version();
        a.staleness = a.v_t - a.min_producer_version;
        std::lock_guard<std::mutex> lock(w.mu);
        w.consumed.push_back(a);
      }
      for (auto& b : batches) {
        w.sleep_units(micro_compute);
        loader.ack(b);
      }
    } else {
      for (int i = 0; i < cfg.micros_per_step(); ++i) {
        auto got = loader.next_micro_batch();
        if (!got.ok()) {
          if (got.error().code != Errc::Shutdown) {
            w.failed.store(true);
            w.error_message = "fetch failed: " + got.error().message;
          }
          return;
        }
        ConsumedBatchAudit a;
        a.time = w.now();
        a.v_t = w.gate->train_version();
        a.min_producer_version = got.value().min_producer_version();
        a.staleness = a.v_t - a.min_producer_version;
        {
          std::lock_guard<std::mutex> lock(w.mu);
          w.consumed.push_back(a);
          w.metrics.staleness_hist[a.staleness] += 1;
        }
        w.sleep_units(micro_compute);
        loader.ack(got.value());
      }
    }
    // Publish and synchronize.
    Version next = v + 1;
    w.gate->record_train_version(next);
    {
      std::lock_guard<std::mutex> lock(w.mu);
      w.publish_times.push_back(w.now());
      w.metrics.step_times.push_back(w.now() - last_publish);
    }
    last_publish = w.now();
    bool durable = (next % cfg.checkpoint_every) == 0;
    std::vector<Bytes> shards;
    for (int i = 0; i < cfg.trainer_shard_count; ++i)
      shards.push_back(synthetic_shard_bytes(next, std::uint32_t(i), cfg.seed,
                                             std::size_t(cfg.weight_shard_bytes)));
    auto meta = w.store->register_checkpoint(next, shards, durable, w.now());
    if (meta.ok()) {
      auto report = w.sync->broadcast_weights(next);
      if (!report.ok() || report.value().state != BarrierOutcome::Complete)
        SF_LOG_WARN("wall barrier incomplete at version %lld", (long long)next);
      w.emit(EventKind::Barrier, "dcs", next, report.ok() ? report.value().duration : 0.0);
    }
    loader.advance_step();
    if (next > cfg.max_staleness + 1) bus.gc_before(next - cfg.max_staleness - 1);
  }
  {
    std::lock_guard<std::mutex> lock(w.mu);
    const auto& ws = loader.wait_stats();
    for (double x : ws.per_fetch_wait) w.trainer_waits.push_back(x);
    w.metrics.idle_ratio = ws.idle_ratio();
  }
  w.stop.store(true);
}

}  // namespace

Result<RunResult> run_scenario_wall(const ScenarioConfig& cfg) {
  if (auto st = validate_scenario(cfg); !st.ok()) return Result<RunResult>(st.error());
  auto roles = plan_roles(cfg.algorithm, cfg.deployment, cfg.replicas);
  if (!roles.ok()) return Result<RunResult>(roles.error());

  WallWorld w;
  w.cfg = &cfg;
  auto start = std::chrono::steady_clock::now();
  const double ms_per_unit = cfg.wall_ms_per_unit;
  w.now = [start, ms_per_unit] {
    auto d = std::chrono::steady_clock::now() - start;
    double ms = std::chrono::duration<double, std::milli>(d).count();
    return ms / ms_per_unit;
  };
  w.sleep_units = [ms_per_unit](double units) {
    if (units <= 0.0) return;
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(units * ms_per_unit));
  };

  w.queue = std::make_shared<TransferQueue>(w.now);
  GatePolicy policy{cfg.max_staleness, std::uint64_t(cfg.global_batch_size),
                    std::uint32_t(cfg.micro_batch_size), cfg.mode_threshold};
  w.gate = std::make_unique<StalenessGate>(policy);
  w.store = std::make_unique<CheckpointStore>(wall_checkpoint_dir(cfg));
  w.sync = std::make_unique<WeightSyncCoordinator>(*w.store, w.now);
  w.sync->on_replica_version = [&w](const std::string& id, Version v) {
    w.gate->set_replica_version(id, v);
  };
  w.health.configure(HealthThresholds{cfg.heartbeat_period, cfg.suspect_misses,
                                      cfg.fail_misses, cfg.max_retries});

  auto server = QueueServer::start(w.queue, 0);
  if (!server.ok()) return Result<RunResult>(server.error());
  w.server = std::move(server.value());

  // One bus client per role: TCP clients against the served queue.
  auto make_bus = [&]() -> Result<Bus*> {
    auto client = TcpQueueClient::connect("127.0.0.1", w.server->port());
    if (!client.ok()) return Result<Bus*>(client.error());
    w.clients.push_back(std::move(client.value()));
    return Result<Bus*>(w.clients.back().get());
  };

  // Replicas: TCP weight receivers plus gate registration.
  std::vector<std::string> replica_ids;
  for (int i = 0; i < cfg.replicas; ++i) {
    std::string id = "rollout-" + std::to_string(i);
    replica_ids.push_back(id);
    auto receiver = WeightReceiverServer::start(id, 0);
    if (!receiver.ok()) return Result<RunResult>(receiver.error());
    w.sync->add_replica(
        std::make_shared<TcpReplicaEndpoint>(id, "127.0.0.1", receiver.value()->port()));
    w.receivers.push_back(std::move(receiver.value()));
    w.gate->register_replica(id, 0);
    w.health.register_role(
        RoleSpecInfo{id, RoleKind::Rollout, cfg.statefulness_of(RoleKind::Rollout), 1.0}, 0.0);
  }
  w.store->register_checkpoint(0, {Bytes{0x5f}}, true, 0.0);
  w.queue->register_group("actor");

  std::vector<std::thread> threads;
  for (const auto& id : replica_ids) {
    auto bus = make_bus();
    if (!bus.ok()) return Result<RunResult>(bus.error());
    threads.emplace_back([&w, id, b = bus.value()] { rollout_thread(w, id, *b); });
  }
  for (const auto& s : cfg.algorithm.stages) {
    if (s.kind == RoleKind::Rollout || s.kind == RoleKind::Actor) continue;
    auto bus = make_bus();
    if (!bus.ok()) return Result<RunResult>(bus.error());
    w.health.register_role(
        RoleSpecInfo{role_kind_name(s.kind), s.kind, cfg.statefulness_of(s.kind), 1.0}, 0.0);
    threads.emplace_back([&w, &s, b = bus.value()] { stage_thread(w, s, *b); });
  }
  auto trainer_bus = make_bus();
  if (!trainer_bus.ok()) return Result<RunResult>(trainer_bus.error());
  w.health.register_role(RoleSpecInfo{"actor", RoleKind::Actor,
                                      cfg.statefulness_of(RoleKind::Actor), 1.0},
                         0.0);
  std::thread trainer([&w, b = trainer_bus.value()] { trainer_thread(w, *b); });

  // Monitoring daemon: heartbeats and threshold polling for observability.
  std::thread monitor([&w, &cfg, &replica_ids] {
    while (!w.stop.load()) {
      for (const auto& id : replica_ids) w.health.heartbeat(id, w.now());
      for (const auto& s : cfg.algorithm.stages)
        if (s.kind != RoleKind::Rollout) w.health.heartbeat(role_kind_name(s.kind), w.now());
      w.health.heartbeat("actor", w.now());
      w.health.poll(w.now());
      std::this_thread::sleep_for(
          std::chrono::duration<double, std::milli>(cfg.heartbeat_period * cfg.wall_ms_per_unit));
    }
  });

  trainer.join();
  w.stop.store(true);
  w.gate->shutdown();
  w.queue->shutdown();
  w.server->stop();
  for (auto& t : threads) t.join();
  monitor.join();
  for (auto& r : w.receivers) r->stop();

  if (w.failed.load()) return Result<RunResult>::err(Errc::Internal, w.error_message);

  MetricsReport& m = w.metrics;
  m.mode = cfg.mode_string();
  m.max_staleness = cfg.max_staleness;
  m.seed = cfg.seed;
  m.steps = cfg.steps;
  m.warmup_steps = std::min<int>(cfg.effective_warmup(), std::max(0, int(m.step_times.size()) - 1));
  m.total_time = w.publish_times.empty() ? 0.0 : w.publish_times.back();
  m.finalize();

  RunResult result;
  result.metrics = std::move(w.metrics);
  result.trace = std::move(w.trace);
  result.consumed_batches = std::move(w.consumed);
  auto qs = w.queue->stats();
  if (qs.ok()) result.final_queue_stats = qs.value();
  result.gate_callers = w.gate->acquire_callers();
  result.trainer_fetch_waits = std::move(w.trainer_waits);
  return result;
}

}  // namespace staleflow
