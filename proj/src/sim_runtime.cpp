// SPDX-License-Identifier: Apache-2.0
//
// Virtual-clock backend: role actors exchange data only through the bus and
// weight-sync services, driven by a deterministic discrete-event engine.
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <set>

#include "staleflow/log.hpp"
#include "staleflow/queue_service.hpp"
#include "staleflow/sim.hpp"
#include "staleflow/staleness.hpp"
#include "staleflow/stream_loader.hpp"
#include "staleflow/transfer_queue.hpp"
#include "staleflow/weight_sync.hpp"

namespace staleflow {

namespace {

std::filesystem::path fresh_checkpoint_dir(const ScenarioConfig& cfg) {
  if (!cfg.checkpoint_dir.empty()) return cfg.checkpoint_dir;
  static std::atomic<std::uint64_t> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("staleflow-ckpt-" + std::to_string(std::uint64_t(::getpid())) + "-" +
              std::to_string(counter.fetch_add(1)));
  return dir;
}

struct World;

struct ReplicaActor {
  std::string id;
  int index = 0;
  std::string pool_id;
  ReplicaLifecycle lifecycle;
  bool alive = true;
  int incarnation = 0;
  bool busy = false;
  bool holds_pool = false;
  bool gate_blocked = false;
  bool wake_pending = false;
  bool paused = false;
  TimePoint pause_start = 0.0;
};

struct StageActor {
  std::string id;  // role kind name
  RoleKind kind = RoleKind::Critic;
  std::string pool_id;
  std::vector<std::string> consumes;
  std::vector<std::string> produces;
  bool alive = true;
  int incarnation = 0;
  bool busy = false;
  bool holds_pool = false;
  bool data_blocked = false;
  bool wake_pending = false;
  TimePoint wait_start = 0.0;
  int fetch_counter = 0;
  Step drain_step = 0;
  std::deque<MicroBatch> drained;
  Step last_directive_step = -1;
};

struct TrainerActor {
  std::string id = "actor";
  std::string pool_id;
  bool alive = true;
  int incarnation = 0;
  bool busy = false;
  bool holds_pool = false;
  bool data_blocked = false;
  bool wake_pending = false;
  TimePoint wait_start = 0.0;
  int consumed_in_version = 0;
  Step drain_step = 0;
  std::deque<MicroBatch> drained;
};

struct World {
  ScenarioConfig cfg;
  SimEngine engine;
  int epoch = 0;

  std::shared_ptr<TransferQueue> queue;
  std::unique_ptr<StalenessGate> gate;
  std::unique_ptr<CheckpointStore> store;
  std::unique_ptr<WeightSyncCoordinator> sync;
  std::map<std::string, std::shared_ptr<InProcessReplica>> endpoints;
  HealthStore health;
  std::map<std::string, SimPool> pools;
  std::unique_ptr<StreamLoader> loader;

  std::vector<std::unique_ptr<ReplicaActor>> replicas;
  std::vector<std::unique_ptr<StageActor>> stages;
  TrainerActor trainer;

  std::vector<TimelineEvent> trace;
  std::uint64_t trace_seq = 0;
  DirectiveLog directives;
  MetricsReport metrics;
  std::vector<ConsumedBatchAudit> consumed_batches;
  std::map<std::string, std::vector<std::pair<LifecycleState, LifecycleState>>> lifecycles;
  std::vector<std::pair<TimePoint, double>> trainer_waits;  // (completion time, wait)
  std::vector<TimePoint> publish_times;

  bool queue_edge = false;
  bool gate_edge = false;
  bool recovery_active = false;
  std::vector<std::string> pending_failures;
  bool done = false;
  bool failed_permanently = false;
  std::string failure_message;
  TimePoint last_publish = 0.0;
  Step last_rollout_directive = -1;
  double switch_total = 0.0;
  int next_replica_index = 0;

  bool drain_consumers() const {
    return cfg.max_staleness == 0 || cfg.deployment == Deployment::Colocate;
  }
  bool trainer_drains() const { return drain_consumers() || cfg.loader == "drain"; }

  void emit(EventKind kind, const std::string& role, Step step, double duration) {
    trace.push_back(TimelineEvent{engine.now(), trace_seq++, kind, role, step, duration});
  }

  double draw_rollout_latency(SampleId sample) {
    SplitMix64 rng(derive_seed(cfg.seed, "rollout.sample", sample));
    return cfg.rollout_latency.draw(rng);
  }
  double draw_stage_micro(const StageActor& s) {
    auto it = cfg.stage_latency.find(s.id);
    if (it == cfg.stage_latency.end()) return 0.0;
    SplitMix64 rng(derive_seed(cfg.seed, "stage." + s.id, std::uint64_t(s.fetch_counter)));
    return cfg.per_micro(it->second.draw(rng), it->second.per);
  }
  double draw_train_micro(Version version) {
    SplitMix64 rng(derive_seed(cfg.seed, "train", std::uint64_t(version)));
    return cfg.per_micro(cfg.train_latency.draw(rng), cfg.train_latency.per);
  }

  SimPool& pool(const std::string& id) { return pools.at(id); }
};

// ---------------------------------------------------------------------------
// forward declarations
// ---------------------------------------------------------------------------
void replica_loop(World& w, ReplicaActor& r);
void stage_loop(World& w, StageActor& s);
void trainer_loop(World& w);
void handle_failure(World& w, const std::string& role_id);

void kick(World& w) {
  if (w.queue_edge) {
    w.queue_edge = false;
    for (auto& s : w.stages) {
      if (s->data_blocked && !s->wake_pending && s->alive && !s->busy) {
        s->wake_pending = true;
        StageActor* sp = s.get();
        w.engine.schedule_now([&w, sp] {
          sp->wake_pending = false;
          stage_loop(w, *sp);
        });
      }
    }
    if (w.trainer.data_blocked && !w.trainer.wake_pending && w.trainer.alive && !w.trainer.busy) {
      w.trainer.wake_pending = true;
      w.engine.schedule_now([&w] {
        w.trainer.wake_pending = false;
        trainer_loop(w);
      });
    }
  }
  if (w.gate_edge) {
    w.gate_edge = false;
    for (auto& r : w.replicas) {
      if (r->gate_blocked && !r->wake_pending && r->alive && !r->busy) {
        r->wake_pending = true;
        ReplicaActor* rp = r.get();
        w.engine.schedule_now([&w, rp] {
          rp->wake_pending = false;
          replica_loop(w, *rp);
        });
      }
    }
  }
}

std::vector<Bytes> make_weight_shards(const World& w, Version v) {
  std::vector<Bytes> shards;
  for (int i = 0; i < w.cfg.trainer_shard_count; ++i)
    shards.push_back(synthetic_shard_bytes(v, std::uint32_t(i), w.cfg.seed,
                                           std::size_t(w.cfg.weight_shard_bytes)));
  return shards;
}

// ---------------------------------------------------------------------------
// rollout replicas
// ---------------------------------------------------------------------------
void finish_scale_in(World& w, ReplicaActor& r) {
  r.lifecycle.advance(LifecycleState::Removed);
  w.lifecycles[r.id] = r.lifecycle.transitions();
  w.gate->unregister_replica(r.id);
  w.sync->remove_replica(r.id);
  w.health.unregister_role(r.id);
  w.endpoints.erase(r.id);
  r.alive = false;
}

void start_generation(World& w, ReplicaActor& r, const GenerationPermit& permit) {
  const TimePoint t0 = w.engine.now();
  const int ep = w.epoch;
  const int inc = r.incarnation;
  w.emit(EventKind::StageStart, r.id, permit.global_step, 0.0);
  double max_latency = 0.0;
  const StageSpec& rollout_stage = w.cfg.algorithm.stages.front();
  for (std::uint32_t j = 0; j < permit.sample_count; ++j) {
    SampleId sid = permit.first_sample_id + j;
    double lat = w.draw_rollout_latency(sid);
    max_latency = std::max(max_latency, lat);
    w.engine.schedule(t0 + lat, [&w, &r, ep, inc, sid, permit] {
      if (w.epoch != ep || r.incarnation != inc || !r.alive) return;
      SampleMeta meta;
      meta.sample_id = sid;
      meta.global_step = permit.global_step;
      meta.producer_version = permit.granted_at_version;
      meta.micro_batch_id = r.id + "/" + std::to_string(permit.permit_id);
      const StageSpec& stage = w.cfg.algorithm.stages.front();
      for (const auto& field : stage.produces) {
        Bytes payload(std::size_t(w.cfg.payload_bytes), std::uint8_t(sid & 0xff));
        auto ack = w.queue->put_field(meta, FieldKey{field, w.cfg.modality_of(field)},
                                      std::move(payload), stage.produces);
        if (!ack.ok()) SF_LOG_WARN("put_field failed: %s", ack.error().message.c_str());
      }
      w.queue_edge = true;
    });
  }
  (void)rollout_stage;
  w.engine.schedule(t0 + max_latency, [&w, &r, ep, inc, permit, t0, max_latency] {
    if (w.epoch != ep || r.incarnation != inc || !r.alive) return;
    w.emit(EventKind::StageEnd, r.id, permit.global_step, max_latency);
    w.gate->complete_permit(permit.permit_id);
    r.busy = false;
    if (r.holds_pool) {
      w.pool(r.pool_id).release(w.engine, "rollout", "actor");
      r.holds_pool = false;
    }
    if (r.lifecycle.state() == LifecycleState::Draining) {
      finish_scale_in(w, r);
      (void)t0;
      return;
    }
    w.engine.schedule_now([&w, &r, ep, inc] {
      if (w.epoch != ep || r.incarnation != inc) return;
      replica_loop(w, r);
    });
  });
}

void replica_loop(World& w, ReplicaActor& r) {
  if (!r.alive || r.busy || w.recovery_active || w.done) return;
  if (r.lifecycle.state() != LifecycleState::Ready) return;
  auto outcome = w.gate->acquire_generation_permit(r.id);
  if (!outcome.ok()) return;  // unregistered during scale-in
  if (std::holds_alternative<GatePaused>(outcome.value())) {
    if (!r.paused) {
      r.paused = true;
      r.pause_start = w.engine.now();
    }
    r.gate_blocked = true;
    return;
  }
  GenerationPermit permit = std::get<GenerationPermit>(outcome.value());
  r.gate_blocked = false;
  if (r.paused) {
    w.emit(EventKind::PermitWait, r.id, permit.global_step, w.engine.now() - r.pause_start);
    r.paused = false;
  }
  if (permit.global_step > w.last_rollout_directive) {
    w.directives.record(DirectiveVerb::GenerateRollouts, RoleKind::Rollout, permit.global_step,
                        w.engine.now());
    w.last_rollout_directive = permit.global_step;
  }
  r.busy = true;
  const int ep = w.epoch;
  const int inc = r.incarnation;
  w.pool(r.pool_id).acquire(w.engine, "rollout", "actor", [&w, &r, ep, inc, permit] {
    if (w.epoch != ep || r.incarnation != inc || !r.alive) return;
    r.holds_pool = true;
    start_generation(w, r, permit);
  });
}

// ---------------------------------------------------------------------------
// intermediate stages
// ---------------------------------------------------------------------------
void stage_compute_next(World& w, StageActor& s);

void stage_run_batch(World& w, StageActor& s, MicroBatch batch) {
  const int ep = w.epoch;
  const int inc = s.incarnation;
  s.busy = true;
  w.pool(s.pool_id).acquire(w.engine, s.id, "actor", [&w, &s, ep, inc, batch = std::move(batch)] {
    if (w.epoch != ep || s.incarnation != inc || !s.alive) return;
    s.holds_pool = true;
    const TimePoint t0 = w.engine.now();
    double dur = w.draw_stage_micro(s);
    s.fetch_counter += 1;
    Step step = batch.global_steps.empty() ? 0 : batch.global_steps.front();
    if (step > s.last_directive_step) {
      w.directives.record(DirectiveVerb::ComputeStage, s.kind, step, t0);
      s.last_directive_step = step;
    }
    w.emit(EventKind::StageStart, s.id, step, 0.0);
    w.engine.schedule(t0 + dur, [&w, &s, ep, inc, batch, t0, dur, step] {
      if (w.epoch != ep || s.incarnation != inc || !s.alive) return;
      for (std::size_t i = 0; i < batch.sample_ids.size(); ++i) {
        SampleMeta meta;
        meta.sample_id = batch.sample_ids[i];
        meta.global_step = batch.global_steps[i];
        meta.producer_version = batch.producer_versions[i];
        meta.micro_batch_id = s.id;
        for (const auto& field : s.produces) {
          Bytes payload(std::size_t(w.cfg.payload_bytes), std::uint8_t(i & 0xff));
          auto ack = w.queue->put_field(meta, FieldKey{field, w.cfg.modality_of(field)},
                                        std::move(payload), {});
          if (!ack.ok()) SF_LOG_WARN("stage put failed: %s", ack.error().message.c_str());
        }
      }
      w.queue->mark_consumed(s.id, batch.batch_id);
      w.queue_edge = true;
      w.emit(EventKind::StageEnd, s.id, step, dur);
      if (s.holds_pool) {
        w.pool(s.pool_id).release(w.engine, s.id, "actor");
        s.holds_pool = false;
      }
      s.busy = false;
      (void)t0;
      w.engine.schedule_now([&w, &s, ep, inc] {
        if (w.epoch != ep || s.incarnation != inc) return;
        stage_loop(w, s);
      });
    });
  });
}

void stage_compute_next(World& w, StageActor& s) {
  MicroBatch batch = std::move(s.drained.front());
  s.drained.pop_front();
  stage_run_batch(w, s, std::move(batch));
}

void stage_loop(World& w, StageActor& s) {
  if (!s.alive || s.busy || w.recovery_active || w.done) return;
  if (!s.drained.empty()) {
    stage_compute_next(w, s);
    return;
  }
  const int m = w.cfg.micro_batch_size;
  if (w.drain_consumers()) {
    // Global-batch-synchronous consumption: wait for the full step.
    int ready = w.queue->ready_count(s.id, s.consumes, s.drain_step);
    if (ready < w.cfg.global_batch_size) {
      if (!s.data_blocked) {
        s.data_blocked = true;
        s.wait_start = w.engine.now();
      }
      return;
    }
    double wait = s.data_blocked ? w.engine.now() - s.wait_start : 0.0;
    if (s.data_blocked && wait > 0.0)
      w.emit(EventKind::DataWait, s.id, s.drain_step, wait);
    s.data_blocked = false;
    for (int i = 0; i < w.cfg.micros_per_step(); ++i) {
      auto batch = w.queue->get_ready_batch(s.id, s.consumes, m, false, false, s.drain_step);
      if (!batch.ok()) {
        SF_LOG_WARN("stage drain fetch failed: %s", batch.error().message.c_str());
        return;
      }
      s.drained.push_back(std::move(batch.value()));
    }
    s.drain_step += 1;
    stage_compute_next(w, s);
    return;
  }
  auto batch = w.queue->get_ready_batch(s.id, s.consumes, m, false, false);
  if (!batch.ok()) {
    if (batch.error().code == Errc::NotReady) {
      if (!s.data_blocked) {
        s.data_blocked = true;
        s.wait_start = w.engine.now();
      }
    }
    return;
  }
  double wait = s.data_blocked ? w.engine.now() - s.wait_start : 0.0;
  if (s.data_blocked && wait > 0.0)
    w.emit(EventKind::DataWait, s.id,
           batch.value().global_steps.empty() ? 0 : batch.value().global_steps.front(), wait);
  s.data_blocked = false;
  stage_run_batch(w, s, std::move(batch.value()));
}

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------
void version_boundary(World& w);

void record_consumed(World& w, const MicroBatch& batch, double wait) {
  Version v_t = w.gate->train_version();
  Version min_v = batch.min_producer_version();
  ConsumedBatchAudit audit;
  audit.time = w.engine.now();
  audit.v_t = v_t;
  audit.min_producer_version = min_v;
  audit.staleness = v_t - min_v;
  audit.min_step = *std::min_element(batch.global_steps.begin(), batch.global_steps.end());
  audit.max_step = *std::max_element(batch.global_steps.begin(), batch.global_steps.end());
  w.consumed_batches.push_back(audit);
  w.metrics.staleness_hist[audit.staleness] += 1;
  w.trainer_waits.emplace_back(w.engine.now(), wait);
  w.loader->note_fetch(wait, w.engine.now(), 0);
  if (wait > 0.0) w.emit(EventKind::DataWait, w.trainer.id, audit.min_step, wait);
}

void trainer_compute_batch(World& w, MicroBatch batch) {
  TrainerActor& t = w.trainer;
  const int ep = w.epoch;
  const int inc = t.incarnation;
  t.busy = true;
  w.pool(t.pool_id).acquire(w.engine, "actor", "actor", [&w, &t, ep, inc, batch = std::move(batch)] {
    if (w.epoch != ep || t.incarnation != inc || !t.alive) return;
    t.holds_pool = true;
    const TimePoint t0 = w.engine.now();
    Version v = w.gate->train_version();
    double dur = w.draw_train_micro(v);
    w.emit(EventKind::StageStart, t.id, v, 0.0);
    w.engine.schedule(t0 + dur, [&w, &t, ep, inc, batch, dur, v] {
      if (w.epoch != ep || t.incarnation != inc || !t.alive) return;
      w.loader->ack(batch);
      t.consumed_in_version += int(batch.size());
      w.emit(EventKind::StageEnd, t.id, v, dur);
      if (t.holds_pool) {
        w.pool(t.pool_id).release(w.engine, "actor", "actor");
        t.holds_pool = false;
      }
      t.busy = false;
      if (t.consumed_in_version >= w.cfg.global_batch_size) {
        version_boundary(w);
      } else {
        w.engine.schedule_now([&w, ep, inc] {
          if (w.epoch != ep || w.trainer.incarnation != inc) return;
          trainer_loop(w);
        });
      }
    });
  });
}

void trainer_loop(World& w) {
  TrainerActor& t = w.trainer;
  if (!t.alive || t.busy || w.recovery_active || w.done) return;
  if (!t.drained.empty()) {
    MicroBatch batch = std::move(t.drained.front());
    t.drained.pop_front();
    trainer_compute_batch(w, std::move(batch));
    return;
  }
  if (t.consumed_in_version >= w.cfg.global_batch_size) return;  // boundary pending
  if (w.trainer_drains()) {
    auto got = w.loader->try_drain(t.drain_step);
    if (!got.ok()) {
      if (got.error().code == Errc::NotReady) {
        if (!t.data_blocked) {
          t.data_blocked = true;
          t.wait_start = w.engine.now();
        }
      }
      return;
    }
    double wait = t.data_blocked ? w.engine.now() - t.wait_start : 0.0;
    t.data_blocked = false;
    bool first = true;
    for (auto& batch : got.value()) {
      record_consumed(w, batch, first ? wait : 0.0);
      first = false;
      t.drained.push_back(std::move(batch));
    }
    t.drain_step += 1;
    trainer_loop(w);
    return;
  }
  auto batch = w.loader->try_next();
  if (!batch.ok()) {
    if (batch.error().code == Errc::NotReady || batch.error().code == Errc::StepBoundary) {
      if (!t.data_blocked) {
        t.data_blocked = true;
        t.wait_start = w.engine.now();
      }
    }
    return;
  }
  double wait = t.data_blocked ? w.engine.now() - t.wait_start : 0.0;
  t.data_blocked = false;
  record_consumed(w, batch.value(), wait);
  trainer_compute_batch(w, std::move(batch.value()));
}

void version_boundary(World& w) {
  TrainerActor& t = w.trainer;
  const Version v = w.gate->train_version() + 1;
  const int ep = w.epoch;
  const int inc = t.incarnation;
  w.directives.record(DirectiveVerb::TrainStep, RoleKind::Actor, v, w.engine.now());
  auto st = w.gate->record_train_version(v);
  if (!st.ok()) {
    w.failed_permanently = true;
    w.failure_message = "version publication failed: " + st.error().message;
    return;
  }
  w.publish_times.push_back(w.engine.now());
  w.metrics.step_times.push_back(w.engine.now() - w.last_publish);
  w.last_publish = w.engine.now();
  w.emit(EventKind::Barrier, "dcs", v, w.cfg.sync_latency);
  t.busy = true;
  w.engine.schedule(w.engine.now() + w.cfg.sync_latency, [&w, &t, ep, inc, v] {
    if (w.epoch != ep || t.incarnation != inc) return;
    bool durable = (v % w.cfg.checkpoint_every) == 0;
    auto meta = w.store->register_checkpoint(v, make_weight_shards(w, v), durable, w.engine.now());
    if (!meta.ok()) {
      SF_LOG_WARN("checkpoint registration failed: %s", meta.error().message.c_str());
    } else if (durable) {
      w.directives.record(DirectiveVerb::Checkpoint, RoleKind::Actor, v, w.engine.now());
      w.store->gc_checkpoints(w.cfg.checkpoint_keep);
    }
    auto report = w.sync->broadcast_weights(v);
    w.directives.record(DirectiveVerb::SyncWeights, RoleKind::Actor, v, w.engine.now());
    if (!report.ok() || report.value().state != BarrierOutcome::Complete)
      SF_LOG_WARN("weight barrier incomplete at version %lld", (long long)v);
    t.consumed_in_version = 0;
    w.loader->advance_step();
    if (v > w.cfg.max_staleness + 1)
      w.queue->gc_before(v - w.cfg.max_staleness - 1);  // StepStillReferenced just skips
    if (v >= w.cfg.steps) {
      w.done = true;
      w.directives.record(DirectiveVerb::Shutdown, RoleKind::Actor, v, w.engine.now());
      return;
    }
    t.busy = false;
    trainer_loop(w);
  });
}

// ---------------------------------------------------------------------------
// health, faults, recovery
// ---------------------------------------------------------------------------
void relaunch_world(World& w, Version restored, const std::string& failed_role, TimePoint began,
                    double downtime);

void execute_recovery(World& w, const RecoveryPlan& plan) {
  w.recovery_active = true;
  w.health.begin_recovery(plan.role_id, plan.kind);
  const TimePoint began = w.engine.now();

  if (plan.kind == PlanKind::InPlace) {
    // Only the failed role is touched: its unacknowledged deliveries return to
    // the pool, its incarnation advances, nothing else observes a change.
    StageActor* target = nullptr;
    for (auto& s : w.stages)
      if (s->id == plan.role_id) target = s.get();
    if (target && target->holds_pool) {
      w.pool(target->pool_id).release(w.engine, target->id, "actor");
      target->holds_pool = false;
    }
    if (target) w.queue->requeue_unconsumed(target->id);
    w.engine.schedule(began + w.cfg.inplace_restart_cost, [&w, target, plan, began] {
      double downtime = w.engine.now() - began;
      if (target) {
        target->incarnation += 1;
        target->alive = true;
        target->busy = false;
        target->data_blocked = false;
        target->drained.clear();
      }
      w.health.finish_recovery(plan.role_id, plan.kind, w.engine.now(), true, "restarted in place");
      w.emit(EventKind::Recovery, plan.role_id, w.gate->train_version(), downtime);
      w.metrics.recoveries.push_back(
          RecoveryRecord{began, PlanKind::InPlace, plan.role_id, downtime, -1});
      w.recovery_active = false;
      w.queue_edge = true;
      w.gate_edge = true;
      if (target) stage_loop(w, *target);
      if (!w.pending_failures.empty()) {
        std::string next = w.pending_failures.front();
        w.pending_failures.erase(w.pending_failures.begin());
        handle_failure(w, next);
      }
    });
    return;
  }

  // Global restart: tear down bus partitions, abort barriers, relaunch all
  // roles from the last durable checkpoint.
  w.epoch += 1;  // poisons every scheduled continuation
  auto restored = w.store->latest(true);
  if (!restored.ok()) {
    w.failed_permanently = true;
    w.failure_message = "global restart with no durable checkpoint";
    w.recovery_active = false;
    return;
  }
  Version version = restored.value();
  w.engine.schedule(began + w.cfg.global_restart_cost, [&w, version, plan, began] {
    relaunch_world(w, version, plan.role_id, began, w.engine.now() - began);
  });
}

void handle_failure(World& w, const std::string& role_id) {
  if (w.recovery_active) {
    w.pending_failures.push_back(role_id);
    return;
  }
  auto plan = w.health.classify_failure(role_id);
  if (!plan.ok()) return;  // not actually failed (already recovered)
  execute_recovery(w, plan.value());
}

void apply_fault(World& w, const FaultSpec& fault) {
  w.emit(EventKind::Fault, fault.role_id, w.gate->train_version(), 0.0);
  bool found = false;
  for (auto& r : w.replicas)
    if (r->id == fault.role_id) {
      r->alive = false;
      found = true;
    }
  for (auto& s : w.stages)
    if (s->id == fault.role_id) {
      s->alive = false;
      found = true;
    }
  if (w.trainer.id == fault.role_id) {
    w.trainer.alive = false;
    found = true;
  }
  if (!found) {
    SF_LOG_WARN("fault names unknown role '%s'", fault.role_id.c_str());
    return;
  }
  if (fault.fault == "crash") {
    w.health.report_crash(fault.role_id, w.engine.now(), "injected crash");
    handle_failure(w, fault.role_id);
  }
  // "hang": silent; the monitoring daemon notices missed heartbeats.
}

void monitor_tick(World& w) {
  if (!w.recovery_active && !w.done) {
    for (auto& r : w.replicas)
      if (r->alive && r->lifecycle.state() == LifecycleState::Ready)
        w.health.heartbeat(r->id, w.engine.now());
    for (auto& s : w.stages)
      if (s->alive) w.health.heartbeat(s->id, w.engine.now());
    if (w.trainer.alive) w.health.heartbeat(w.trainer.id, w.engine.now());
    auto transitions = w.health.poll(w.engine.now());
    for (const auto& tr : transitions) {
      if (tr.to == RoleStatus::Failed) handle_failure(w, tr.role_id);
    }
  }
  if (!w.done && !w.failed_permanently)
    w.engine.schedule(w.engine.now() + w.cfg.heartbeat_period, [&w] { monitor_tick(w); });
}

// ---------------------------------------------------------------------------
// scaling
// ---------------------------------------------------------------------------
void add_rollout_replica(World& w) {
  auto actor = std::make_unique<ReplicaActor>();
  actor->index = w.next_replica_index++;
  actor->id = "rollout-" + std::to_string(actor->index);
  actor->pool_id =
      w.cfg.deployment == Deployment::Colocate ? "pool.shared" : "pool.rollout";
  ReplicaActor* rp = actor.get();
  w.replicas.push_back(std::move(actor));

  rp->lifecycle.advance(LifecycleState::Initializing);
  auto endpoint = std::make_shared<InProcessReplica>(rp->id);
  w.endpoints[rp->id] = endpoint;
  w.sync->add_replica(endpoint);
  w.health.register_role(
      RoleSpecInfo{rp->id, RoleKind::Rollout, w.cfg.statefulness_of(RoleKind::Rollout), 1.0},
      w.engine.now());
  w.gate->register_replica(rp->id, 0);
  const int ep = w.epoch;
  // Weight load is the initialization cost; the replica becomes Ready holding
  // the current version.
  w.engine.schedule(w.engine.now() + w.cfg.sync_latency, [&w, rp, ep] {
    if (w.epoch != ep || rp->lifecycle.state() != LifecycleState::Initializing) return;
    auto v = w.sync->load_latest(rp->id);
    if (!v.ok()) {
      SF_LOG_WARN("scale-out weight load failed: %s", v.error().message.c_str());
      w.gate->set_replica_version(rp->id, w.gate->train_version());
    }
    rp->lifecycle.advance(LifecycleState::Ready);
    w.lifecycles[rp->id] = rp->lifecycle.transitions();
    replica_loop(w, *rp);
  });
}

void apply_scale(World& w, const ScaleEvent& ev) {
  if (ev.delta > 0) {
    for (int i = 0; i < ev.delta; ++i) add_rollout_replica(w);
    return;
  }
  int to_remove = -ev.delta;
  for (auto it = w.replicas.rbegin(); it != w.replicas.rend() && to_remove > 0; ++it) {
    ReplicaActor& r = **it;
    if (r.lifecycle.state() != LifecycleState::Ready) continue;
    r.lifecycle.advance(LifecycleState::Draining);
    w.lifecycles[r.id] = r.lifecycle.transitions();
    --to_remove;
    if (!r.busy) finish_scale_in(w, r);
    // Busy replicas finish their in-flight micro-batch first.
  }
}

// ---------------------------------------------------------------------------
// world assembly / restart
// ---------------------------------------------------------------------------
void register_groups(World& w) {
  for (auto& s : w.stages) w.queue->register_group(s->id);
  LoaderConfig lc;
  lc.delivery = w.cfg.delivery;
  lc.micro_batch_size = w.cfg.micro_batch_size;
  lc.global_batch_size = w.cfg.global_batch_size;
  lc.required_fields = trainer_fields(w.cfg.algorithm);
  lc.stages = w.cfg.pull_stages;
  lc.on_policy = false;  // the trainer actor enforces the per-version quota
  w.loader = std::make_unique<StreamLoader>(*w.queue, "actor", lc,
                                            [&w] { return w.engine.now(); });
  w.loader->attach();
}

void relaunch_world(World& w, Version restored, const std::string& failed_role, TimePoint began,
                    double downtime) {
  // Fresh data plane; pre-restart samples are discarded with it.
  w.queue = std::make_shared<TransferQueue>([&w] { return w.engine.now(); });
  w.gate->reset_to_version(restored);
  w.health.reset_all(w.engine.now());
  for (auto& pool : w.pools) pool.second.reset();
  for (auto& r : w.replicas) {
    if (r->lifecycle.state() == LifecycleState::Removed) continue;
    r->alive = true;
    r->incarnation += 1;
    r->busy = false;
    r->holds_pool = false;
    r->gate_blocked = false;
    r->paused = false;
  }
  for (auto& s : w.stages) {
    s->alive = true;
    s->incarnation += 1;
    s->busy = false;
    s->holds_pool = false;
    s->data_blocked = false;
    s->drained.clear();
    s->drain_step = restored;
    s->last_directive_step = restored - 1;
  }
  w.trainer.alive = true;
  w.trainer.incarnation += 1;
  w.trainer.busy = false;
  w.trainer.holds_pool = false;
  w.trainer.data_blocked = false;
  w.trainer.drained.clear();
  w.trainer.consumed_in_version = 0;
  w.trainer.drain_step = restored;
  w.last_rollout_directive = restored - 1;
  register_groups(w);
  w.health.finish_recovery(failed_role, PlanKind::Global, w.engine.now(), true,
                           "global restart at version " + std::to_string(restored));
  w.emit(EventKind::Recovery, failed_role, restored, downtime);
  w.metrics.recoveries.push_back(
      RecoveryRecord{began, PlanKind::Global, failed_role, downtime, restored});
  w.recovery_active = false;
  for (auto& r : w.replicas) replica_loop(w, *r);
  for (auto& s : w.stages) stage_loop(w, *s);
  trainer_loop(w);
  if (!w.pending_failures.empty()) w.pending_failures.clear();  // resolved by the restart
}

}  // namespace

Result<RunResult> run_scenario_virtual(const ScenarioConfig& cfg) {
  if (auto st = validate_scenario(cfg); !st.ok()) return Result<RunResult>(st.error());
  auto roles = plan_roles(cfg.algorithm, cfg.deployment, cfg.replicas);
  if (!roles.ok()) return Result<RunResult>(roles.error());

  World w;
  w.cfg = cfg;
  w.queue = std::make_shared<TransferQueue>([&w] { return w.engine.now(); });
  GatePolicy policy;
  policy.max_staleness = cfg.max_staleness;
  policy.global_batch_size = std::uint64_t(cfg.global_batch_size);
  policy.micro_batch_size = std::uint32_t(cfg.micro_batch_size);
  policy.mode_threshold = cfg.mode_threshold;
  w.gate = std::make_unique<StalenessGate>(policy);
  w.gate->set_wakeup_hook([&w] { w.gate_edge = true; });
  w.store = std::make_unique<CheckpointStore>(fresh_checkpoint_dir(cfg));
  w.sync = std::make_unique<WeightSyncCoordinator>(*w.store, [&w] { return w.engine.now(); });
  w.sync->on_replica_version = [&w](const std::string& id, Version v) {
    w.gate->set_replica_version(id, v);
  };
  w.sync->on_replica_fault = [&w](const std::string& id, const std::string& why) {
    w.health.report_crash(id, w.engine.now(), why);
  };
  if (cfg.replica_shard_count > 0) w.sync->set_replica_shard_count(cfg.replica_shard_count);
  w.health.configure(HealthThresholds{cfg.heartbeat_period, cfg.suspect_misses,
                                      cfg.fail_misses, cfg.max_retries});

  // Pools, stage and trainer actors from the deployment plan.
  for (const auto& handle : roles.value()) {
    if (!w.pools.count(handle.pool_id)) {
      bool multiplexed = cfg.deployment == Deployment::Colocate;
      w.pools.emplace(handle.pool_id,
                      SimPool(handle.pool_id, multiplexed, cfg.switch_overhead));
      w.pools.at(handle.pool_id).set_switch_hook([&w](double overhead) {
        w.emit(EventKind::Switch, "pool.shared", w.gate->train_version(), overhead);
        w.switch_total += overhead;
      });
    }
    if (handle.kind == RoleKind::Rollout) continue;  // replicas created below
    if (handle.kind == RoleKind::Actor) {
      w.trainer.pool_id = handle.pool_id;
      w.health.register_role(RoleSpecInfo{handle.role_id, handle.kind,
                                          cfg.statefulness_of(handle.kind), 1.0},
                             0.0);
      continue;
    }
    auto stage = std::make_unique<StageActor>();
    stage->id = handle.role_id;
    stage->kind = handle.kind;
    stage->pool_id = handle.pool_id;
    const StageSpec* spec = find_stage(cfg.algorithm, handle.kind);
    stage->consumes = spec->consumes;
    stage->produces = spec->produces;
    w.stages.push_back(std::move(stage));
    w.health.register_role(
        RoleSpecInfo{handle.role_id, handle.kind, cfg.statefulness_of(handle.kind), 1.0}, 0.0);
  }

  // Initial checkpoint anchors global restarts before the first cadence hit.
  w.store->register_checkpoint(0, make_weight_shards(w, 0), true, 0.0);

  // Rollout replicas traverse the scale-out lifecycle at t=0.
  for (int i = 0; i < cfg.replicas; ++i) {
    auto actor = std::make_unique<ReplicaActor>();
    actor->index = w.next_replica_index++;
    actor->id = "rollout-" + std::to_string(actor->index);
    actor->pool_id = cfg.deployment == Deployment::Colocate ? "pool.shared" : "pool.rollout";
    actor->lifecycle.advance(LifecycleState::Initializing);
    auto endpoint = std::make_shared<InProcessReplica>(actor->id);
    w.endpoints[actor->id] = endpoint;
    w.sync->add_replica(endpoint);
    w.health.register_role(
        RoleSpecInfo{actor->id, RoleKind::Rollout, cfg.statefulness_of(RoleKind::Rollout), 1.0},
        0.0);
    w.gate->register_replica(actor->id, 0);
    actor->lifecycle.advance(LifecycleState::Ready);
    w.lifecycles[actor->id] = actor->lifecycle.transitions();
    w.replicas.push_back(std::move(actor));
  }

  register_groups(w);
  w.engine.set_post_event_hook([&w] { kick(w); });

  // Seed events.
  w.engine.schedule(0.0, [&w] {
    for (auto& r : w.replicas) replica_loop(w, *r);
    for (auto& s : w.stages) stage_loop(w, *s);
    trainer_loop(w);
  });
  w.engine.schedule(cfg.heartbeat_period, [&w] { monitor_tick(w); });
  for (const auto& fault : cfg.faults)
    w.engine.schedule(fault.at_time, [&w, fault] { apply_fault(w, fault); });
  for (const auto& ev : cfg.scale_events)
    w.engine.schedule(ev.at_time, [&w, ev] { apply_scale(w, ev); });

  bool finished = w.engine.run([&w] { return w.done || w.failed_permanently; });
  if (!finished)
    return Result<RunResult>::err(Errc::Internal, "event budget exhausted (likely deadlock)");
  if (w.failed_permanently)
    return Result<RunResult>::err(Errc::RecoveryFailedPermanently, w.failure_message);
  if (!w.done)
    return Result<RunResult>::err(Errc::Internal, "run ended before reaching target steps");

  // Metrics.
  MetricsReport& m = w.metrics;
  m.mode = cfg.mode_string();
  m.max_staleness = cfg.max_staleness;
  m.seed = cfg.seed;
  m.steps = cfg.steps;
  m.warmup_steps = std::min<int>(cfg.effective_warmup(), std::max(0, int(m.step_times.size()) - 1));
  m.switch_total = w.switch_total;
  m.total_time = w.last_publish;
  m.finalize();
  // Trainer idle: waits inside the post-warmup window over that window's span.
  double window_start =
      m.warmup_steps > 0 && std::size_t(m.warmup_steps) <= w.publish_times.size()
          ? w.publish_times[std::size_t(m.warmup_steps) - 1]
          : 0.0;
  double window = w.last_publish - window_start;
  double wait_sum = 0.0;
  for (const auto& [at, wait] : w.trainer_waits)
    if (at > window_start) wait_sum += wait;
  m.idle_ratio = window > 0.0 ? std::min(1.0, wait_sum / window) : 0.0;
  int post = std::max(1, int(m.step_times.size()) - m.warmup_steps);
  m.data_wait_per_step = wait_sum / post;

  RunResult result;
  result.metrics = std::move(w.metrics);
  result.trace = std::move(w.trace);
  result.directives = std::move(w.directives);
  result.gate_callers = w.gate->acquire_callers();
  result.consumed_batches = std::move(w.consumed_batches);
  auto qs = w.queue->stats();
  if (qs.ok()) result.final_queue_stats = qs.value();
  for (auto& r : w.replicas) w.lifecycles[r->id] = r->lifecycle.transitions();
  result.replica_lifecycles = std::move(w.lifecycles);
  for (const auto& [at, wait] : w.trainer_waits) result.trainer_fetch_waits.push_back(wait);
  return result;
}

Result<RunResult> run_scenario(const ScenarioConfig& cfg) {
  if (cfg.transport == Transport::Tcp) return run_scenario_wall(cfg);
  return run_scenario_virtual(cfg);
}

}  // namespace staleflow
