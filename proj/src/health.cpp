// SPDX-License-Identifier: Apache-2.0
#include "staleflow/health.hpp"

namespace staleflow {

const char* role_status_name(RoleStatus s) {
  switch (s) {
    case RoleStatus::Healthy: return "healthy";
    case RoleStatus::Suspect: return "suspect";
    case RoleStatus::Failed: return "failed";
    case RoleStatus::Recovering: return "recovering";
  }
  return "healthy";
}

const char* plan_kind_name(PlanKind p) {
  return p == PlanKind::InPlace ? "in_place" : "global";
}

const char* lifecycle_name(LifecycleState s) {
  switch (s) {
    case LifecycleState::Pending: return "pending";
    case LifecycleState::Initializing: return "initializing";
    case LifecycleState::Ready: return "ready";
    case LifecycleState::Draining: return "draining";
    case LifecycleState::Removed: return "removed";
  }
  return "pending";
}

Statefulness default_statefulness(RoleKind kind) {
  switch (kind) {
    case RoleKind::Actor:
    case RoleKind::Rollout:
    case RoleKind::ActorFwd:
      return Statefulness::StatefulAuthoritative;
    case RoleKind::Critic:
    case RoleKind::Advantages:
    // Reward and the frozen reference model recompute from static inputs.
    case RoleKind::RefLogP:
    case RoleKind::Reward:
      return Statefulness::StatelessRecomputable;
  }
  return Statefulness::StatefulAuthoritative;
}

HealthStore::HealthStore(HealthThresholds thresholds) : thresholds_(thresholds) {}

Status HealthStore::register_role(RoleSpecInfo spec, TimePoint now) {
  std::lock_guard<std::mutex> lock(mu_);
  Entry e;
  e.record.role_id = spec.role_id;
  e.record.last_heartbeat = now;
  e.spec = std::move(spec);
  roles_[e.spec.role_id] = std::move(e);
  return ok_status();
}

Status HealthStore::unregister_role(const std::string& role_id) {
  std::lock_guard<std::mutex> lock(mu_);
  if (!roles_.erase(role_id))
    return Status::err(Errc::UnknownRole, "role '" + role_id + "' not registered");
  return ok_status();
}

Result<Unit> HealthStore::heartbeat(const std::string& role_id, TimePoint now) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = roles_.find(role_id);
  if (it == roles_.end())
    return Result<Unit>::err(Errc::UnknownRole, "role '" + role_id + "' not registered");
  it->second.record.last_heartbeat = now;
  if (it->second.record.status == RoleStatus::Suspect)
    it->second.record.status = RoleStatus::Healthy;
  return Unit{};
}

Status HealthStore::report_crash(const std::string& role_id, TimePoint now,
                                 const std::string& reason) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = roles_.find(role_id);
  if (it == roles_.end())
    return Status::err(Errc::UnknownRole, "role '" + role_id + "' not registered");
  auto& rec = it->second.record;
  if (rec.status != RoleStatus::Failed && rec.status != RoleStatus::Recovering) {
    rec.status = RoleStatus::Failed;
    rec.failure_count += 1;
    (void)now;
    (void)reason;
  }
  return ok_status();
}

std::vector<HealthTransition> HealthStore::poll(TimePoint now) {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<HealthTransition> out;
  for (auto& [id, entry] : roles_) {
    auto& rec = entry.record;
    if (rec.status == RoleStatus::Failed || rec.status == RoleStatus::Recovering) continue;
    double silence = now - rec.last_heartbeat;
    RoleStatus next = rec.status;
    std::string reason;
    if (silence > thresholds_.fail_misses * thresholds_.heartbeat_period) {
      next = RoleStatus::Failed;
      reason = "heartbeat silence beyond failure threshold";
    } else if (silence > thresholds_.suspect_misses * thresholds_.heartbeat_period) {
      next = RoleStatus::Suspect;
      reason = "heartbeat silence beyond suspect threshold";
    } else {
      next = RoleStatus::Healthy;
    }
    if (next != rec.status) {
      out.push_back(HealthTransition{id, rec.status, next, now, reason});
      rec.status = next;
      if (next == RoleStatus::Failed) rec.failure_count += 1;
    }
  }
  return out;
}

Result<RecoveryPlan> HealthStore::classify_failure(const std::string& role_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = roles_.find(role_id);
  if (it == roles_.end())
    return Result<RecoveryPlan>::err(Errc::UnknownRole, "role '" + role_id + "' not registered");
  auto& entry = it->second;
  if (entry.record.status != RoleStatus::Failed)
    return Result<RecoveryPlan>::err(Errc::RoleNotFailed,
                                     "role '" + role_id + "' is " +
                                         role_status_name(entry.record.status));
  if (entry.spec.statefulness == Statefulness::StatefulAuthoritative)
    return RecoveryPlan{PlanKind::Global, role_id};
  // Stateless roles restart in place until the retry budget is spent; the
  // max_retries-th consecutive failure escalates.
  entry.record.consecutive_inplace += 1;
  if (entry.record.consecutive_inplace >= thresholds_.max_retries)
    return RecoveryPlan{PlanKind::Global, role_id};
  return RecoveryPlan{PlanKind::InPlace, role_id};
}

void HealthStore::begin_recovery(const std::string& role_id, PlanKind plan) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = roles_.find(role_id);
  if (it == roles_.end()) return;
  (void)plan;
  it->second.record.status = RoleStatus::Recovering;
}

void HealthStore::finish_recovery(const std::string& role_id, PlanKind plan, TimePoint now,
                                  bool success, const std::string& outcome) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = roles_.find(role_id);
  if (it == roles_.end()) return;
  auto& rec = it->second.record;
  rec.recovery_history.push_back(RecoveryEntry{now, plan, outcome});
  if (success) {
    rec.status = RoleStatus::Healthy;
    rec.last_heartbeat = now;
    if (plan == PlanKind::InPlace) rec.incarnation += 1;
    if (plan == PlanKind::Global) rec.consecutive_inplace = 0;
  } else {
    rec.status = RoleStatus::Failed;
  }
}

void HealthStore::reset_all(TimePoint now) {
  std::lock_guard<std::mutex> lock(mu_);
  for (auto& [id, entry] : roles_) {
    entry.record.status = RoleStatus::Healthy;
    entry.record.last_heartbeat = now;
    entry.record.consecutive_inplace = 0;
  }
}

Result<HealthRecord> HealthStore::record(const std::string& role_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = roles_.find(role_id);
  if (it == roles_.end())
    return Result<HealthRecord>::err(Errc::UnknownRole, "role '" + role_id + "' not registered");
  return it->second.record;
}

Result<RoleSpecInfo> HealthStore::spec(const std::string& role_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = roles_.find(role_id);
  if (it == roles_.end())
    return Result<RoleSpecInfo>::err(Errc::UnknownRole, "role '" + role_id + "' not registered");
  return it->second.spec;
}

std::vector<HealthRecord> HealthStore::all_records() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<HealthRecord> out;
  for (const auto& [id, e] : roles_) out.push_back(e.record);
  return out;
}

Status ReplicaLifecycle::advance(LifecycleState to) {
  static const std::pair<LifecycleState, LifecycleState> legal[] = {
      {LifecycleState::Pending, LifecycleState::Initializing},
      {LifecycleState::Initializing, LifecycleState::Ready},
      {LifecycleState::Ready, LifecycleState::Draining},
      {LifecycleState::Draining, LifecycleState::Removed},
  };
  for (const auto& [from, dest] : legal) {
    if (state_ == from && to == dest) {
      transitions_.emplace_back(state_, to);
      state_ = to;
      return ok_status();
    }
  }
  return Status::err(Errc::InvalidTransition,
                     std::string(lifecycle_name(state_)) + " -> " + lifecycle_name(to) +
                         " is not a legal lifecycle transition");
}

Status validate_scalable(RoleKind kind) {
  if (kind != RoleKind::Rollout)
    return Status::err(Errc::InvalidTransition,
                       std::string("role kind '") + role_kind_name(kind) + "' is not scalable");
  return ok_status();
}

}  // namespace staleflow
