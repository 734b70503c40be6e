// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "staleflow/result.hpp"
#include "staleflow/types.hpp"

namespace staleflow {

enum class RoleStatus : std::uint8_t { Healthy, Suspect, Failed, Recovering };
enum class Statefulness : std::uint8_t { StatelessRecomputable, StatefulAuthoritative };
enum class PlanKind : std::uint8_t { InPlace, Global };
enum class LifecycleState : std::uint8_t { Pending, Initializing, Ready, Draining, Removed };

const char* role_status_name(RoleStatus s);
const char* plan_kind_name(PlanKind p);
const char* lifecycle_name(LifecycleState s);

// Roles carrying authoritative weights or collective-communication state need
// a global restart; recomputable roles restart in place.
Statefulness default_statefulness(RoleKind kind);

struct RoleSpecInfo {
  std::string role_id;
  RoleKind kind = RoleKind::Actor;
  Statefulness statefulness = Statefulness::StatefulAuthoritative;
  double resource_quota = 1.0;
};

struct RecoveryEntry {
  TimePoint time = 0.0;
  PlanKind plan = PlanKind::InPlace;
  std::string outcome;
};

struct HealthRecord {
  std::string role_id;
  RoleStatus status = RoleStatus::Healthy;
  TimePoint last_heartbeat = 0.0;
  int failure_count = 0;
  int consecutive_inplace = 0;  // failures since the last global recovery / registration
  int incarnation = 0;
  std::vector<RecoveryEntry> recovery_history;
};

struct HealthThresholds {
  double heartbeat_period = 1.0;  // virtual units (or seconds on the wall backend)
  int suspect_misses = 3;
  int fail_misses = 6;
  int max_retries = 3;  // the max_retries-th consecutive failure escalates to Global
};

struct HealthTransition {
  std::string role_id;
  RoleStatus from = RoleStatus::Healthy;
  RoleStatus to = RoleStatus::Healthy;
  TimePoint at = 0.0;
  std::string reason;
};

struct RecoveryPlan {
  PlanKind kind = PlanKind::InPlace;
  std::string role_id;
};

struct RecoveryReport {
  PlanKind plan = PlanKind::InPlace;
  std::vector<std::string> affected_roles;
  double downtime = 0.0;
  Version restored_version = -1;  // meaningful for Global
};

// Serialized health authority: heartbeat records, threshold-driven state
// transitions, and failure classification. Recovery execution lives with the
// runtime; the store tracks status and history.
class HealthStore {
 public:
  explicit HealthStore(HealthThresholds thresholds = {});
  // Applies only before roles register.
  void configure(HealthThresholds thresholds) { thresholds_ = thresholds; }

  Status register_role(RoleSpecInfo spec, TimePoint now);
  Status unregister_role(const std::string& role_id);
  Result<Unit> heartbeat(const std::string& role_id, TimePoint now);
  Status report_crash(const std::string& role_id, TimePoint now, const std::string& reason);
  // Monitoring daemon tick: applies heartbeat-silence thresholds.
  std::vector<HealthTransition> poll(TimePoint now);

  Result<RecoveryPlan> classify_failure(const std::string& role_id);
  void begin_recovery(const std::string& role_id, PlanKind plan);
  void finish_recovery(const std::string& role_id, PlanKind plan, TimePoint now, bool success,
                       const std::string& outcome);
  // Global restart resets every role to a fresh healthy record.
  void reset_all(TimePoint now);

  Result<HealthRecord> record(const std::string& role_id) const;
  Result<RoleSpecInfo> spec(const std::string& role_id) const;
  std::vector<HealthRecord> all_records() const;
  const HealthThresholds& thresholds() const { return thresholds_; }

 private:
  struct Entry {
    RoleSpecInfo spec;
    HealthRecord record;
  };

  HealthThresholds thresholds_;
  mutable std::mutex mu_;
  std::map<std::string, Entry> roles_;
};

// Elastic-scaling replica lifecycle. Legal chains only:
//   Pending -> Initializing -> Ready        (scale-out)
//   Ready -> Draining -> Removed            (scale-in)
class ReplicaLifecycle {
 public:
  LifecycleState state() const { return state_; }
  Status advance(LifecycleState to);
  const std::vector<std::pair<LifecycleState, LifecycleState>>& transitions() const {
    return transitions_;
  }

 private:
  LifecycleState state_ = LifecycleState::Pending;
  std::vector<std::pair<LifecycleState, LifecycleState>> transitions_;
};

// Only Rollout replicas scale at desk scale.
Status validate_scalable(RoleKind kind);

}  // namespace staleflow
