// SPDX-License-Identifier: Apache-2.0
#include "staleflow/staleness.hpp"

#include <algorithm>

namespace staleflow {

StalenessGate::StalenessGate(GatePolicy policy) : policy_(policy) {}

bool StalenessGate::permit_allowed(const GatePolicy& policy, const GateView& view,
                                   std::uint32_t m) {
  const int k = policy.max_staleness;
  const bool gap_ok =
      k == 0 ? view.v_r == view.v_t : (view.v_t - view.v_r) < Version(k);
  if (!gap_ok) return false;
  Version v_min = view.v_r;
  if (view.min_inflight_version >= 0) v_min = std::min(v_min, view.min_inflight_version);
  const std::uint64_t cap = std::uint64_t(v_min + k + 1) * policy.global_batch_size;
  return view.granted_samples + m <= cap;
}

Version StalenessGate::resume_version(const GatePolicy& policy, const GateView& view,
                                      std::uint32_t m) {
  const int k = policy.max_staleness;
  // Version the replica must reach to satisfy the gap predicate.
  Version gap_need = k == 0 ? view.v_t : view.v_t - Version(k) + 1;
  // Version at which the volume cap admits m more samples, assuming this
  // replica is the oldest contributor.
  std::uint64_t need_total = view.granted_samples + m;
  Version vol_need =
      Version((need_total + policy.global_batch_size - 1) / policy.global_batch_size) -
      Version(k) - 1;
  return std::max(gap_need, vol_need);
}

StalenessGate::GateView StalenessGate::view_locked(Version v_r) const {
  GateView v;
  v.v_t = train_version_;
  v.v_r = v_r;
  v.granted_samples = granted_samples_;
  v.min_inflight_version = -1;
  for (const auto& [id, ver] : inflight_)
    if (v.min_inflight_version < 0 || ver < v.min_inflight_version) v.min_inflight_version = ver;
  return v;
}

Status StalenessGate::record_train_version(Version v) {
  std::lock_guard<std::mutex> lock(mu_);
  if (v != train_version_ + 1)
    return Status::err(Errc::NonMonotonicVersion,
                       "expected version " + std::to_string(train_version_ + 1) + ", got " +
                           std::to_string(v));
  train_version_ = v;
  fire_wakeup_locked();
  return ok_status();
}

Status StalenessGate::register_replica(const std::string& replica_id, Version v_r) {
  std::lock_guard<std::mutex> lock(mu_);
  if (v_r > train_version_)
    return Status::err(Errc::VersionConflict, "replica version ahead of trainer");
  replicas_[replica_id] = v_r;
  fire_wakeup_locked();
  return ok_status();
}

Status StalenessGate::unregister_replica(const std::string& replica_id) {
  std::lock_guard<std::mutex> lock(mu_);
  if (!replicas_.erase(replica_id))
    return Status::err(Errc::UnknownReplica, "replica '" + replica_id + "' not registered");
  return ok_status();
}

Status StalenessGate::set_replica_version(const std::string& replica_id, Version v_r) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = replicas_.find(replica_id);
  if (it == replicas_.end())
    return Status::err(Errc::UnknownReplica, "replica '" + replica_id + "' not registered");
  if (v_r > train_version_)
    return Status::err(Errc::VersionConflict, "replica version ahead of trainer");
  it->second = v_r;
  fire_wakeup_locked();
  return ok_status();
}

Result<PermitOutcome> StalenessGate::acquire_generation_permit(const std::string& replica_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = replicas_.find(replica_id);
  if (it == replicas_.end())
    return Result<PermitOutcome>::err(Errc::UnknownReplica,
                                      "replica '" + replica_id + "' not registered");
  callers_.push_back(replica_id);
  const std::uint32_t m = policy_.micro_batch_size;
  GateView view = view_locked(it->second);
  if (!permit_allowed(policy_, view, m))
    return PermitOutcome(GatePaused{resume_version(policy_, view, m)});

  GenerationPermit permit;
  permit.permit_id = next_permit_id_++;
  permit.replica_id = replica_id;
  permit.granted_at_version = it->second;
  permit.global_step = Step(granted_samples_ / policy_.global_batch_size);
  permit.first_sample_id = next_sample_id_;
  permit.sample_count = m;
  next_sample_id_ += m;
  granted_samples_ += m;
  inflight_.emplace(permit.permit_id, permit.granted_at_version);
  return PermitOutcome(permit);
}

Result<GenerationPermit> StalenessGate::acquire_generation_permit_blocking(
    const std::string& replica_id) {
  std::unique_lock<std::mutex> lock(mu_);
  for (;;) {
    if (shutdown_) return Result<GenerationPermit>::err(Errc::Shutdown, "gate shut down");
    auto it = replicas_.find(replica_id);
    if (it == replicas_.end())
      return Result<GenerationPermit>::err(Errc::UnknownReplica,
                                           "replica '" + replica_id + "' not registered");
    callers_.push_back(replica_id);
    const std::uint32_t m = policy_.micro_batch_size;
    GateView view = view_locked(it->second);
    if (permit_allowed(policy_, view, m)) {
      GenerationPermit permit;
      permit.permit_id = next_permit_id_++;
      permit.replica_id = replica_id;
      permit.granted_at_version = it->second;
      permit.global_step = Step(granted_samples_ / policy_.global_batch_size);
      permit.first_sample_id = next_sample_id_;
      permit.sample_count = m;
      next_sample_id_ += m;
      granted_samples_ += m;
      inflight_.emplace(permit.permit_id, permit.granted_at_version);
      return permit;
    }
    cv_.wait(lock);
  }
}

void StalenessGate::complete_permit(std::uint64_t permit_id) {
  std::lock_guard<std::mutex> lock(mu_);
  inflight_.erase(permit_id);
  fire_wakeup_locked();
}

Version StalenessGate::train_version() const {
  std::lock_guard<std::mutex> lock(mu_);
  return train_version_;
}

Result<Version> StalenessGate::replica_version(const std::string& replica_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = replicas_.find(replica_id);
  if (it == replicas_.end())
    return Result<Version>::err(Errc::UnknownReplica, "replica '" + replica_id + "' not registered");
  return it->second;
}

std::map<std::string, Version> StalenessGate::replica_versions() const {
  std::lock_guard<std::mutex> lock(mu_);
  return replicas_;
}

std::uint64_t StalenessGate::granted_samples() const {
  std::lock_guard<std::mutex> lock(mu_);
  return granted_samples_;
}

Version StalenessGate::staleness_of(Version v_t, const std::vector<Version>& producer_versions) {
  Version v_min = v_t;
  for (Version v : producer_versions) v_min = std::min(v_min, v);
  return v_t - v_min;
}

TrainingMode StalenessGate::classify_mode() const {
  const int k = policy_.max_staleness;
  if (k == 0) return TrainingMode::OnPolicy;
  if (k <= policy_.mode_threshold) return TrainingMode::NearOnPolicy;
  return TrainingMode::FullyAsync;
}

void StalenessGate::set_wakeup_hook(std::function<void()> hook) {
  std::lock_guard<std::mutex> lock(mu_);
  wakeup_ = std::move(hook);
}

void StalenessGate::fire_wakeup_locked() {
  cv_.notify_all();
  if (wakeup_) wakeup_();
}

void StalenessGate::reset_to_version(Version v) {
  std::lock_guard<std::mutex> lock(mu_);
  train_version_ = v;
  inflight_.clear();
  granted_samples_ = std::uint64_t(v) * policy_.global_batch_size;
  for (auto& [id, ver] : replicas_) ver = v;
  fire_wakeup_locked();
}

void StalenessGate::shutdown() {
  std::lock_guard<std::mutex> lock(mu_);
  shutdown_ = true;
  cv_.notify_all();
}

std::vector<std::string> StalenessGate::acquire_callers() const {
  std::lock_guard<std::mutex> lock(mu_);
  return callers_;
}

}  // namespace staleflow
