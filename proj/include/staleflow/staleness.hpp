// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include "staleflow/result.hpp"
#include "staleflow/types.hpp"

namespace staleflow {

struct GatePolicy {
  int max_staleness = 1;                  // K
  std::uint64_t global_batch_size = 256;  // G
  std::uint32_t micro_batch_size = 32;    // samples per permit
  int mode_threshold = 2;                 // NearOnPolicy for 1..threshold, FullyAsync above
};

struct GenerationPermit {
  std::uint64_t permit_id = 0;
  std::string replica_id;
  Version granted_at_version = 0;  // v_r stamped on every sample of this micro-batch
  Step global_step = 0;            // batch index the samples belong to
  SampleId first_sample_id = 0;
  std::uint32_t sample_count = 0;
};

struct GatePaused {
  Version resume_when = 0;  // minimum replica version at which the gate re-opens
};

using PermitOutcome = std::variant<GenerationPermit, GatePaused>;

// Producer-side staleness control. One shared authority holds the version
// clock (trainer version v_t, per-replica v_r) and grants generation permits.
//
// The gating predicate is a pure function of gate state:
//   gap:    K == 0 ? v_r == v_t : v_t - v_r < K
//   volume: granted_samples + m <= (V + K + 1) * G,
//           V = min(v_r, versions of in-flight permits)
// The volume term generalizes the K=0 per-version quota of one global batch.
// Together with FIFO readiness delivery it bounds the staleness of every
// consumed batch by K: while a permit granted at version V is outstanding,
// at most (V + K + 1) * G samples exist in total, so a trainer consuming
// full global batches reaches at most version V + K before that permit's
// samples are delivered.
class StalenessGate {
 public:
  struct GateView {
    Version v_t = 0;
    Version v_r = 0;
    std::uint64_t granted_samples = 0;
    Version min_inflight_version = -1;  // -1 when nothing in flight
  };

  explicit StalenessGate(GatePolicy policy);

  // Pure predicate, exposed so tests can check that the stateful path never
  // deviates from it (no decision depends on anything but this view).
  static bool permit_allowed(const GatePolicy& policy, const GateView& view, std::uint32_t m);
  static Version resume_version(const GatePolicy& policy, const GateView& view, std::uint32_t m);

  Status record_train_version(Version v);
  Status register_replica(const std::string& replica_id, Version v_r);
  Status unregister_replica(const std::string& replica_id);
  Status set_replica_version(const std::string& replica_id, Version v_r);

  Result<PermitOutcome> acquire_generation_permit(const std::string& replica_id);
  // Blocking variant for the wall-clock backend; returns Shutdown on close.
  Result<GenerationPermit> acquire_generation_permit_blocking(const std::string& replica_id);
  void complete_permit(std::uint64_t permit_id);

  Version train_version() const;
  Result<Version> replica_version(const std::string& replica_id) const;
  std::map<std::string, Version> replica_versions() const;
  std::uint64_t granted_samples() const;

  static Version staleness_of(Version v_t, const std::vector<Version>& producer_versions);
  TrainingMode classify_mode() const;
  const GatePolicy& policy() const { return policy_; }

  // Edge-triggered re-evaluation: fired after version publication, replica
  // sync, and permit completion. The virtual-clock runtime uses this to wake
  // paused producers without polling.
  void set_wakeup_hook(std::function<void()> hook);

  // Global restart: clock rolls back to the checkpoint version, in-flight
  // permits are abandoned, and production restarts at that batch index.
  void reset_to_version(Version v);

  void shutdown();

  // Caller audit: every acquire call records its caller role id.
  std::vector<std::string> acquire_callers() const;

 private:
  GateView view_locked(Version v_r) const;
  void fire_wakeup_locked();

  GatePolicy policy_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool shutdown_ = false;
  Version train_version_ = 0;
  std::map<std::string, Version> replicas_;
  std::map<std::uint64_t, Version> inflight_;  // permit id -> granted_at_version
  std::uint64_t granted_samples_ = 0;
  std::uint64_t next_permit_id_ = 1;
  SampleId next_sample_id_ = 1;
  std::function<void()> wakeup_;
  std::vector<std::string> callers_;
};

}  // namespace staleflow
