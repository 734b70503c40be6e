// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace staleflow {

using SampleId = std::uint64_t;
using BatchId = std::uint64_t;
using Version = std::int64_t;  // trainer weight version v_t / producer version v_r
using Step = std::int64_t;     // global step index
using Bytes = std::vector<std::uint8_t>;

// Virtual time unit: 1 unit == 1 second of paper time. The wall-clock backend
// reports times converted back into the same unit.
using TimePoint = double;
using NowFn = std::function<TimePoint()>;

enum class Modality : std::uint8_t { Text, Image, Audio, Video, Scalar };

const char* modality_name(Modality m);
Modality modality_from_name(const std::string& s);

struct FieldKey {
  std::string name;
  Modality modality = Modality::Scalar;

  bool operator==(const FieldKey& o) const { return name == o.name && modality == o.modality; }
};

struct SampleMeta {
  SampleId sample_id = 0;
  Step global_step = 0;
  Version producer_version = 0;
  std::string micro_batch_id;
};

enum class FieldState : std::uint8_t { Pending, Ready };

struct PutAck {
  int ready_fields = 0;  // fields of this sample that are Ready after the put
};

struct MicroBatch {
  BatchId batch_id = 0;
  std::vector<SampleId> sample_ids;        // ordered: readiness-completion, ties by id
  std::vector<std::string> field_set;      // sorted field names the consumer requested
  std::vector<Version> producer_versions;  // per sample, aligned with sample_ids
  std::vector<Step> global_steps;          // per sample, aligned with sample_ids
  // payloads[i][j] = bytes of field_set[j] for sample_ids[i]; empty unless requested
  std::vector<std::vector<Bytes>> payloads;

  std::size_t size() const { return sample_ids.size(); }
  Version min_producer_version() const;
};

struct ReadyEvent {
  SampleId sample_id = 0;
  Version producer_version = 0;
  Step global_step = 0;
  TimePoint ready_at = 0.0;
};

struct GcReport {
  std::uint64_t freed_samples = 0;
  std::uint64_t freed_bytes = 0;
};

struct QueueStats {
  std::map<Step, std::uint64_t> per_step_counts;         // retained samples per global step
  std::map<std::string, std::uint64_t> per_field_ready;  // Ready entries per field name
  std::uint64_t bytes_stored = 0;
  Version oldest_producer_version = -1;  // -1 when empty
  // conservation counters: produced == delivered_retained + ready_undelivered + pending + gced
  std::uint64_t produced = 0;
  std::uint64_t delivered_retained = 0;
  std::uint64_t ready_undelivered = 0;
  std::uint64_t pending = 0;
  std::uint64_t gced = 0;
  std::uint64_t gced_bytes = 0;
};

enum class RoleKind : std::uint8_t { Actor, Rollout, ActorFwd, Critic, Advantages, RefLogP, Reward };

const char* role_kind_name(RoleKind k);
RoleKind role_kind_from_name(const std::string& s);

enum class Deployment : std::uint8_t { Colocate, Separated };
enum class Transport : std::uint8_t { InProcess, Tcp };
enum class TrainingMode : std::uint8_t { OnPolicy, NearOnPolicy, FullyAsync };

const char* training_mode_name(TrainingMode m);

}  // namespace staleflow
