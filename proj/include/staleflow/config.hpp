// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "staleflow/controller.hpp"
#include "staleflow/rng.hpp"
#include "staleflow/stream_loader.hpp"
#include "staleflow/types.hpp"

namespace staleflow {

struct FaultSpec {
  TimePoint at_time = 0.0;
  std::string role_id;
  std::string fault;  // "crash" (explicit report) or "hang" (heartbeat silence)
};

struct ScaleEvent {
  TimePoint at_time = 0.0;
  int delta = 0;  // rollout replicas added (+) or drained (-)
};

// One config file drives every mode; the execution mode is never a separate
// command, only the staleness knob and deployment change.
struct ScenarioConfig {
  Deployment deployment = Deployment::Separated;
  int max_staleness = 1;
  int global_batch_size = 256;
  int micro_batch_size = 32;
  int replicas = 2;
  Transport transport = Transport::InProcess;
  std::uint64_t seed = 42;
  int steps = 8;
  int checkpoint_every = 10;
  int checkpoint_keep = 5;
  double switch_overhead = 10.0;  // per colocate alternation cycle (sleep+wakeup pair)
  double sync_latency = 0.0;     // trainer-side barrier cost per published version
  int mode_threshold = 2;
  int payload_bytes = 64;
  double heartbeat_period = 1.0;
  int suspect_misses = 3;
  int fail_misses = 6;
  int max_retries = 3;
  double inplace_restart_cost = 5.0;
  double global_restart_cost = 60.0;
  int warmup_steps = -1;  // -1 -> max(2, max_staleness + 1)
  DeliveryTopology delivery = DeliveryTopology::RootBroadcast;
  int pull_stages = 1;
  std::string loader = "streaming";  // or "drain" (global-batch-synchronous baseline)
  AlgorithmSpec algorithm;
  LatencyModel rollout_latency;                       // per sample
  std::map<std::string, LatencyModel> stage_latency;  // by role kind name
  LatencyModel train_latency;
  std::vector<FaultSpec> faults;
  std::vector<ScaleEvent> scale_events;
  double wall_ms_per_unit = 1.0;  // wall backend: milliseconds per virtual unit
  std::string checkpoint_dir;     // empty -> fresh temp directory
  int trainer_shard_count = 2;
  int replica_shard_count = 0;  // 0 = same as trainer side
  int weight_shard_bytes = 4096;
  std::map<std::string, std::string> statefulness_overrides;
  std::map<std::string, std::string> field_modalities;

  ScenarioConfig();

  int micros_per_step() const { return global_batch_size / micro_batch_size; }
  int effective_warmup() const {
    return warmup_steps >= 0 ? warmup_steps : std::max(2, max_staleness + 1);
  }
  Modality modality_of(const std::string& field) const;
  Statefulness statefulness_of(RoleKind kind) const;
  // Per-micro-batch processing time for a stage/train latency entry.
  double per_micro(double drawn, LatencyPer per) const;
  std::string mode_string() const;
};

// Validated config or a precise error whose message starts with the offending
// field path.
Result<ScenarioConfig> parse_scenario_json(const nlohmann::json& j);
Result<ScenarioConfig> parse_scenario_file(const std::string& path);
nlohmann::json scenario_to_json(const ScenarioConfig& config);
Status validate_scenario(const ScenarioConfig& config);

// Sweep support: assign one field by name from a string value.
Status apply_override(ScenarioConfig& config, const std::string& key, const std::string& value);

}  // namespace staleflow
