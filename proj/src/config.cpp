// SPDX-License-Identifier: Apache-2.0
#include "staleflow/config.hpp"

#include <fstream>
#include <set>

namespace staleflow {

using nlohmann::json;

ScenarioConfig::ScenarioConfig() {
  algorithm = default_algorithm();
  rollout_latency = LatencyModel::constant(0.4, LatencyPer::Sample);
  train_latency = LatencyModel::constant(2.0, LatencyPer::StepTotal);
  stage_latency["actor_fwd"] = LatencyModel::constant(0.2, LatencyPer::StepTotal);
  stage_latency["ref_logp"] = LatencyModel::constant(0.2, LatencyPer::StepTotal);
  stage_latency["reward"] = LatencyModel::constant(0.1, LatencyPer::StepTotal);
  stage_latency["advantages"] = LatencyModel::constant(0.1, LatencyPer::StepTotal);
  field_modalities = {{"prompt", "text"},   {"response", "text"}, {"image", "image"},
                      {"audio", "audio"},   {"video", "video"},   {"logp", "scalar"},
                      {"ref_logp", "scalar"}, {"reward", "scalar"}, {"advantage", "scalar"},
                      {"value", "scalar"}};
}

Modality ScenarioConfig::modality_of(const std::string& field) const {
  auto it = field_modalities.find(field);
  if (it == field_modalities.end()) return Modality::Scalar;
  return modality_from_name(it->second);
}

Statefulness ScenarioConfig::statefulness_of(RoleKind kind) const {
  auto it = statefulness_overrides.find(role_kind_name(kind));
  if (it != statefulness_overrides.end())
    return it->second == "stateful" ? Statefulness::StatefulAuthoritative
                                    : Statefulness::StatelessRecomputable;
  return default_statefulness(kind);
}

double ScenarioConfig::per_micro(double drawn, LatencyPer per) const {
  switch (per) {
    case LatencyPer::Sample: return drawn * micro_batch_size;
    case LatencyPer::Micro: return drawn;
    case LatencyPer::StepTotal: return drawn / micros_per_step();
  }
  return drawn;
}

std::string ScenarioConfig::mode_string() const {
  if (deployment == Deployment::Colocate) return "colocate";
  if (max_staleness == 0) return "on_policy";
  if (max_staleness <= mode_threshold) return "near_on_policy";
  return "fully_async";
}

namespace {

Result<LatencyModel> parse_latency(const json& j, const std::string& path,
                                   LatencyPer default_per) {
  using R = Result<LatencyModel>;
  if (!j.is_object()) return R::err(Errc::ConfigError, path + ": must be an object");
  LatencyModel m;
  m.per = default_per;
  std::string kind = j.value("kind", std::string("deterministic"));
  if (j.contains("per")) {
    std::string per = j.at("per").get<std::string>();
    if (per == "sample")
      m.per = LatencyPer::Sample;
    else if (per == "micro")
      m.per = LatencyPer::Micro;
    else if (per == "step")
      m.per = LatencyPer::StepTotal;
    else
      return R::err(Errc::ConfigError, path + ".per: must be sample|micro|step");
  }
  if (kind == "deterministic") {
    m.kind = LatencyKind::Deterministic;
    if (!j.contains("value")) return R::err(Errc::ConfigError, path + ".value: required");
    m.value = j.at("value").get<double>();
  } else if (kind == "lognormal") {
    m.kind = LatencyKind::LogNormal;
    m.mu = j.value("mu", 0.0);
    m.sigma = j.value("sigma", 0.0);
  } else if (kind == "pareto") {
    m.kind = LatencyKind::Pareto;
    m.scale = j.value("scale", 1.0);
    m.alpha = j.value("alpha", 1.5);
  } else if (kind == "empirical") {
    m.kind = LatencyKind::Empirical;
    m.samples = j.value("samples", std::vector<double>{});
  } else {
    return R::err(Errc::ConfigError, path + ".kind: unknown latency kind '" + kind + "'");
  }
  if (auto st = m.validate(path); !st.ok()) return R(st.error());
  return m;
}

json latency_to_json(const LatencyModel& m) {
  json j;
  switch (m.per) {
    case LatencyPer::Sample: j["per"] = "sample"; break;
    case LatencyPer::Micro: j["per"] = "micro"; break;
    case LatencyPer::StepTotal: j["per"] = "step"; break;
  }
  switch (m.kind) {
    case LatencyKind::Deterministic:
      j["kind"] = "deterministic";
      j["value"] = m.value;
      break;
    case LatencyKind::LogNormal:
      j["kind"] = "lognormal";
      j["mu"] = m.mu;
      j["sigma"] = m.sigma;
      break;
    case LatencyKind::Pareto:
      j["kind"] = "pareto";
      j["scale"] = m.scale;
      j["alpha"] = m.alpha;
      break;
    case LatencyKind::Empirical:
      j["kind"] = "empirical";
      j["samples"] = m.samples;
      break;
  }
  return j;
}

Result<AlgorithmSpec> parse_algorithm(const json& j) {
  using R = Result<AlgorithmSpec>;
  AlgorithmSpec spec;
  try {
    spec.name = j.value("name", std::string("custom"));
    spec.colocatable = j.value("colocatable", true);
    spec.ingest_fields = j.value("ingest_fields", std::vector<std::string>{"prompt"});
    if (!j.contains("stages")) return R::err(Errc::ConfigError, "algorithm.stages: required");
    for (const auto& s : j.at("stages")) {
      StageSpec st;
      st.kind = role_kind_from_name(s.at("role").get<std::string>());
      st.consumes = s.value("consumes", std::vector<std::string>{});
      st.produces = s.value("produces", std::vector<std::string>{});
      spec.stages.push_back(std::move(st));
    }
  } catch (const std::exception& e) {
    return R::err(Errc::ConfigError, std::string("algorithm: ") + e.what());
  }
  if (auto st = validate_algorithm(spec); !st.ok())
    return R::err(Errc::ConfigError, "algorithm: " + st.error().message);
  return spec;
}

json algorithm_to_json(const AlgorithmSpec& spec) {
  json stages = json::array();
  for (const auto& s : spec.stages)
    stages.push_back(
        {{"role", role_kind_name(s.kind)}, {"consumes", s.consumes}, {"produces", s.produces}});
  return json{{"name", spec.name},
              {"colocatable", spec.colocatable},
              {"ingest_fields", spec.ingest_fields},
              {"stages", stages}};
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "deployment", "max_staleness", "global_batch_size", "micro_batch_size", "replicas",
      "transport", "seed", "steps", "checkpoint_every", "checkpoint_keep", "switch_overhead",
      "sync_latency", "mode_threshold", "payload_bytes", "heartbeat_period", "suspect_misses",
      "fail_misses", "max_retries", "inplace_restart_cost", "global_restart_cost", "warmup_steps",
      "delivery", "pull_stages", "loader", "algorithm", "latency", "faults", "scale_events",
      "wall_ms_per_unit", "checkpoint_dir", "trainer_shard_count", "replica_shard_count",
      "weight_shard_bytes", "statefulness_overrides", "field_modalities"};
  return keys;
}

}  // namespace

Result<ScenarioConfig> parse_scenario_json(const json& j) {
  using R = Result<ScenarioConfig>;
  if (!j.is_object()) return R::err(Errc::ConfigError, "config root must be a JSON object");
  for (const auto& [key, v] : j.items())
    if (!known_keys().count(key))
      return R::err(Errc::ConfigError, key + ": unknown configuration key");

  ScenarioConfig c;
  try {
    if (j.contains("deployment")) {
      std::string d = j.at("deployment").get<std::string>();
      if (d == "colocate")
        c.deployment = Deployment::Colocate;
      else if (d == "separated")
        c.deployment = Deployment::Separated;
      else
        return R::err(Errc::ConfigError, "deployment: must be colocate|separated");
    }
    c.max_staleness = j.value("max_staleness", c.max_staleness);
    c.global_batch_size = j.value("global_batch_size", c.global_batch_size);
    c.micro_batch_size = j.value("micro_batch_size", c.micro_batch_size);
    c.replicas = j.value("replicas", c.replicas);
    if (j.contains("transport")) {
      std::string t = j.at("transport").get<std::string>();
      if (t == "in_process")
        c.transport = Transport::InProcess;
      else if (t == "tcp")
        c.transport = Transport::Tcp;
      else
        return R::err(Errc::ConfigError, "transport: must be in_process|tcp");
    }
    c.seed = j.value("seed", c.seed);
    c.steps = j.value("steps", c.steps);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.checkpoint_keep = j.value("checkpoint_keep", c.checkpoint_keep);
    c.switch_overhead = j.value("switch_overhead", c.switch_overhead);
    c.sync_latency = j.value("sync_latency", c.sync_latency);
    c.mode_threshold = j.value("mode_threshold", c.mode_threshold);
    c.payload_bytes = j.value("payload_bytes", c.payload_bytes);
    c.heartbeat_period = j.value("heartbeat_period", c.heartbeat_period);
    c.suspect_misses = j.value("suspect_misses", c.suspect_misses);
    c.fail_misses = j.value("fail_misses", c.fail_misses);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.inplace_restart_cost = j.value("inplace_restart_cost", c.inplace_restart_cost);
    c.global_restart_cost = j.value("global_restart_cost", c.global_restart_cost);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    if (j.contains("delivery")) {
      std::string d = j.at("delivery").get<std::string>();
      if (d == "root_broadcast")
        c.delivery = DeliveryTopology::RootBroadcast;
      else if (d == "per_stage_pull")
        c.delivery = DeliveryTopology::PerStagePull;
      else
        return R::err(Errc::ConfigError, "delivery: must be root_broadcast|per_stage_pull");
    }
    c.pull_stages = j.value("pull_stages", c.pull_stages);
    c.loader = j.value("loader", c.loader);
    if (c.loader != "streaming" && c.loader != "drain")
      return R::err(Errc::ConfigError, "loader: must be streaming|drain");
    if (j.contains("algorithm")) {
      auto alg = parse_algorithm(j.at("algorithm"));
      if (!alg.ok()) return R(alg.error());
      c.algorithm = std::move(alg.value());
    }
    if (j.contains("latency")) {
      const json& lat = j.at("latency");
      if (!lat.is_object()) return R::err(Errc::ConfigError, "latency: must be an object");
      for (const auto& [key, v] : lat.items()) {
        if (key == "rollout_per_sample") {
          auto m = parse_latency(v, "latency.rollout_per_sample", LatencyPer::Sample);
          if (!m.ok()) return R(m.error());
          c.rollout_latency = m.value();
        } else if (key == "train") {
          auto m = parse_latency(v, "latency.train", LatencyPer::StepTotal);
          if (!m.ok()) return R(m.error());
          c.train_latency = m.value();
        } else {
          // stage entry keyed by role kind name
          try {
            role_kind_from_name(key);
          } catch (const std::exception&) {
            return R::err(Errc::ConfigError, "latency." + key + ": unknown stage");
          }
          auto m = parse_latency(v, "latency." + key, LatencyPer::StepTotal);
          if (!m.ok()) return R(m.error());
          c.stage_latency[key] = m.value();
        }
      }
    }
    if (j.contains("faults")) {
      c.faults.clear();
      for (const auto& f : j.at("faults")) {
        FaultSpec fs;
        fs.at_time = f.at("at_time").get<double>();
        fs.role_id = f.at("role_id").get<std::string>();
        fs.fault = f.value("fault", std::string("crash"));
        if (fs.fault != "crash" && fs.fault != "hang")
          return R::err(Errc::ConfigError, "faults.fault: must be crash|hang");
        c.faults.push_back(std::move(fs));
      }
    }
    if (j.contains("scale_events")) {
      c.scale_events.clear();
      for (const auto& s : j.at("scale_events"))
        c.scale_events.push_back(
            ScaleEvent{s.at("at_time").get<double>(), s.at("delta").get<int>()});
    }
    c.wall_ms_per_unit = j.value("wall_ms_per_unit", c.wall_ms_per_unit);
    c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
    c.trainer_shard_count = j.value("trainer_shard_count", c.trainer_shard_count);
    c.replica_shard_count = j.value("replica_shard_count", c.replica_shard_count);
    c.weight_shard_bytes = j.value("weight_shard_bytes", c.weight_shard_bytes);
    if (j.contains("statefulness_overrides")) {
      c.statefulness_overrides.clear();
      for (const auto& [key, v] : j.at("statefulness_overrides").items()) {
        std::string s = v.get<std::string>();
        if (s != "stateless" && s != "stateful")
          return R::err(Errc::ConfigError,
                        "statefulness_overrides." + key + ": must be stateless|stateful");
        c.statefulness_overrides[key] = s;
      }
    }
    if (j.contains("field_modalities"))
      for (const auto& [key, v] : j.at("field_modalities").items())
        c.field_modalities[key] = v.get<std::string>();
  } catch (const json::exception& e) {
    return R::err(Errc::ConfigError, std::string("config: ") + e.what());
  }

  if (auto st = validate_scenario(c); !st.ok()) return R(st.error());
  return c;
}

Result<ScenarioConfig> parse_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    return Result<ScenarioConfig>::err(Errc::ConfigError, "cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    return Result<ScenarioConfig>::err(Errc::ConfigError,
                                       path + ": invalid JSON: " + std::string(e.what()));
  }
  return parse_scenario_json(j);
}

Status validate_scenario(const ScenarioConfig& c) {
  auto fail = [](const std::string& field, const std::string& reason) {
    return Status::err(Errc::ConfigError, field + ": " + reason);
  };
  if (c.max_staleness < 0) return fail("max_staleness", "must be >= 0");
  if (c.global_batch_size < 1) return fail("global_batch_size", "must be >= 1");
  if (c.micro_batch_size < 1) return fail("micro_batch_size", "must be >= 1");
  if (c.global_batch_size % c.micro_batch_size != 0)
    return fail("micro_batch_size", "must divide global_batch_size");
  if (c.replicas < 1) return fail("replicas", "must be >= 1");
  if (c.steps < 1) return fail("steps", "must be >= 1");
  if (c.checkpoint_every < 1) return fail("checkpoint_every", "must be >= 1");
  if (c.checkpoint_keep < 1) return fail("checkpoint_keep", "must be >= 1");
  if (c.switch_overhead < 0) return fail("switch_overhead", "must be >= 0");
  if (c.sync_latency < 0) return fail("sync_latency", "must be >= 0");
  if (c.payload_bytes < 0) return fail("payload_bytes", "must be >= 0");
  if (c.heartbeat_period <= 0) return fail("heartbeat_period", "must be > 0");
  if (c.suspect_misses < 1) return fail("suspect_misses", "must be >= 1");
  if (c.fail_misses <= c.suspect_misses)
    return fail("fail_misses", "must exceed suspect_misses");
  if (c.max_retries < 1) return fail("max_retries", "must be >= 1");
  if (c.pull_stages < 1) return fail("pull_stages", "must be >= 1");
  if (c.trainer_shard_count < 1) return fail("trainer_shard_count", "must be >= 1");
  if (c.replica_shard_count < 0) return fail("replica_shard_count", "must be >= 0");
  if (c.weight_shard_bytes < 1) return fail("weight_shard_bytes", "must be >= 1");
  if (c.wall_ms_per_unit <= 0) return fail("wall_ms_per_unit", "must be > 0");
  if (auto st = validate_algorithm(c.algorithm); !st.ok())
    return fail("algorithm", st.error().message);
  if (c.deployment == Deployment::Colocate && !c.algorithm.colocatable)
    return fail("deployment", "algorithm is not colocatable");
  for (const auto& [name, m] : c.stage_latency) {
    try {
      role_kind_from_name(name);
    } catch (const std::exception&) {
      return fail("latency." + name, "unknown stage");
    }
  }
  if (c.transport == Transport::Tcp && !c.faults.empty())
    return fail("faults", "fault injection requires the virtual-clock backend (in_process)");
  if (c.transport == Transport::Tcp && !c.scale_events.empty())
    return fail("scale_events", "scaling events require the virtual-clock backend (in_process)");
  return ok_status();
}

json scenario_to_json(const ScenarioConfig& c) {
  json latency;
  latency["rollout_per_sample"] = latency_to_json(c.rollout_latency);
  latency["train"] = latency_to_json(c.train_latency);
  for (const auto& [name, m] : c.stage_latency) latency[name] = latency_to_json(m);
  json faults = json::array();
  for (const auto& f : c.faults)
    faults.push_back({{"at_time", f.at_time}, {"role_id", f.role_id}, {"fault", f.fault}});
  json scale = json::array();
  for (const auto& s : c.scale_events)
    scale.push_back({{"at_time", s.at_time}, {"delta", s.delta}});
  json overrides = json::object();
  for (const auto& [k, v] : c.statefulness_overrides) overrides[k] = v;
  json modalities = json::object();
  for (const auto& [k, v] : c.field_modalities) modalities[k] = v;
  return json{
      {"deployment", c.deployment == Deployment::Colocate ? "colocate" : "separated"},
      {"max_staleness", c.max_staleness},
      {"global_batch_size", c.global_batch_size},
      {"micro_batch_size", c.micro_batch_size},
      {"replicas", c.replicas},
      {"transport", c.transport == Transport::Tcp ? "tcp" : "in_process"},
      {"seed", c.seed},
      {"steps", c.steps},
      {"checkpoint_every", c.checkpoint_every},
      {"checkpoint_keep", c.checkpoint_keep},
      {"switch_overhead", c.switch_overhead},
      {"sync_latency", c.sync_latency},
      {"mode_threshold", c.mode_threshold},
      {"payload_bytes", c.payload_bytes},
      {"heartbeat_period", c.heartbeat_period},
      {"suspect_misses", c.suspect_misses},
      {"fail_misses", c.fail_misses},
      {"max_retries", c.max_retries},
      {"inplace_restart_cost", c.inplace_restart_cost},
      {"global_restart_cost", c.global_restart_cost},
      {"warmup_steps", c.warmup_steps},
      {"delivery",
       c.delivery == DeliveryTopology::RootBroadcast ? "root_broadcast" : "per_stage_pull"},
      {"pull_stages", c.pull_stages},
      {"loader", c.loader},
      {"algorithm", algorithm_to_json(c.algorithm)},
      {"latency", latency},
      {"faults", faults},
      {"scale_events", scale},
      {"wall_ms_per_unit", c.wall_ms_per_unit},
      {"checkpoint_dir", c.checkpoint_dir},
      {"trainer_shard_count", c.trainer_shard_count},
      {"replica_shard_count", c.replica_shard_count},
      {"weight_shard_bytes", c.weight_shard_bytes},
      {"statefulness_overrides", overrides},
      {"field_modalities", modalities}};
}

Status apply_override(ScenarioConfig& c, const std::string& key, const std::string& value) {
  try {
    if (key == "max_staleness")
      c.max_staleness = std::stoi(value);
    else if (key == "replicas")
      c.replicas = std::stoi(value);
    else if (key == "global_batch_size")
      c.global_batch_size = std::stoi(value);
    else if (key == "micro_batch_size")
      c.micro_batch_size = std::stoi(value);
    else if (key == "steps")
      c.steps = std::stoi(value);
    else if (key == "seed")
      c.seed = std::stoull(value);
    else if (key == "switch_overhead")
      c.switch_overhead = std::stod(value);
    else if (key == "loader")
      c.loader = value;
    else if (key == "deployment") {
      if (value == "colocate")
        c.deployment = Deployment::Colocate;
      else if (value == "separated")
        c.deployment = Deployment::Separated;
      else
        return Status::err(Errc::ConfigError, "deployment: must be colocate|separated");
    } else {
      return Status::err(Errc::ConfigError, key + ": not sweepable");
    }
  } catch (const std::exception&) {
    return Status::err(Errc::ConfigError, key + ": cannot parse value '" + value + "'");
  }
  return validate_scenario(c);
}

}  // namespace staleflow
