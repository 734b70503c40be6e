// SPDX-License-Identifier: Apache-2.0
#include "staleflow/controller.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace staleflow {

Status validate_algorithm(const AlgorithmSpec& spec) {
  if (spec.stages.empty()) return Status::err(Errc::InvalidSpec, "algorithm has no stages");
  if (spec.stages.front().kind != RoleKind::Rollout)
    return Status::err(Errc::InvalidSpec, "first stage must be rollout");
  int actors = 0;
  for (const auto& s : spec.stages)
    if (s.kind == RoleKind::Actor) ++actors;
  if (actors != 1)
    return Status::err(Errc::InvalidSpec, "algorithm must declare exactly one actor stage");

  std::set<std::string> produced(spec.ingest_fields.begin(), spec.ingest_fields.end());
  std::set<std::string> seen_kinds;
  for (const auto& s : spec.stages) {
    if (!seen_kinds.insert(role_kind_name(s.kind)).second)
      return Status::err(Errc::InvalidSpec,
                         std::string("duplicate stage kind '") + role_kind_name(s.kind) + "'");
    for (const auto& f : s.consumes)
      if (!produced.count(f))
        return Status::err(Errc::InvalidSpec, "stage '" + std::string(role_kind_name(s.kind)) +
                                                  "' consumes undefined field '" + f + "'");
    for (const auto& f : s.produces) {
      if (f.empty()) return Status::err(Errc::InvalidSpec, "empty field name in produces");
      if (!produced.insert(f).second)
        return Status::err(Errc::InvalidSpec, "field '" + f + "' produced by more than one stage");
    }
  }
  return ok_status();
}

int algorithm_stage_depth(const AlgorithmSpec& spec) {
  // Layer of the stage that produces each field; ingest and rollout are 0.
  std::map<std::string, int> field_layer;
  for (const auto& f : spec.ingest_fields) field_layer[f] = 0;
  for (const auto& f : spec.stages.front().produces) field_layer[f] = 0;
  int depth = 0;
  for (const auto& s : spec.stages) {
    if (s.kind == RoleKind::Rollout || s.kind == RoleKind::Actor) continue;
    int layer = 0;
    for (const auto& f : s.consumes) {
      auto it = field_layer.find(f);
      if (it != field_layer.end()) layer = std::max(layer, it->second);
    }
    layer += 1;
    for (const auto& f : s.produces) field_layer[f] = layer;
    depth = std::max(depth, layer);
  }
  return depth;
}

const StageSpec* find_stage(const AlgorithmSpec& spec, RoleKind kind) {
  for (const auto& s : spec.stages)
    if (s.kind == kind) return &s;
  return nullptr;
}

std::vector<std::string> trainer_fields(const AlgorithmSpec& spec) {
  const StageSpec* actor = find_stage(spec, RoleKind::Actor);
  return actor ? actor->consumes : std::vector<std::string>{};
}

AlgorithmSpec default_algorithm() {
  AlgorithmSpec spec;
  spec.name = "grpo-six-role";
  spec.colocatable = true;
  spec.stages = {
      {RoleKind::Rollout, {}, {"prompt", "response"}},
      {RoleKind::ActorFwd, {"response"}, {"logp"}},
      {RoleKind::RefLogP, {"response"}, {"ref_logp"}},
      {RoleKind::Reward, {"response"}, {"reward"}},
      {RoleKind::Advantages, {"reward"}, {"advantage"}},
      {RoleKind::Actor, {"response", "logp", "ref_logp", "reward", "advantage"}, {}},
  };
  return spec;
}

AlgorithmSpec two_stage_algorithm() {
  AlgorithmSpec spec;
  spec.name = "rollout-train";
  spec.colocatable = true;
  spec.stages = {
      {RoleKind::Rollout, {}, {"prompt", "response"}},
      {RoleKind::Actor, {"response"}, {}},
  };
  return spec;
}

const char* directive_verb_name(DirectiveVerb v) {
  switch (v) {
    case DirectiveVerb::GenerateRollouts: return "generate_rollouts";
    case DirectiveVerb::ComputeStage: return "compute_stage";
    case DirectiveVerb::TrainStep: return "train_step";
    case DirectiveVerb::SyncWeights: return "sync_weights";
    case DirectiveVerb::Checkpoint: return "checkpoint";
    case DirectiveVerb::Shutdown: return "shutdown";
  }
  return "shutdown";
}

Status DirectiveLog::check_step_monotone_per_verb() const {
  std::map<std::pair<int, int>, Step> last;  // (verb, stage kind) -> last step
  for (const auto& d : entries_) {
    auto key = std::make_pair(int(d.verb), d.verb == DirectiveVerb::ComputeStage ? int(d.stage) : -1);
    auto it = last.find(key);
    if (it != last.end() && d.step < it->second)
      return Status::err(Errc::Internal,
                         std::string(directive_verb_name(d.verb)) + " step regressed from " +
                             std::to_string(it->second) + " to " + std::to_string(d.step));
    last[key] = d.step;
  }
  return ok_status();
}

int DirectiveLog::count(DirectiveVerb verb) const {
  int n = 0;
  for (const auto& d : entries_)
    if (d.verb == verb) ++n;
  return n;
}

Result<std::vector<RoleHandle>> plan_roles(const AlgorithmSpec& spec, Deployment deployment,
                                           int rollout_replicas) {
  if (auto st = validate_algorithm(spec); !st.ok())
    return Result<std::vector<RoleHandle>>(st.error());
  if (deployment == Deployment::Colocate && !spec.colocatable)
    return Result<std::vector<RoleHandle>>::err(Errc::InvalidSpec,
                                                "algorithm is not colocatable");
  if (rollout_replicas < 1)
    return Result<std::vector<RoleHandle>>::err(Errc::InvalidSpec, "need at least one replica");

  std::vector<RoleHandle> out;
  for (const auto& s : spec.stages) {
    std::string pool = deployment == Deployment::Colocate
                           ? "pool.shared"
                           : std::string("pool.") + role_kind_name(s.kind);
    if (s.kind == RoleKind::Rollout) {
      for (int i = 0; i < rollout_replicas; ++i)
        out.push_back(RoleHandle{std::string(role_kind_name(s.kind)) + "-" + std::to_string(i),
                                 s.kind, pool, default_statefulness(s.kind)});
    } else {
      out.push_back(RoleHandle{role_kind_name(s.kind), s.kind, pool, default_statefulness(s.kind)});
    }
  }
  return out;
}

}  // namespace staleflow
