// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "staleflow/health.hpp"
#include "staleflow/result.hpp"
#include "staleflow/types.hpp"

namespace staleflow {

// One pipeline stage, declared by the fields it consumes and produces. The
// controller wires stages through the data bus; no stage holds a reference to
// another.
struct StageSpec {
  RoleKind kind = RoleKind::Actor;
  std::vector<std::string> consumes;
  std::vector<std::string> produces;
};

struct AlgorithmSpec {
  std::string name;
  std::vector<StageSpec> stages;  // first must be the rollout producer; exactly one actor stage
  bool colocatable = true;
  std::vector<std::string> ingest_fields = {"prompt"};
};

// Produced fields unique across stages; every consumed field produced
// upstream or present at ingestion; rollout first, exactly one trainer.
Status validate_algorithm(const AlgorithmSpec& spec);

// Longest chain of intermediate stages between rollout and the trainer.
// Zero when the trainer consumes rollout output directly.
int algorithm_stage_depth(const AlgorithmSpec& spec);

const StageSpec* find_stage(const AlgorithmSpec& spec, RoleKind kind);
// Fields the trainer stage consumes.
std::vector<std::string> trainer_fields(const AlgorithmSpec& spec);

// The six-role deployment used as the default scenario.
AlgorithmSpec default_algorithm();
// Minimal two-stage pipeline (rollout -> train), used by calibration configs.
AlgorithmSpec two_stage_algorithm();

enum class DirectiveVerb : std::uint8_t {
  GenerateRollouts,
  ComputeStage,
  TrainStep,
  SyncWeights,
  Checkpoint,
  Shutdown,
};

const char* directive_verb_name(DirectiveVerb v);

struct Directive {
  DirectiveVerb verb = DirectiveVerb::GenerateRollouts;
  RoleKind stage = RoleKind::Rollout;  // meaningful for ComputeStage
  Step step = 0;
  TimePoint time = 0.0;
};

// Append-only record of issued directives; step monotonicity per verb is an
// invariant checked by tests.
class DirectiveLog {
 public:
  void record(DirectiveVerb verb, RoleKind stage, Step step, TimePoint time) {
    entries_.push_back(Directive{verb, stage, step, time});
  }
  const std::vector<Directive>& entries() const { return entries_; }
  Status check_step_monotone_per_verb() const;
  int count(DirectiveVerb verb) const;

 private:
  std::vector<Directive> entries_;
};

struct RoleHandle {
  std::string role_id;
  RoleKind kind = RoleKind::Actor;
  std::string pool_id;
  Statefulness statefulness = Statefulness::StatefulAuthoritative;
};

// Instantiates role handles with resource pools per deployment. Separated
// gives each stage its own pool; colocate time-shares one pool between the
// rollout and trainer sides.
Result<std::vector<RoleHandle>> plan_roles(const AlgorithmSpec& spec, Deployment deployment,
                                           int rollout_replicas);

}  // namespace staleflow
