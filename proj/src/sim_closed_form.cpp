// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <map>

#include "staleflow/sim.hpp"

namespace staleflow {

namespace {

Status require_deterministic(const ScenarioConfig& c) {
  if (!c.rollout_latency.deterministic())
    return Status::err(Errc::NonDeterministicConfig, "latency.rollout_per_sample is stochastic");
  if (!c.train_latency.deterministic())
    return Status::err(Errc::NonDeterministicConfig, "latency.train is stochastic");
  for (const auto& [name, m] : c.stage_latency)
    if (!m.deterministic())
      return Status::err(Errc::NonDeterministicConfig, "latency." + name + " is stochastic");
  return ok_status();
}

}  // namespace

Result<StepSpans> compute_step_spans(const ScenarioConfig& c) {
  if (auto st = require_deterministic(c); !st.ok()) return Result<StepSpans>(st.error());
  StepSpans spans;
  const int micros = c.micros_per_step();

  // Rollout: micro-batches complete at the per-sample latency (samples of a
  // micro-batch generate concurrently inside a replica). Streaming modes
  // amortize rounds across step boundaries; batch-quantized modes pay the
  // ceiling on the last round.
  const double r = c.rollout_latency.value;
  const bool quantized = c.deployment == Deployment::Colocate || c.max_staleness == 0;
  spans.rollout = quantized ? std::ceil(double(micros) / c.replicas) * r
                            : double(micros) * r / c.replicas;

  for (const auto& s : c.algorithm.stages) {
    if (s.kind == RoleKind::Rollout || s.kind == RoleKind::Actor) continue;
    double per_micro = 0.0;
    auto it = c.stage_latency.find(role_kind_name(s.kind));
    if (it != c.stage_latency.end()) per_micro = c.per_micro(it->second.value, it->second.per);
    spans.stages[role_kind_name(s.kind)] = per_micro * micros;
  }
  spans.train = c.per_micro(c.train_latency.value, c.train_latency.per) * micros;

  // Critical path through the intermediate-stage DAG, weighted by span.
  std::map<std::string, double> field_dist;  // completion distance of each field
  for (const auto& f : c.algorithm.ingest_fields) field_dist[f] = 0.0;
  for (const auto& f : c.algorithm.stages.front().produces) field_dist[f] = 0.0;
  double cp = 0.0;
  double sum = 0.0;
  for (const auto& s : c.algorithm.stages) {
    if (s.kind == RoleKind::Rollout || s.kind == RoleKind::Actor) continue;
    double start = 0.0;
    for (const auto& f : s.consumes) {
      auto it = field_dist.find(f);
      if (it != field_dist.end()) start = std::max(start, it->second);
    }
    double span = spans.stages[role_kind_name(s.kind)];
    double done = start + span;
    for (const auto& f : s.produces) field_dist[f] = done;
    sum += span;
  }
  const StageSpec* actor = find_stage(c.algorithm, RoleKind::Actor);
  if (actor)
    for (const auto& f : actor->consumes) {
      auto it = field_dist.find(f);
      if (it != field_dist.end()) cp = std::max(cp, it->second);
    }
  spans.stage_critical_path = cp;
  spans.stage_sum = sum;
  return spans;
}

Result<double> closed_form_step_time(const ScenarioConfig& c) {
  auto spans = compute_step_spans(c);
  if (!spans.ok()) return Result<double>(spans.error());
  const StepSpans& s = spans.value();

  if (c.deployment == Deployment::Colocate)
    return s.rollout + s.stage_sum + s.train + c.switch_overhead + c.sync_latency;
  if (c.max_staleness == 0)
    return s.rollout + s.stage_critical_path + s.train + c.sync_latency;

  double best = s.train + c.sync_latency;
  best = std::max(best, s.rollout);
  for (const auto& [name, span] : s.stages) best = std::max(best, span);
  return best;
}

}  // namespace staleflow
