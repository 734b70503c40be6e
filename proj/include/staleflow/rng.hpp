// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "staleflow/result.hpp"
#include "staleflow/types.hpp"

namespace staleflow {

// SplitMix64. All stochastic draws in the simulator go through this generator
// plus closed-form inverse transforms, so a (config, seed) pair reproduces the
// same sequence on every platform. std::random distributions are not used:
// their output is implementation-defined.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1) — safe for inverse-CDF transforms.
  double next_open_unit() {
    double u = next_unit();
    return u > 0.0 ? u : 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

// Deterministic stream derivation: one independent stream per (seed, tags...).
std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag, std::uint64_t idx = 0);

// Inverse standard normal CDF (Acklam's rational approximation, |e| < 1.15e-9).
double inverse_normal_cdf(double p);

enum class LatencyKind : std::uint8_t { Deterministic, LogNormal, Pareto, Empirical };

// Granularity of a latency draw in the scenario config.
enum class LatencyPer : std::uint8_t { Sample, Micro, StepTotal };

struct LatencyModel {
  LatencyKind kind = LatencyKind::Deterministic;
  LatencyPer per = LatencyPer::StepTotal;
  double value = 0.0;                // Deterministic
  double mu = 0.0, sigma = 0.0;      // LogNormal: exp(mu + sigma * z)
  double scale = 1.0, alpha = 1.5;   // Pareto: scale * (1-u)^(-1/alpha)
  std::vector<double> samples;       // Empirical: uniform pick

  bool deterministic() const { return kind == LatencyKind::Deterministic; }

  // Draws are > 0 for valid parameters; validate() enforces that.
  double draw(SplitMix64& rng) const;
  Status validate(const std::string& path) const;

  static LatencyModel constant(double v, LatencyPer per = LatencyPer::StepTotal) {
    LatencyModel m;
    m.kind = LatencyKind::Deterministic;
    m.per = per;
    m.value = v;
    return m;
  }
};

// Synthetic weight payloads: deterministic bytes from (version, shard, seed),
// so transport integrity is checkable without real model weights.
Bytes synthetic_shard_bytes(Version version, std::uint32_t shard_id, std::uint64_t seed,
                            std::size_t length);

}  // namespace staleflow
