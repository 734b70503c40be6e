// SPDX-License-Identifier: Apache-2.0
#include "staleflow/rng.hpp"

#include <cmath>

#include "staleflow/hash.hpp"

namespace staleflow {

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag, std::uint64_t idx) {
  Fnv1a64 h;
  std::uint8_t buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = std::uint8_t(seed >> (8 * i));
  h.update(buf, 8);
  h.update(reinterpret_cast<const std::uint8_t*>(tag.data()), tag.size());
  for (int i = 0; i < 8; ++i) buf[i] = std::uint8_t(idx >> (8 * i));
  h.update(buf, 8);
  // One extra mix so adjacent idx values decorrelate.
  SplitMix64 mix(h.digest());
  return mix.next_u64();
}

double inverse_normal_cdf(double p) {
  // Acklam's algorithm; p must be in (0, 1).
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  const double phigh = 1 - plow;

  if (p < plow) {
    double q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > phigh) {
    double q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  double q = p - 0.5;
  double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

double LatencyModel::draw(SplitMix64& rng) const {
  switch (kind) {
    case LatencyKind::Deterministic:
      return value;
    case LatencyKind::LogNormal: {
      double z = inverse_normal_cdf(rng.next_open_unit());
      return std::exp(mu + sigma * z);
    }
    case LatencyKind::Pareto: {
      double u = rng.next_open_unit();
      return scale * std::pow(1.0 - u, -1.0 / alpha);
    }
    case LatencyKind::Empirical: {
      std::uint64_t i = rng.next_u64() % samples.size();
      return samples[i];
    }
  }
  return value;
}

Status LatencyModel::validate(const std::string& path) const {
  switch (kind) {
    case LatencyKind::Deterministic:
      if (!(value >= 0.0))
        return Status::err(Errc::ConfigError, path + ": deterministic value must be >= 0");
      break;
    case LatencyKind::LogNormal:
      if (!(sigma >= 0.0))
        return Status::err(Errc::ConfigError, path + ": sigma must be >= 0");
      break;
    case LatencyKind::Pareto:
      if (!(scale > 0.0) || !(alpha > 0.0))
        return Status::err(Errc::ConfigError, path + ": pareto needs scale > 0 and alpha > 0");
      break;
    case LatencyKind::Empirical:
      if (samples.empty())
        return Status::err(Errc::ConfigError, path + ": empirical needs at least one sample");
      for (double s : samples)
        if (!(s >= 0.0))
          return Status::err(Errc::ConfigError, path + ": empirical samples must be >= 0");
      break;
  }
  return ok_status();
}

Bytes synthetic_shard_bytes(Version version, std::uint32_t shard_id, std::uint64_t seed,
                            std::size_t length) {
  SplitMix64 rng(derive_seed(seed, "weight-shard", (std::uint64_t(version) << 20) ^ shard_id));
  Bytes out(length);
  std::size_t i = 0;
  while (i + 8 <= length) {
    std::uint64_t w = rng.next_u64();
    for (int k = 0; k < 8; ++k) out[i + k] = std::uint8_t(w >> (8 * k));
    i += 8;
  }
  if (i < length) {
    std::uint64_t w = rng.next_u64();
    for (; i < length; ++i) {
      out[i] = std::uint8_t(w);
      w >>= 8;
    }
  }
  return out;
}

}  // namespace staleflow
