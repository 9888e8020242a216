#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "negguide/types.hpp"

namespace negguide {

enum class Strategy { kCfg, kNp, kDns, kDnp, kCnp, kAnswer };
enum class SamplerKind { kDdpm, kDdim };

Strategy parse_strategy(std::string_view name);
std::string_view to_string(Strategy s);
SamplerKind parse_sampler(std::string_view name);
std::string_view to_string(SamplerKind s);

struct GuidanceConfig {
  Strategy strategy = Strategy::kCfg;
  double s = 3.0;
  // Negative guidance scale; unset means "same as s".
  std::optional<double> s_n;
  int k = 0;
  bool normalize = true;
  double window_fraction = 0.5;
  SamplerKind sampler = SamplerKind::kDdpm;
  std::uint64_t seed = 0;
  double k_schedule_offset = 20.0;

  double negative_scale() const { return s_n.value_or(s); }
  // Throws ParameterError when an invariant is violated.
  void validate() const;
};

// eps_uncond + s (eps_cond - eps_uncond)
Vec cfg_combine(const Vec& eps_uncond, const Vec& eps_cond, double s);
// eps_neg + s (eps_cond - eps_neg)
Vec np_combine(const Vec& eps_neg, const Vec& eps_cond, double s);
// eps_cond + s_n (eps_uncond - eps_cond); the diffusion-negative direction.
// The alternative form eps_uncond + s (eps_uncond - eps_cond) is s_n = 1 + s.
Vec dns_combine(const Vec& eps_cond, const Vec& eps_uncond, double s_n);

/// Unrounded DNS budget K ((2t - T)/(2t - T + c)) ((T + c)/T); meaningful for
/// 2t > T. c is the offset (20 by default).
double schedule_k_raw(int k, int t, int total_steps, double offset = 20.0);

/// Number of DNS steps at step t: the raw value rounded half-up and clamped
/// at 0, and 0 whenever 2t <= T.
int schedule_k(int k, int t, int total_steps, double offset = 20.0);

/// Rescales eps to the scalar mean and population standard deviation of ref
/// (statistics over all coordinates). Throws DegenerateNoiseError when
/// std(eps) <= 1e-12.
Vec normalize_noise(const Vec& eps, const Vec& ref);

double scalar_mean(const Vec& v);
double scalar_std(const Vec& v);

}  // namespace negguide
