#include "negguide/guidance.hpp"

#include <cctype>
#include <cmath>
#include <string>

#include "negguide/errors.hpp"

namespace negguide {

Strategy parse_strategy(std::string_view name) {
  std::string up(name);
  for (char& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "CFG") return Strategy::kCfg;
  if (up == "NP") return Strategy::kNp;
  if (up == "DNS") return Strategy::kDns;
  if (up == "DNP") return Strategy::kDnp;
  if (up == "CNP") return Strategy::kCnp;
  if (up == "ANSWER") return Strategy::kAnswer;
  throw ParameterError("unknown strategy '" + std::string(name) + "'");
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kCfg: return "CFG";
    case Strategy::kNp: return "NP";
    case Strategy::kDns: return "DNS";
    case Strategy::kDnp: return "DNP";
    case Strategy::kCnp: return "CNP";
    case Strategy::kAnswer: return "ANSWER";
  }
  return "?";
}

SamplerKind parse_sampler(std::string_view name) {
  if (name == "ddpm") return SamplerKind::kDdpm;
  if (name == "ddim") return SamplerKind::kDdim;
  throw ParameterError("unknown sampler '" + std::string(name) + "'");
}

std::string_view to_string(SamplerKind s) { return s == SamplerKind::kDdpm ? "ddpm" : "ddim"; }

void GuidanceConfig::validate() const {
  if (!std::isfinite(s) || s < 0.0) throw ParameterError("s must be finite and >= 0");
  if (!std::isfinite(negative_scale()) || negative_scale() < 0.0) {
    throw ParameterError("s_n must be finite and >= 0");
  }
  if (k < 0) throw ParameterError("K must be >= 0");
  if (!(window_fraction > 0.0 && window_fraction <= 1.0)) {
    throw ParameterError("window_fraction must lie in (0, 1]");
  }
  if (!(k_schedule_offset > 0.0)) throw ParameterError("k_schedule_offset must be positive");
}

namespace {

void check_same(const Vec& a, const Vec& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": operands have dimensions " + std::to_string(a.size()) +
                     " and " + std::to_string(b.size()));
  }
}

}  // namespace

Vec cfg_combine(const Vec& eps_uncond, const Vec& eps_cond, double s) {
  check_same(eps_uncond, eps_cond, "cfg_combine");
  return eps_cond + (s - 1.0) * (eps_cond - eps_uncond);
}

Vec np_combine(const Vec& eps_neg, const Vec& eps_cond, double s) {
  check_same(eps_neg, eps_cond, "np_combine");
  return eps_cond + (s - 1.0) * (eps_cond - eps_neg);
}

Vec dns_combine(const Vec& eps_cond, const Vec& eps_uncond, double s_n) {
  check_same(eps_cond, eps_uncond, "dns_combine");
  return (1.0 - s_n) * eps_cond + s_n * eps_uncond;
}

double schedule_k_raw(int k, int t, int total_steps, double offset) {
  const double x = 2.0 * t - total_steps;
  return k * (x / (x + offset)) * ((total_steps + offset) / total_steps);
}

int schedule_k(int k, int t, int total_steps, double offset) {
  if (2 * t <= total_steps) return 0;
  const double raw = schedule_k_raw(k, t, total_steps, offset);
  return std::max(0, static_cast<int>(std::floor(raw + 0.5)));
}

double scalar_mean(const Vec& v) { return v.mean(); }

double scalar_std(const Vec& v) {
  return std::sqrt((v.array() - v.mean()).square().mean());
}

Vec normalize_noise(const Vec& eps, const Vec& ref) {
  check_same(eps, ref, "normalize_noise");
  const double sd = scalar_std(eps);
  if (!(sd > 1e-12)) {
    throw DegenerateNoiseError("normalize_noise: noise has zero spread (std " +
                               std::to_string(sd) + ")");
  }
  const double mu = eps.mean();
  return ((eps.array() - mu) / sd * scalar_std(ref) + ref.mean()).matrix();
}

}  // namespace negguide
