#include "negguide/chains.hpp"

#include <cmath>

#include "negguide/errors.hpp"

namespace negguide {

Vec standard_normal(Rng& rng, int dimension) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(dimension);
  for (int i = 0; i < dimension; ++i) v[i] = normal(rng);
  return v;
}

namespace {

void check_step(const VarianceSchedule& sched, int t, const char* op) {
  if (t < 1 || t > sched.total_steps()) {
    throw IndexError(std::string(op) + ": step " + std::to_string(t) + " outside [1, " +
                     std::to_string(sched.total_steps()) + "]");
  }
}

}  // namespace

Vec ddpm_step(const Vec& z, int t, const Vec& eps_hat, const VarianceSchedule& sched,
              const Vec& xi) {
  check_step(sched, t, "ddpm_step");
  if (z.size() != eps_hat.size() || z.size() != xi.size()) throw ShapeError("ddpm_step: size mismatch");
  const double beta = sched.beta(t);
  const double ab = sched.alpha_bar(t);
  return (z - (beta / std::sqrt(1.0 - ab)) * eps_hat) / std::sqrt(1.0 - beta) +
         std::sqrt(beta) * xi;
}

Vec ddpm_step(const Vec& z, int t, const Vec& eps_hat, const VarianceSchedule& sched, Rng& rng) {
  check_step(sched, t, "ddpm_step");
  const Vec xi = t > 1 ? standard_normal(rng, static_cast<int>(z.size()))
                       : Vec::Zero(z.size()).eval();
  return ddpm_step(z, t, eps_hat, sched, xi);
}

Vec predict_clean(const Vec& z, int t, const Vec& eps_hat, const VarianceSchedule& sched) {
  check_step(sched, t, "predict_clean");
  if (z.size() != eps_hat.size()) throw ShapeError("predict_clean: size mismatch");
  const double ab = sched.alpha_bar(t);
  return (z - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

Vec ddim_step(const Vec& z, int t, const Vec& eps_hat, const VarianceSchedule& sched) {
  const Vec z0 = predict_clean(z, t, eps_hat, sched);
  if (t == 1) return z0;
  const double ab_prev = sched.alpha_bar(t - 1);
  return std::sqrt(ab_prev) * z0 + std::sqrt(1.0 - ab_prev) * eps_hat;
}

bool same_trajectory(const ChainTrace& a, const ChainTrace& b) {
  return a.condition == b.condition && a.records == b.records &&
         a.final_sample == b.final_sample && a.total_denoiser_calls == b.total_denoiser_calls;
}

namespace {

void check_cond(const Condition& cond, const GuidanceConfig& config) {
  if (cond.is_null()) throw ParameterError("chain condition must be a concept, not null");
  config.validate();
}

Vec advance(const Vec& z, int t, const Vec& eps, const VarianceSchedule& sched, SamplerKind kind,
            Rng* rng) {
  if (kind == SamplerKind::kDdim) return ddim_step(z, t, eps, sched);
  if (rng == nullptr) throw ParameterError("DDPM sampling needs an rng");
  return ddpm_step(z, t, eps, sched, *rng);
}

// Shared outer loop: z_T is drawn from the chain rng, then each step's
// combined noise comes from `combine`, which fills the record's noise fields.
template <class Combine>
ChainTrace outer_chain(const Denoiser& denoiser, const Condition& cond,
                       const GuidanceConfig& config, const VarianceSchedule& sched, Rng& rng,
                       const Vec& z_T, std::uint64_t calls_before, Combine&& combine) {
  ChainTrace trace;
  trace.config = config;
  trace.condition = cond;
  CountingDenoiser counter(denoiser, calls_before);
  Vec z = z_T;
  const int total = sched.total_steps();
  trace.records.reserve(total);
  for (int t = total; t >= 1; --t) {
    StepRecord rec;
    rec.t = t;
    rec.z_before = z;
    combine(rec, z, t, counter);
    z = advance(z, t, rec.eps_combined, sched, config.sampler, &rng);
    rec.z_after = z;
    rec.denoiser_calls_so_far = counter.calls();
    trace.records.push_back(std::move(rec));
  }
  trace.final_sample = z;
  trace.total_denoiser_calls = counter.calls();
  return trace;
}

ChainTrace np_from(const Denoiser& denoiser, const Condition& cond, const Condition& negative,
                   const GuidanceConfig& config, const VarianceSchedule& sched, Rng& rng,
                   const Vec& z_T, std::uint64_t calls_before) {
  const std::optional<std::size_t> label =
      negative.is_null() ? std::nullopt : std::optional<std::size_t>(negative.index());
  return outer_chain(denoiser, cond, config, sched, rng, z_T, calls_before,
                     [&](StepRecord& rec, const Vec& z, int t, CountingDenoiser& eps) {
                       rec.eps_cond = eps(z, t, cond);
                       rec.eps_neg = eps(z, t, negative);
                       rec.eps_combined = np_combine(*rec.eps_neg, rec.eps_cond, config.s);
                       rec.negative_concept = label;
                     });
}

}  // namespace

namespace {

DnsResult dns_counted(CountingDenoiser& eps, const Condition& cond, const GuidanceConfig& config,
                      const VarianceSchedule& sched, const Vec& z_init, int t_init, int k,
                      SamplerKind inner, Rng* rng) {
  check_step(sched, t_init, "run_dns");
  if (k < 1 || k > t_init) {
    throw ParameterError("run_dns: need 0 < k <= t_init (k=" + std::to_string(k) +
                         ", t_init=" + std::to_string(t_init) + ")");
  }
  const std::uint64_t start = eps.calls();
  DnsResult out;
  out.latent = z_init;
  const double s_n = config.negative_scale();
  for (int i = 0; i < k; ++i) {
    const int tn = t_init - i;
    const Vec ep = eps(out.latent, tn, cond);
    const Vec ephi = eps(out.latent, tn, Condition::null());
    out.last_noise = dns_combine(ep, ephi, s_n);
    out.latent = advance(out.latent, tn, out.last_noise, sched, inner, rng);
  }
  out.calls = eps.calls() - start;
  return out;
}

}  // namespace

DnsResult run_dns(const Denoiser& denoiser, const Condition& cond, const GuidanceConfig& config,
                  const VarianceSchedule& sched, const Vec& z_init, int t_init, int k,
                  SamplerKind inner, Rng* rng) {
  if (z_init.size() != denoiser.dimension()) throw ShapeError("run_dns: latent dimension mismatch");
  CountingDenoiser eps(denoiser);
  return dns_counted(eps, cond, config, sched, z_init, t_init, k, inner, rng);
}

ChainTrace run_cfg(const Denoiser& denoiser, const Condition& cond, const GuidanceConfig& config,
                   const VarianceSchedule& sched) {
  check_cond(cond, config);
  Rng rng(config.seed);
  const Vec z_T = standard_normal(rng, denoiser.dimension());
  return outer_chain(denoiser, cond, config, sched, rng, z_T, 0,
                     [&](StepRecord& rec, const Vec& z, int t, CountingDenoiser& eps) {
                       rec.eps_cond = eps(z, t, cond);
                       rec.eps_uncond = eps(z, t, Condition::null());
                       rec.eps_combined = cfg_combine(*rec.eps_uncond, rec.eps_cond, config.s);
                     });
}

ChainTrace run_np(const Denoiser& denoiser, const Condition& cond, const Condition& negative,
                  const GuidanceConfig& config, const VarianceSchedule& sched) {
  check_cond(cond, config);
  Rng rng(config.seed);
  const Vec z_T = standard_normal(rng, denoiser.dimension());
  return np_from(denoiser, cond, negative, config, sched, rng, z_T, 0);
}

ChainTrace run_dns_chain(const Denoiser& denoiser, const Condition& cond,
                         const GuidanceConfig& config, const VarianceSchedule& sched) {
  check_cond(cond, config);
  Rng rng(config.seed);
  const Vec z_T = standard_normal(rng, denoiser.dimension());
  const double s_n = config.negative_scale();
  return outer_chain(denoiser, cond, config, sched, rng, z_T, 0,
                     [&](StepRecord& rec, const Vec& z, int t, CountingDenoiser& eps) {
                       rec.eps_cond = eps(z, t, cond);
                       rec.eps_uncond = eps(z, t, Condition::null());
                       rec.eps_combined = dns_combine(rec.eps_cond, *rec.eps_uncond, s_n);
                     });
}

ChainTrace run_dnp(const Denoiser& denoiser, const Quantizer& quantize, const Condition& cond,
                   const GuidanceConfig& config, const VarianceSchedule& sched) {
  check_cond(cond, config);
  Rng rng(config.seed);
  const Vec z_T = standard_normal(rng, denoiser.dimension());
  const int total = sched.total_steps();
  const DnsResult negative = run_dns(denoiser, cond, config, sched, z_T, total, total);
  const std::size_t n_star = quantize(negative.latent);
  return np_from(denoiser, cond, Condition::concept_at(n_star), config, sched, rng, z_T,
                 negative.calls);
}

ChainTrace run_cnp(const Denoiser& denoiser, const Quantizer& quantize, const Condition& cond,
                   const GuidanceConfig& config, const VarianceSchedule& sched) {
  check_cond(cond, config);
  Rng rng(config.seed);
  const Vec z_T = standard_normal(rng, denoiser.dimension());
  return outer_chain(denoiser, cond, config, sched, rng, z_T, 0,
                     [&](StepRecord& rec, const Vec& z, int t, CountingDenoiser& eps) {
                       const DnsResult negative = dns_counted(eps, cond, config, sched, z, t, t,
                                                              SamplerKind::kDdim, nullptr);
                       const std::size_t n_t = quantize(negative.latent);
                       rec.negative_concept = n_t;
                       rec.eps_cond = eps(z, t, cond);
                       rec.eps_neg = eps(z, t, Condition::concept_at(n_t));
                       rec.eps_combined = np_combine(*rec.eps_neg, rec.eps_cond, config.s);
                     });
}

std::vector<int> answer_k_profile(const GuidanceConfig& config, int total_steps) {
  std::vector<int> out;
  out.reserve(total_steps);
  for (int t = total_steps; t >= 1; --t) {
    int kt = schedule_k(config.k, t, total_steps, config.k_schedule_offset);
    if (!(t > total_steps * config.window_fraction)) kt = 0;
    out.push_back(std::min(kt, t));
  }
  return out;
}

ChainTrace run_answer(const Denoiser& denoiser, const Condition& cond,
                      const GuidanceConfig& config, const VarianceSchedule& sched) {
  check_cond(cond, config);
  Rng rng(config.seed);
  const Vec z_T = standard_normal(rng, denoiser.dimension());
  const int total = sched.total_steps();
  const std::vector<int> profile = answer_k_profile(config, total);
  return outer_chain(
      denoiser, cond, config, sched, rng, z_T, 0,
      [&](StepRecord& rec, const Vec& z, int t, CountingDenoiser& eps) {
        rec.eps_cond = eps(z, t, cond);
        rec.eps_uncond = eps(z, t, Condition::null());
        const int kt = profile[total - t];
        if (kt == 0) {
          rec.eps_combined = cfg_combine(*rec.eps_uncond, rec.eps_cond, config.s);
          return;
        }
        rec.k_t = kt;
        const DnsResult negative =
            dns_counted(eps, cond, config, sched, z, t, kt, SamplerKind::kDdim, nullptr);
        Vec eps_neg = negative.last_noise;
        if (config.normalize) {
          try {
            eps_neg = normalize_noise(eps_neg, *rec.eps_uncond);
          } catch (const DegenerateNoiseError& e) {
            throw DegenerateNoiseError("ANSWER step t=" + std::to_string(t) + ": " + e.what());
          }
        }
        rec.eps_neg = std::move(eps_neg);
        rec.eps_combined = np_combine(*rec.eps_neg, rec.eps_cond, config.s);
      });
}

ChainTrace run_chain(const Denoiser& denoiser, const Quantizer& quantize, const Condition& cond,
                     const GuidanceConfig& config, const VarianceSchedule& sched,
                     std::optional<Condition> negative) {
  switch (config.strategy) {
    case Strategy::kCfg: return run_cfg(denoiser, cond, config, sched);
    case Strategy::kNp:
      if (!negative) throw ParameterError("NP strategy needs a negative condition");
      return run_np(denoiser, cond, *negative, config, sched);
    case Strategy::kDns: return run_dns_chain(denoiser, cond, config, sched);
    case Strategy::kDnp:
      if (!quantize) throw ParameterError("DNP strategy needs a quantizer");
      return run_dnp(denoiser, quantize, cond, config, sched);
    case Strategy::kCnp:
      if (!quantize) throw ParameterError("CNP strategy needs a quantizer");
      return run_cnp(denoiser, quantize, cond, config, sched);
    case Strategy::kAnswer: return run_answer(denoiser, cond, config, sched);
  }
  throw ParameterError("unknown strategy");
}

std::uint64_t expected_denoiser_calls(const GuidanceConfig& config, int total_steps) {
  const auto T = static_cast<std::uint64_t>(total_steps);
  switch (config.strategy) {
    case Strategy::kCfg:
    case Strategy::kNp:
    case Strategy::kDns: return 2 * T;
    case Strategy::kDnp: return 4 * T;
    case Strategy::kCnp: return T * T + 3 * T;
    case Strategy::kAnswer: {
      std::uint64_t sum = 0;
      for (int kt : answer_k_profile(config, total_steps)) sum += static_cast<std::uint64_t>(kt);
      return 2 * T + 2 * sum;
    }
  }
  return 0;
}

std::optional<std::string> cnp_cost_warning(int total_steps) {
  if (total_steps <= kCnpWarnSteps) return std::nullopt;
  const auto T = static_cast<long long>(total_steps);
  return "warning: CNP with T=" + std::to_string(T) + " costs O(T^2) = " +
         std::to_string(T * T + 3 * T) + " denoiser calls per chain";
}

}  // namespace negguide
