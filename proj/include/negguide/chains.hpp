#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "negguide/guidance.hpp"
#include "negguide/schedule.hpp"
#include "negguide/scoremodel.hpp"

namespace negguide {

using Rng = std::mt19937_64;

Vec standard_normal(Rng& rng, int dimension);

/// Ancestral step with posterior variance beta_t:
/// z_{t-1} = (z_t - beta_t / sqrt(1 - ab_t) eps) / sqrt(1 - beta_t) + sqrt(beta_t) xi.
/// The rng overload draws xi ~ N(0, I) for t > 1 and uses xi = 0 at t = 1.
Vec ddpm_step(const Vec& z, int t, const Vec& eps_hat, const VarianceSchedule& sched,
              const Vec& xi);
Vec ddpm_step(const Vec& z, int t, const Vec& eps_hat, const VarianceSchedule& sched, Rng& rng);

/// Deterministic step through the predicted clean sample; returns z0_hat at t = 1.
Vec ddim_step(const Vec& z, int t, const Vec& eps_hat, const VarianceSchedule& sched);
Vec predict_clean(const Vec& z, int t, const Vec& eps_hat, const VarianceSchedule& sched);

/// Wraps a denoiser and counts every evaluation.
class CountingDenoiser {
 public:
  explicit CountingDenoiser(const Denoiser& inner, std::uint64_t start = 0)
      : inner_(inner), calls_(start) {}
  Vec operator()(const Vec& z, int t, const Condition& c) {
    ++calls_;
    return inner_.predict_noise(z, t, c);
  }
  std::uint64_t calls() const { return calls_; }
  int dimension() const { return inner_.dimension(); }

 private:
  const Denoiser& inner_;
  std::uint64_t calls_;
};

struct StepRecord {
  int t = 0;
  Vec z_before;
  Vec z_after;
  Vec eps_cond;
  std::optional<Vec> eps_uncond;  // absent on NP steps, which never query null
  std::optional<Vec> eps_neg;
  Vec eps_combined;
  int k_t = 0;
  std::optional<std::size_t> negative_concept;
  std::uint64_t denoiser_calls_so_far = 0;

  bool operator==(const StepRecord&) const = default;
};

struct ChainTrace {
  GuidanceConfig config;
  Condition condition = Condition::null();
  std::vector<StepRecord> records;  // t = T..1
  Vec final_sample;
  std::uint64_t total_denoiser_calls = 0;
};

// Bitwise equality of everything a chain computes (latents, noises, labels,
// counters); ignores the config.
bool same_trajectory(const ChainTrace& a, const ChainTrace& b);

struct DnsResult {
  Vec latent;
  Vec last_noise;  // combined noise of the final inner step (t_init - k + 1)
  std::uint64_t calls = 0;
};

/// k steps of the diffusion-negative chain from (z_init, t_init), combining
/// with dns_combine at scale s_n. Deterministic DDIM unless a DDPM sampler and
/// rng are supplied.
DnsResult run_dns(const Denoiser& denoiser, const Condition& cond, const GuidanceConfig& config,
                  const VarianceSchedule& sched, const Vec& z_init, int t_init, int k,
                  SamplerKind inner = SamplerKind::kDdim, Rng* rng = nullptr);

// Outer chains. Each owns an rng seeded from config.seed; z_T is its first draw.
ChainTrace run_cfg(const Denoiser& denoiser, const Condition& cond, const GuidanceConfig& config,
                   const VarianceSchedule& sched);
ChainTrace run_np(const Denoiser& denoiser, const Condition& cond, const Condition& negative,
                  const GuidanceConfig& config, const VarianceSchedule& sched);
// Full DNS chain with the configured outer sampler.
ChainTrace run_dns_chain(const Denoiser& denoiser, const Condition& cond,
                         const GuidanceConfig& config, const VarianceSchedule& sched);

/// The quantizer maps finished negative samples to concept labels.
using Quantizer = std::function<std::size_t(const Vec&)>;

ChainTrace run_dnp(const Denoiser& denoiser, const Quantizer& quantize, const Condition& cond,
                   const GuidanceConfig& config, const VarianceSchedule& sched);
ChainTrace run_cnp(const Denoiser& denoiser, const Quantizer& quantize, const Condition& cond,
                   const GuidanceConfig& config, const VarianceSchedule& sched);
ChainTrace run_answer(const Denoiser& denoiser, const Condition& cond,
                      const GuidanceConfig& config, const VarianceSchedule& sched);

/// Dispatch on config.strategy. NP needs `negative`; DNP/CNP need `quantize`.
ChainTrace run_chain(const Denoiser& denoiser, const Quantizer& quantize, const Condition& cond,
                     const GuidanceConfig& config, const VarianceSchedule& sched,
                     std::optional<Condition> negative = std::nullopt);

/// DNS budget actually executed at each step t = T..1 by run_answer
/// (schedule_k, window rule, capped at t).
std::vector<int> answer_k_profile(const GuidanceConfig& config, int total_steps);

/// Closed-form denoiser calls: CFG/NP/DNS 2T; DNP 4T; CNP T^2 + 3T;
/// ANSWER 2T + 2 sum K_t.
std::uint64_t expected_denoiser_calls(const GuidanceConfig& config, int total_steps);

inline constexpr int kCnpWarnSteps = 100;
std::optional<std::string> cnp_cost_warning(int total_steps);

}  // namespace negguide
