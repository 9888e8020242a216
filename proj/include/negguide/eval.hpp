#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "negguide/chains.hpp"
#include "negguide/stats.hpp"

namespace negguide {

struct OddsRatio {
  double value = 1.0;
  bool infinite = false;  // negative posterior underflowed to zero
};

/// p(pos | z_t) / p(neg | z_t) from exact posteriors.
OddsRatio odds_ratio(const ConceptWorld& world, const VarianceSchedule& sched, const Vec& z, int t,
                     std::size_t pos, std::size_t neg);

/// Unnormalized log of p(z_t) p(pos|z_t)^s, or, with a negative,
/// p(z_t) [p(pos|z_t) / p(neg|z_t)]^s.
double tilted_log_density(const ConceptWorld& world, const VarianceSchedule& sched, const Vec& z,
                          int t, std::size_t pos, double s,
                          std::optional<std::size_t> neg = std::nullopt);

/// log(p / (1 - p)) for p = p(pos | z_0), computed in log space.
double positive_log_odds(const ConceptWorld& world, const VarianceSchedule& sched, const Vec& z,
                         std::size_t pos);

/// Fraction of samples with p(pos | z_0) > 0.5.
double compliance_rate(const std::vector<Vec>& samples, const ConceptWorld& world,
                       const VarianceSchedule& sched, std::size_t pos);

/// Distance from samples to the clean distribution of concept `pos`:
/// Wasserstein-1 in one dimension, otherwise the largest per-coordinate
/// Kolmogorov-Smirnov statistic against the concept's marginals.
double distance_to_target(const std::vector<Vec>& samples, const ConceptWorld& world,
                          std::size_t pos);

struct MetricsReport {
  std::string label;
  std::size_t samples = 0;
  double compliance_rate = 0.0;
  double mean_log_odds = 0.0;
  double mean_positive_posterior = 0.0;
  double distance_to_target = 0.0;
  std::uint64_t denoiser_calls = 0;  // per chain
  std::uint64_t total_calls = 0;
  double wall_time = 0.0;  // seconds; never written to reproducible files
};

/// Everything a batch of chains shares. References must outlive the context.
struct ExperimentContext {
  const ConceptWorld& world;
  const VarianceSchedule& sched;
  const Denoiser& denoiser;
  int workers = 1;

  Quantizer quantizer() const;
};

struct StrategySpec {
  std::string label;
  GuidanceConfig config;
  std::optional<Condition> negative;  // NP only
};

struct ChainOutcome {
  std::uint64_t seed = 0;
  Vec sample;
  double positive_posterior = 0.0;
  std::uint64_t calls = 0;
};

/// Runs seeds base_seed .. base_seed + n - 1. Output is ordered by seed
/// regardless of worker count.
std::vector<ChainOutcome> run_seeds(const ExperimentContext& ctx, const StrategySpec& spec,
                                    std::size_t pos, std::uint64_t base_seed, std::size_t n);

MetricsReport summarize(const std::string& label, const std::vector<ChainOutcome>& outcomes,
                        const ExperimentContext& ctx, std::size_t pos, double wall_time);

struct Comparison {
  std::vector<MetricsReport> reports;
  // pairwise[a][b]: a's paired wins over b, judged by p(pos | z_0).
  std::vector<std::vector<stats::SignTestResult>> pairwise;
  std::vector<std::vector<ChainOutcome>> outcomes;
};

/// Paired-seed comparison: chain i of every strategy uses seed
/// specs.front().config.seed + i.
Comparison compare_strategies(const ExperimentContext& ctx, const std::vector<StrategySpec>& specs,
                              std::size_t pos, std::size_t n_seeds);

struct DriftTable {
  std::vector<int> t_grid;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<std::size_t>> labels;  // [seed][t_grid index]
  double nonconstant_fraction = 0.0;
};

/// For each seed, runs a CFG chain and, from its z_t at every t in the grid,
/// a DNS chain to completion whose result is quantized.
DriftTable negative_drift_experiment(const ExperimentContext& ctx, const GuidanceConfig& config,
                                     std::size_t pos, const std::vector<int>& t_grid,
                                     std::size_t n_seeds);

struct SweepRow {
  int k = 0;
  MetricsReport metrics;
  std::uint64_t expected_calls = 0;
};

/// ANSWER at each K (K = 0 is plain CFG), same paired seeds for every row.
std::vector<SweepRow> sweep_k(const ExperimentContext& ctx, const GuidanceConfig& base,
                              std::size_t pos, const std::vector<int>& k_values,
                              std::size_t n_seeds);

}  // namespace negguide
