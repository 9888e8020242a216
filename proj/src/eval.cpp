#include "negguide/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "negguide/errors.hpp"
#include "negguide/parallel.hpp"

namespace negguide {

OddsRatio odds_ratio(const ConceptWorld& world, const VarianceSchedule& sched, const Vec& z, int t,
                     std::size_t pos, std::size_t neg) {
  if (pos == neg) throw ParameterError("odds_ratio: positive and negative concepts coincide");
  if (pos >= world.size() || neg >= world.size()) throw ParameterError("odds_ratio: unknown concept");
  const std::vector<double> lp = concept_log_posterior(world, sched, z, t);
  if (lp[neg] == -std::numeric_limits<double>::infinity()) {
    return {std::numeric_limits<double>::infinity(), true};
  }
  const double r = std::exp(lp[pos] - lp[neg]);
  return {r, !std::isfinite(r)};
}

double tilted_log_density(const ConceptWorld& world, const VarianceSchedule& sched, const Vec& z,
                          int t, std::size_t pos, double s, std::optional<std::size_t> neg) {
  const double base = marginal_log_density(world, sched, z, t, Condition::null());
  if (s == 0.0) return base;
  const std::vector<double> lp = concept_log_posterior(world, sched, z, t);
  double tilt = lp.at(pos);
  if (neg) tilt -= lp.at(*neg);
  return base + s * tilt;
}

double positive_log_odds(const ConceptWorld& world, const VarianceSchedule& sched, const Vec& z,
                         std::size_t pos) {
  const std::vector<double> lp = concept_log_posterior(world, sched, z, 0);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lp.size(); ++i) {
    if (i != pos) m = std::max(m, lp[i]);
  }
  if (!std::isfinite(m)) return std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    if (i != pos) acc += std::exp(lp[i] - m);
  }
  return lp.at(pos) - (m + std::log(acc));
}

double compliance_rate(const std::vector<Vec>& samples, const ConceptWorld& world,
                       const VarianceSchedule& sched, std::size_t pos) {
  if (samples.empty()) throw ParameterError("compliance_rate: empty sample list");
  std::size_t hits = 0;
  for (const Vec& z : samples) {
    if (concept_posterior(world, sched, z, 0).at(pos) > 0.5) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double distance_to_target(const std::vector<Vec>& samples, const ConceptWorld& world,
                          std::size_t pos) {
  if (samples.empty()) throw ParameterError("distance_to_target: empty sample list");
  const Concept& entry = world.concept_at(pos);
  auto marginal_cdf = [&entry](int dim) {
    return [&entry, dim](double x) {
      double f = 0.0;
      for (const GaussianComponent& k : entry.components) {
        f += k.weight * stats::normal_cdf(x, k.mean[dim], std::sqrt(k.covariance(dim, dim)));
      }
      return f;
    };
  };
  auto coordinate = [&samples](int dim) {
    std::vector<double> xs;
    xs.reserve(samples.size());
    for (const Vec& z : samples) xs.push_back(z[dim]);
    return xs;
  };
  if (world.dimension() == 1) {
    double scale = 0.0;
    for (const GaussianComponent& k : entry.components) {
      scale = std::max(scale, std::sqrt(k.covariance(0, 0)));
    }
    return stats::wasserstein1_to_cdf(coordinate(0), marginal_cdf(0), scale);
  }
  double worst = 0.0;
  for (int d = 0; d < world.dimension(); ++d) {
    worst = std::max(worst, stats::ks_statistic(coordinate(d), marginal_cdf(d)));
  }
  return worst;
}

Quantizer ExperimentContext::quantizer() const {
  const ConceptWorld* w = &world;
  const VarianceSchedule* s = &sched;
  return [w, s](const Vec& z) { return quantize_to_concept(*w, *s, z); };
}


std::vector<ChainOutcome> run_seeds(const ExperimentContext& ctx, const StrategySpec& spec,
                                    std::size_t pos, std::uint64_t base_seed, std::size_t n) {
  if (n == 0) throw ParameterError("run_seeds: need at least one seed");
  const Quantizer quantize = ctx.quantizer();
  const Condition cond = Condition::concept_at(pos);
  std::vector<ChainOutcome> out(n);
  parallel_for(n, ctx.workers, [&](std::size_t i) {
    GuidanceConfig cfg = spec.config;
    cfg.seed = base_seed + i;
    const ChainTrace trace = run_chain(ctx.denoiser, quantize, cond, cfg, ctx.sched, spec.negative);
    out[i].seed = cfg.seed;
    out[i].sample = trace.final_sample;
    out[i].positive_posterior = concept_posterior(ctx.world, ctx.sched, trace.final_sample, 0)[pos];
    out[i].calls = trace.total_denoiser_calls;
  });
  return out;
}

MetricsReport summarize(const std::string& label, const std::vector<ChainOutcome>& outcomes,
                        const ExperimentContext& ctx, std::size_t pos, double wall_time) {
  if (outcomes.empty()) throw ParameterError("summarize: no outcomes");
  MetricsReport r;
  r.label = label;
  r.samples = outcomes.size();
  std::vector<Vec> samples;
  double log_odds = 0.0, posterior = 0.0;
  for (const ChainOutcome& o : outcomes) {
    samples.push_back(o.sample);
    log_odds += positive_log_odds(ctx.world, ctx.sched, o.sample, pos);
    posterior += o.positive_posterior;
    r.total_calls += o.calls;
  }
  const double n = static_cast<double>(outcomes.size());
  r.compliance_rate = compliance_rate(samples, ctx.world, ctx.sched, pos);
  r.mean_log_odds = log_odds / n;
  r.mean_positive_posterior = posterior / n;
  r.distance_to_target = distance_to_target(samples, ctx.world, pos);
  r.denoiser_calls = outcomes.front().calls;
  r.wall_time = wall_time;
  return r;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Comparison compare_strategies(const ExperimentContext& ctx, const std::vector<StrategySpec>& specs,
                              std::size_t pos, std::size_t n_seeds) {
  if (specs.empty()) throw ParameterError("compare_strategies: no strategies");
  for (const StrategySpec& s : specs) {
    if (s.config.sampler != specs.front().config.sampler) {
      throw ParameterError("compare_strategies: all strategies must share the sampler");
    }
  }
  const std::uint64_t base_seed = specs.front().config.seed;
  Comparison cmp;
  for (const StrategySpec& s : specs) {
    const auto start = std::chrono::steady_clock::now();
    cmp.outcomes.push_back(run_seeds(ctx, s, pos, base_seed, n_seeds));
    cmp.reports.push_back(summarize(s.label, cmp.outcomes.back(), ctx, pos, seconds_since(start)));
  }
  const std::size_t m = specs.size();
  std::vector<std::vector<double>> scores(m);
  for (std::size_t a = 0; a < m; ++a) {
    for (const ChainOutcome& o : cmp.outcomes[a]) scores[a].push_back(o.positive_posterior);
  }
  cmp.pairwise.assign(m, std::vector<stats::SignTestResult>(m));
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      cmp.pairwise[a][b] = stats::paired_sign_test(scores[a], scores[b]);
    }
  }
  return cmp;
}

DriftTable negative_drift_experiment(const ExperimentContext& ctx, const GuidanceConfig& config,
                                     std::size_t pos, const std::vector<int>& t_grid,
                                     std::size_t n_seeds) {
  const int total = ctx.sched.total_steps();
  if (t_grid.empty()) throw ParameterError("negative_drift_experiment: empty t_grid");
  for (int t : t_grid) {
    if (t < 1 || t > total) {
      throw ParameterError("negative_drift_experiment: t=" + std::to_string(t) + " outside [1, T]");
    }
  }
  if (n_seeds == 0) throw ParameterError("negative_drift_experiment: need at least one seed");
  DriftTable table;
  table.t_grid = t_grid;
  table.seeds.resize(n_seeds);
  table.labels.assign(n_seeds, std::vector<std::size_t>(t_grid.size()));
  const Condition cond = Condition::concept_at(pos);
  GuidanceConfig cfg = config;
  cfg.strategy = Strategy::kCfg;
  parallel_for(n_seeds, ctx.workers, [&](std::size_t i) {
    GuidanceConfig run = cfg;
    run.seed = config.seed + i;
    const ChainTrace trace = run_cfg(ctx.denoiser, cond, run, ctx.sched);
    table.seeds[i] = run.seed;
    for (std::size_t j = 0; j < t_grid.size(); ++j) {
      const int t = t_grid[j];
      const Vec& z_t = trace.records[static_cast<std::size_t>(total - t)].z_before;
      const DnsResult neg = run_dns(ctx.denoiser, cond, run, ctx.sched, z_t, t, t);
      table.labels[i][j] = quantize_to_concept(ctx.world, ctx.sched, neg.latent);
    }
  });
  std::size_t changed = 0;
  for (const auto& row : table.labels) {
    if (std::adjacent_find(row.begin(), row.end(), std::not_equal_to<>()) != row.end()) ++changed;
  }
  table.nonconstant_fraction = static_cast<double>(changed) / static_cast<double>(n_seeds);
  return table;
}

std::vector<SweepRow> sweep_k(const ExperimentContext& ctx, const GuidanceConfig& base,
                              std::size_t pos, const std::vector<int>& k_values,
                              std::size_t n_seeds) {
  if (k_values.empty()) throw ParameterError("sweep_k: no K values");
  std::vector<SweepRow> rows;
  for (int k : k_values) {
    if (k < 0) throw ParameterError("sweep_k: K must be nonnegative");
    StrategySpec spec{"ANSWER(K=" + std::to_string(k) + ")", base, std::nullopt};
    spec.config.strategy = Strategy::kAnswer;
    spec.config.k = k;
    const auto start = std::chrono::steady_clock::now();
    const auto outcomes = run_seeds(ctx, spec, pos, base.seed, n_seeds);
    SweepRow row;
    row.k = k;
    row.metrics = summarize(spec.label, outcomes, ctx, pos, seconds_since(start));
    row.expected_calls = expected_denoiser_calls(spec.config, ctx.sched.total_steps());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace negguide
