#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace negguide::stats {

/// P(X >= successes) for X ~ Binomial(trials, p).
double binomial_upper_tail(std::uint64_t successes, std::uint64_t trials, double p = 0.5);

struct SignTestResult {
  std::uint64_t wins = 0;
  std::uint64_t losses = 0;
  std::uint64_t ties = 0;
  double win_rate = 0.5;  // (wins + ties / 2) / n
  double p_value = 1.0;   // one-sided, ties dropped: P(X >= wins), X ~ Bin(wins + losses, 1/2)
};

/// Paired comparison of a against b; larger is better.
SignTestResult paired_sign_test(const std::vector<double>& a, const std::vector<double>& b);

/// Wasserstein-1 distance between the empirical distribution of `samples`
/// and a continuous 1-D distribution given by its CDF. `scale` sets the
/// integration margin beyond the sample range.
double wasserstein1_to_cdf(std::vector<double> samples, const std::function<double(double)>& cdf,
                           double scale = 1.0);

/// Kolmogorov-Smirnov statistic sup |F_n - F|.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

double normal_cdf(double x, double mean = 0.0, double sd = 1.0);

}  // namespace negguide::stats
