#include "negguide/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "negguide/errors.hpp"

namespace negguide::stats {

double binomial_upper_tail(std::uint64_t successes, std::uint64_t trials, double p) {
  if (successes > trials) return 0.0;
  if (successes == 0) return 1.0;
  const double n = static_cast<double>(trials);
  const double lp = std::log(p), lq = std::log1p(-p);
  // Sum in log space from the largest term down.
  std::vector<double> terms;
  for (std::uint64_t k = successes; k <= trials; ++k) {
    const double kd = static_cast<double>(k);
    terms.push_back(std::lgamma(n + 1) - std::lgamma(kd + 1) - std::lgamma(n - kd + 1) +
                    kd * lp + (n - kd) * lq);
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  return std::min(1.0, std::exp(m) * acc);
}

SignTestResult paired_sign_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("paired_sign_test: samples differ in length");
  if (a.empty()) throw ParameterError("paired_sign_test: no pairs");
  SignTestResult r;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) ++r.wins;
    else if (a[i] < b[i]) ++r.losses;
    else ++r.ties;
  }
  r.win_rate = (static_cast<double>(r.wins) + 0.5 * static_cast<double>(r.ties)) /
               static_cast<double>(a.size());
  r.p_value = binomial_upper_tail(r.wins, r.wins + r.losses, 0.5);
  return r;
}

double normal_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

double wasserstein1_to_cdf(std::vector<double> samples, const std::function<double(double)>& cdf,
                           double scale) {
  if (samples.empty()) throw ParameterError("wasserstein1_to_cdf: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  const double lo = samples.front() - 12.0 * scale;
  const double hi = samples.back() + 12.0 * scale;

  // Breakpoints: every sample plus a uniform grid. F_n is constant between
  // consecutive breakpoints; |c - F| is integrated there with Simpson's rule.
  constexpr int kGrid = 4000;
  std::vector<double> xs = samples;
  for (int i = 0; i <= kGrid; ++i) xs.push_back(lo + (hi - lo) * i / kGrid);
  std::sort(xs.begin(), xs.end());

  double total = 0.0;
  std::size_t below = 0;  // samples <= left endpoint
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double a = xs[i], b = xs[i + 1];
    while (below < samples.size() && samples[below] <= a) ++below;
    if (b <= a) continue;
    const double c = static_cast<double>(below) / n;
    const double m = 0.5 * (a + b);
    total += (b - a) / 6.0 *
             (std::abs(c - cdf(a)) + 4.0 * std::abs(c - cdf(m)) + std::abs(c - cdf(b)));
  }
  return total;
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw ParameterError("ks_statistic: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

}  // namespace negguide::stats
