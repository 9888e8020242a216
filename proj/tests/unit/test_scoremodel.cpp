#include <cmath>
#include <numbers>

#include "doctest.h"
#include "negguide/errors.hpp"
#include "negguide/scoremodel.hpp"
#include "support.hpp"

using namespace negguide;
using testing::vec;

namespace {

const VarianceSchedule kSched = build_schedule(ScheduleKind::kLinear, 40, 1e-4, 0.02);

double std_normal_logpdf(const Vec& z) {
  return -0.5 * z.squaredNorm() - 0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi);
}

double normal_pdf_1d(double x, double m, double var) {
  return std::exp(-0.5 * (x - m) * (x - m) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

Vec fd_gradient(const ConceptWorld& w, const Vec& z, int t, const Condition& c, double h = 1e-5) {
  Vec g(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    Vec zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    g[i] = (marginal_log_density(w, kSched, zp, t, c) - marginal_log_density(w, kSched, zm, t, c)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_SUITE("scoremodel") {

TEST_CASE("unit Gaussian world keeps the standard normal density at every t") {
  const ConceptWorld w = testing::standard_normal_world(3);
  const Vec z = vec({0.3, -1.2, 2.0});
  for (int t : {0, 1, 17, 40}) {
    CHECK(marginal_log_density(w, kSched, z, t, Condition::concept_at(0)) ==
          doctest::Approx(std_normal_logpdf(z)).epsilon(1e-13));
    CHECK(marginal_log_density(w, kSched, z, t, Condition::null()) ==
          doctest::Approx(std_normal_logpdf(z)).epsilon(1e-13));
  }
}

TEST_CASE("two-concept 1-D null density at the midpoint") {
  const ConceptWorld w = testing::symmetric_pair_1d(1.0);
  const double expected = std::log(0.5 * normal_pdf_1d(0, 1, 1) + 0.5 * normal_pdf_1d(0, -1, 1));
  CHECK(marginal_log_density(w, kSched, vec({0.0}), 0, Condition::null()) ==
        doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("diffused densities integrate to one") {
  const ConceptWorld w(1, {{"a", 0.3, {testing::isotropic(vec({-2.0}), 0.3, 0.4), testing::isotropic(vec({1.0}), 0.8, 0.6)}},
                           {"b", 0.7, {testing::isotropic(vec({2.5}), 0.5)}}});
  for (int t : {0, 1, 20, 40}) {
    for (auto c : {Condition::null(), Condition::concept_at(0), Condition::concept_at(1)}) {
      // composite Simpson on [-10, 10]
      const int n = 20000;
      const double a = -10.0, h = 20.0 / n;
      double sum = 0.0;
      for (int i = 0; i <= n; ++i) {
        const double wgt = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        sum += wgt * std::exp(marginal_log_density(w, kSched, vec({a + i * h}), t, c));
      }
      CHECK(sum * h / 3.0 == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("single unit-covariance component has the closed-form epsilon") {
  const Vec mu = vec({1.5, -0.5});
  const ConceptWorld w(2, {{"a", 1.0, {testing::isotropic(mu, 1.0)}}});
  const Vec z = vec({0.2, 0.9});
  for (int t : {1, 10, 40}) {
    const double ab = kSched.alpha_bar(t);
    const Vec expected = std::sqrt(1 - ab) * (z - std::sqrt(ab) * mu);
    CHECK((analytic_epsilon(w, kSched, z, t, Condition::concept_at(0)) - expected).norm() < 1e-13);
    CHECK(analytic_epsilon(w, kSched, std::sqrt(ab) * mu, t, Condition::concept_at(0)).norm() < 1e-14);
  }
}

TEST_CASE("epsilon matches finite differences of the log density on random worlds") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> ut(1, 40);
  double worst = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const int d = 1 + trial % 3;
    const ConceptWorld w = testing::random_world(rng, d, 3);
    const Vec z = testing::random_vec(rng, d, 2.0);
    const int t = ut(rng);
    const Condition c = trial % 4 == 0 ? Condition::null() : Condition::concept_at(trial % 3);
    const Vec eps = analytic_epsilon(w, kSched, z, t, c);
    const Vec expected = -std::sqrt(1 - kSched.alpha_bar(t)) * fd_gradient(w, z, t, c);
    const Vec score = marginal_score(w, kSched, z, t, c);
    CHECK((score + eps / std::sqrt(1 - kSched.alpha_bar(t))).norm() < 1e-10);
    worst = std::max(worst, (eps - expected).cwiseAbs().maxCoeff() / std::max(expected.cwiseAbs().maxCoeff(), 1e-8));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("posterior is Bayes over the conditional densities") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const ConceptWorld w = testing::random_world(rng, 2, 3);
    const Vec z = testing::random_vec(rng, 2, 2.0);
    const int t = trial % 41;
    const auto post = concept_posterior(w, kSched, z, t);
    const auto logpost = concept_log_posterior(w, kSched, z, t);
    const double log_null = marginal_log_density(w, kSched, z, t, Condition::null());
    double total = 0.0;
    for (std::size_t c = 0; c < w.size(); ++c) {
      const double expected = std::log(w.concept_at(c).prior) +
                              marginal_log_density(w, kSched, z, t, Condition::concept_at(c)) - log_null;
      CHECK(logpost[c] == doctest::Approx(expected).epsilon(1e-10));
      CHECK(post[c] == doctest::Approx(std::exp(logpost[c])).epsilon(1e-12));
      total += post[c];
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("posterior symmetry and separation") {
  const ConceptWorld sym = testing::symmetric_pair_1d(1.0);
  for (int t : {0, 5, 40}) {
    const auto p = concept_posterior(sym, kSched, vec({0.0}), t);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-14));
  }
  const ConceptWorld far = testing::symmetric_pair_1d(3.0, 0.25);  // 12 sigma apart
  CHECK(concept_posterior(far, kSched, vec({-3.0}), 0)[0] > 0.99);
  CHECK(quantize_to_concept(far, kSched, vec({3.0})) == 1);
}

TEST_CASE("quantize breaks ties toward the lowest index and agrees with brute-force argmax") {
  CHECK(quantize_to_concept(testing::symmetric_pair_1d(1.0), kSched, vec({0.0})) == 0);
  std::mt19937_64 rng(8);
  const ConceptWorld w = testing::random_world(rng, 2, 4);
  for (int i = 0; i < 200; ++i) {
    const Vec z = testing::random_vec(rng, 2, 2.5);
    std::size_t best = 0;
    double best_lp = -INFINITY;
    for (std::size_t c = 0; c < w.size(); ++c) {
      const double lp = std::log(w.concept_at(c).prior) +
                        marginal_log_density(w, kSched, z, 0, Condition::concept_at(c));
      if (lp > best_lp) best_lp = lp, best = c;
    }
    CHECK(quantize_to_concept(w, kSched, z) == best);
  }
}

TEST_CASE("analytic denoiser forwards to analytic_epsilon") {
  const ConceptWorld w = load_world(testing::repo_path("data/worlds/adversarial.json"));
  const AnalyticDenoiser den(w, kSched);
  const Vec z = vec({0.4, -0.1});
  CHECK(den.dimension() == 2);
  CHECK(den.predict_noise(z, 7, Condition::concept_at(2)) ==
        analytic_epsilon(w, kSched, z, 7, Condition::concept_at(2)));
}

TEST_CASE("shape and index errors") {
  const ConceptWorld w = testing::symmetric_pair_1d(1.0);
  CHECK_THROWS_AS(analytic_epsilon(w, kSched, vec({0.0}), 0, Condition::null()), IndexError);
  CHECK_THROWS_AS(analytic_epsilon(w, kSched, vec({0.0}), 41, Condition::null()), IndexError);
  CHECK_THROWS_AS(marginal_log_density(w, kSched, vec({0.0, 1.0}), 3, Condition::null()), ShapeError);
  CHECK_THROWS_AS(concept_posterior(w, kSched, vec({0.0}), -1), IndexError);
}

}
