#include "negguide/scoremodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>

#include "negguide/errors.hpp"

namespace negguide {

namespace {

double log_sum_exp(const std::vector<double>& xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

void check_step(const VarianceSchedule& sched, int t, int lowest) {
  if (t < lowest || t > sched.total_steps()) {
    throw IndexError("step " + std::to_string(t) + " outside [" + std::to_string(lowest) +
                     ", " + std::to_string(sched.total_steps()) + "]");
  }
}

void check_dim(const ConceptWorld& world, const Vec& z) {
  if (z.size() != world.dimension()) {
    throw ShapeError("latent has dimension " + std::to_string(z.size()) + ", world has " +
                     std::to_string(world.dimension()));
  }
}

// Log-density of one diffused component plus (optionally) its score.
double diffused_component(const GaussianComponent& comp, double ab, const Vec& z, Vec* score) {
  const Eigen::Index d = z.size();
  Mat cov = ab * comp.covariance;
  cov.diagonal().array() += 1.0 - ab;
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw InvariantError("diffused covariance is not positive definite");
  }
  const Vec diff = z - std::sqrt(ab) * comp.mean;
  const Vec sol = llt.solve(diff);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  if (score) *score = -sol;
  return -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det +
                 diff.dot(sol));
}

// Mixture terms over the components selected by the condition. Each term is
// log(weight) + log N; the score, when requested, is responsibility-weighted.
double mixture(const ConceptWorld& world, const VarianceSchedule& sched, const Vec& z, int t,
               const Condition& c, Vec* score) {
  check_dim(world, z);
  const double ab = sched.alpha_bar(t);
  std::vector<double> logs;
  std::vector<Vec> scores;
  auto add_concept = [&](const Concept& entry, double log_prior) {
    for (const GaussianComponent& comp : entry.components) {
      Vec s;
      logs.push_back(log_prior + std::log(comp.weight) +
                     diffused_component(comp, ab, z, score ? &s : nullptr));
      if (score) scores.push_back(std::move(s));
    }
  };
  if (c.is_null()) {
    for (const Concept& entry : world.concepts()) add_concept(entry, std::log(entry.prior));
  } else {
    add_concept(world.concept_at(c.index()), 0.0);
  }
  const double total = log_sum_exp(logs);
  if (score) {
    score->setZero(z.size());
    for (std::size_t i = 0; i < logs.size(); ++i) {
      *score += std::exp(logs[i] - total) * scores[i];
    }
  }
  return total;
}

}  // namespace

double marginal_log_density(const ConceptWorld& world, const VarianceSchedule& sched,
                            const Vec& z, int t, const Condition& c) {
  check_step(sched, t, 0);
  return mixture(world, sched, z, t, c, nullptr);
}

Vec marginal_score(const ConceptWorld& world, const VarianceSchedule& sched, const Vec& z,
                   int t, const Condition& c) {
  check_step(sched, t, 0);
  Vec score;
  mixture(world, sched, z, t, c, &score);
  return score;
}

Vec analytic_epsilon(const ConceptWorld& world, const VarianceSchedule& sched, const Vec& z,
                     int t, const Condition& c) {
  check_step(sched, t, 1);
  Vec score;
  mixture(world, sched, z, t, c, &score);
  return -std::sqrt(1.0 - sched.alpha_bar(t)) * score;
}

std::vector<double> concept_log_posterior(const ConceptWorld& world,
                                          const VarianceSchedule& sched, const Vec& z, int t) {
  check_step(sched, t, 0);
  std::vector<double> logs(world.size());
  for (std::size_t i = 0; i < world.size(); ++i) {
    logs[i] = std::log(world.concept_at(i).prior) +
              mixture(world, sched, z, t, Condition::concept_at(i), nullptr);
  }
  const double total = log_sum_exp(logs);
  for (double& l : logs) l -= total;
  return logs;
}

std::vector<double> concept_posterior(const ConceptWorld& world, const VarianceSchedule& sched,
                                      const Vec& z, int t) {
  std::vector<double> post = concept_log_posterior(world, sched, z, t);
  for (double& p : post) p = std::exp(p);
  return post;
}

std::size_t quantize_to_concept(const ConceptWorld& world, const VarianceSchedule& sched,
                                const Vec& z) {
  const std::vector<double> lp = concept_log_posterior(world, sched, z, 0);
  std::size_t best = 0;
  for (std::size_t i = 1; i < lp.size(); ++i) {
    if (lp[i] > lp[best]) best = i;
  }
  return best;
}

}  // namespace negguide
