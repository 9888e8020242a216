#pragma once

#include <cstddef>
#include <vector>

#include "negguide/schedule.hpp"
#include "negguide/types.hpp"
#include "negguide/world.hpp"

namespace negguide {

// Exact quantities of a concept world diffused to step t (t = 0 is the clean
// distribution). Each component N(mu, Sigma) becomes
// N(sqrt(ab) mu, ab Sigma + (1 - ab) I) with ab = alpha_bar(t).

double marginal_log_density(const ConceptWorld& world, const VarianceSchedule& sched,
                            const Vec& z, int t, const Condition& c);

/// Gradient of marginal_log_density with respect to z.
Vec marginal_score(const ConceptWorld& world, const VarianceSchedule& sched,
                   const Vec& z, int t, const Condition& c);

/// -sqrt(1 - alpha_bar_t) * score, the noise an optimal denoiser predicts.
/// Requires 1 <= t <= T.
Vec analytic_epsilon(const ConceptWorld& world, const VarianceSchedule& sched,
                     const Vec& z, int t, const Condition& c);

// p(concept | z_t) by Bayes over the vocabulary, indexed like world.concepts().
std::vector<double> concept_log_posterior(const ConceptWorld& world,
                                          const VarianceSchedule& sched, const Vec& z, int t);
std::vector<double> concept_posterior(const ConceptWorld& world, const VarianceSchedule& sched,
                                      const Vec& z, int t);

// Bayes-optimal label of a finished sample (argmax posterior at t = 0).
// Ties go to the lowest concept index.
std::size_t quantize_to_concept(const ConceptWorld& world, const VarianceSchedule& sched,
                                const Vec& z);

/// Noise predictor epsilon(z_t; t, c). Implementations must be deterministic
/// and return a vector of the input's dimension.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual int dimension() const = 0;
  virtual Vec predict_noise(const Vec& z, int t, const Condition& c) const = 0;
};

/// Denoiser backed by the closed-form mixture score.
class AnalyticDenoiser final : public Denoiser {
 public:
  AnalyticDenoiser(ConceptWorld world, VarianceSchedule sched)
      : world_(std::move(world)), sched_(std::move(sched)) {}

  int dimension() const override { return world_.dimension(); }
  Vec predict_noise(const Vec& z, int t, const Condition& c) const override {
    return analytic_epsilon(world_, sched_, z, t, c);
  }

  const ConceptWorld& world() const { return world_; }
  const VarianceSchedule& schedule() const { return sched_; }

 private:
  ConceptWorld world_;
  VarianceSchedule sched_;
};

}  // namespace negguide
