#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <Eigen/QR>

#include "negguide/world.hpp"

namespace negguide::testing {

inline std::filesystem::path repo_path(const std::string& rel) {
  return std::filesystem::path(NEGGUIDE_SOURCE_DIR) / rel;
}

inline Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

inline GaussianComponent isotropic(const Vec& mean, double var, double weight = 1.0) {
  return {weight, mean, var * Mat::Identity(mean.size(), mean.size())};
}

// Two equal-prior 1-D concepts N(-m, var) and N(+m, var), named "neg" and "pos".
inline ConceptWorld symmetric_pair_1d(double m, double var = 1.0) {
  return ConceptWorld(1, {{"neg", 0.5, {isotropic(vec({-m}), var)}},
                          {"pos", 0.5, {isotropic(vec({m}), var)}}});
}

inline ConceptWorld standard_normal_world(int d) {
  return ConceptWorld(d, {{"x", 1.0, {isotropic(Vec::Zero(d), 1.0)}}});
}

// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
template <class Rng>
Mat random_spd(Rng& rng, int d, double lo = 0.2, double hi = 1.5) {
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(lo, hi);
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = n(rng);
  Eigen::HouseholderQR<Mat> qr(a);
  const Mat q = qr.householderQ();
  Vec eig(d);
  for (int i = 0; i < d; ++i) eig[i] = u(rng);
  Mat s = q * eig.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

template <class Rng>
Vec random_vec(Rng& rng, int d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

// Random world: n_concepts concepts, 1..3 full-covariance components each.
template <class Rng>
ConceptWorld random_world(Rng& rng, int d, int n_concepts) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::uniform_int_distribution<int> nc(1, 3);
  std::vector<double> priors(n_concepts);
  double total = 0.0;
  for (double& p : priors) total += (p = u(rng));
  std::vector<Concept> concepts;
  double assigned = 0.0;
  for (int c = 0; c < n_concepts; ++c) {
    Concept entry;
    entry.id = "c" + std::to_string(c);
    entry.prior = c + 1 < n_concepts ? priors[c] / total : 1.0 - assigned;
    assigned += entry.prior;
    const int k = nc(rng);
    double wtot = 0.0;
    std::vector<double> w(k);
    for (double& x : w) wtot += (x = u(rng));
    double wassigned = 0.0;
    for (int j = 0; j < k; ++j) {
      const double weight = j + 1 < k ? w[j] / wtot : 1.0 - wassigned;
      wassigned += weight;
      entry.components.push_back({weight, random_vec(rng, d, 1.5), random_spd(rng, d)});
    }
    concepts.push_back(std::move(entry));
  }
  return ConceptWorld(d, std::move(concepts));
}

}  // namespace negguide::testing
