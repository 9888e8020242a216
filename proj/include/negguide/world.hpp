#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include "json.hpp"

#include "negguide/types.hpp"

namespace negguide {

struct GaussianComponent {
  double weight = 1.0;
  Vec mean;
  Mat covariance;
};

struct Concept {
  std::string id;
  double prior = 1.0;
  std::vector<GaussianComponent> components;
};

/// What a denoiser is conditioned on: the null condition or one concept,
/// referenced by its index in the owning ConceptWorld.
class Condition {
 public:
  static Condition null() { return Condition(kNullIndex); }
  static Condition concept_at(std::size_t index) { return Condition(index); }

  bool is_null() const { return index_ == kNullIndex; }
  // Precondition: !is_null().
  std::size_t index() const { return index_; }

  bool operator==(const Condition&) const = default;

 private:
  static constexpr std::size_t kNullIndex = static_cast<std::size_t>(-1);
  explicit Condition(std::size_t index) : index_(index) {}
  std::size_t index_;
};

/// A discrete concept vocabulary; each concept is a Gaussian mixture in R^d.
///
/// Construction validates the whole world: priors and component weights sum
/// to one (1e-12), dimensions agree, covariances are symmetric and
/// positive definite. Immutable afterwards.
class ConceptWorld {
 public:
  ConceptWorld(int dimension, std::vector<Concept> concepts);

  int dimension() const { return dimension_; }
  std::size_t size() const { return concepts_.size(); }
  const std::vector<Concept>& concepts() const { return concepts_; }
  const Concept& concept_at(std::size_t i) const { return concepts_.at(i); }

  // Throws ParameterError for unknown ids.
  std::size_t index_of(std::string_view id) const;
  Condition condition(std::string_view id) const { return Condition::concept_at(index_of(id)); }
  std::string label(const Condition& c) const;

 private:
  int dimension_;
  std::vector<Concept> concepts_;
};

// {"dimension": d, "concepts": [{"id", "prior", "components": [{"weight",
// "mean", "cov_diag" | "cov"}]}]}. Errors are ConfigError naming the path,
// e.g. "concepts[1].components[0].mean".
ConceptWorld world_from_json(const nlohmann::json& doc);
ConceptWorld load_world(const std::filesystem::path& path);
nlohmann::json world_to_json(const ConceptWorld& world);

}  // namespace negguide
