#include "negguide/world.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "negguide/errors.hpp"

namespace negguide {

namespace {

constexpr double kSumTolerance = 1e-12;

std::string comp_path(std::size_t c, std::size_t k) {
  return "concepts[" + std::to_string(c) + "].components[" + std::to_string(k) + "]";
}

}  // namespace

ConceptWorld::ConceptWorld(int dimension, std::vector<Concept> concepts)
    : dimension_(dimension), concepts_(std::move(concepts)) {
  if (dimension_ < 1) throw ConfigError("dimension: must be a positive integer");
  if (concepts_.empty()) throw ConfigError("concepts: world needs at least one concept");

  double prior_sum = 0.0;
  for (std::size_t c = 0; c < concepts_.size(); ++c) {
    const Concept& entry = concepts_[c];
    const std::string cpath = "concepts[" + std::to_string(c) + "]";
    if (entry.id.empty()) throw ConfigError(cpath + ".id: must be non-empty");
    for (std::size_t o = 0; o < c; ++o) {
      if (concepts_[o].id == entry.id) {
        throw ConfigError(cpath + ".id: duplicate id '" + entry.id + "'");
      }
    }
    if (!(entry.prior > 0.0)) throw ConfigError(cpath + ".prior: must be positive");
    prior_sum += entry.prior;
    if (entry.components.empty()) {
      throw ConfigError(cpath + ".components: need at least one component");
    }
    double weight_sum = 0.0;
    for (std::size_t k = 0; k < entry.components.size(); ++k) {
      const GaussianComponent& comp = entry.components[k];
      const std::string kpath = comp_path(c, k);
      if (!(comp.weight > 0.0)) throw ConfigError(kpath + ".weight: must be positive");
      weight_sum += comp.weight;
      if (comp.mean.size() != dimension_) {
        throw ConfigError(kpath + ".mean: expected " + std::to_string(dimension_) + " entries");
      }
      if (comp.covariance.rows() != dimension_ || comp.covariance.cols() != dimension_) {
        throw ConfigError(kpath + ".cov: expected a " + std::to_string(dimension_) + "x" +
                          std::to_string(dimension_) + " matrix");
      }
      if (!comp.covariance.isApprox(comp.covariance.transpose(), 1e-12)) {
        throw ConfigError(kpath + ".cov: not symmetric");
      }
      Eigen::LLT<Mat> llt(comp.covariance);
      if (llt.info() != Eigen::Success) {
        throw ConfigError(kpath + ".cov: not positive definite");
      }
    }
    if (std::abs(weight_sum - 1.0) > kSumTolerance) {
      throw ConfigError(cpath + ".components: weights sum to " + std::to_string(weight_sum) +
                        ", expected 1");
    }
  }
  if (std::abs(prior_sum - 1.0) > kSumTolerance) {
    throw ConfigError("concepts: priors sum to " + std::to_string(prior_sum) + ", expected 1");
  }
}

std::size_t ConceptWorld::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    if (concepts_[i].id == id) return i;
  }
  throw ParameterError("unknown concept '" + std::string(id) + "'");
}

std::string ConceptWorld::label(const Condition& c) const {
  return c.is_null() ? std::string("<null>") : concepts_.at(c.index()).id;
}

namespace {

Vec read_vector(const nlohmann::json& node, const std::string& path) {
  if (!node.is_array()) throw ConfigError(path + ": expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(node.size()));
  for (std::size_t i = 0; i < node.size(); ++i) {
    if (!node[i].is_number()) {
      throw ConfigError(path + "[" + std::to_string(i) + "]: expected a number");
    }
    v[static_cast<Eigen::Index>(i)] = node[i].get<double>();
  }
  return v;
}

double read_number(const nlohmann::json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) throw ConfigError(path + "." + key + ": missing");
  if (!obj[key].is_number()) throw ConfigError(path + "." + key + ": expected a number");
  return obj[key].get<double>();
}

}  // namespace

ConceptWorld world_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("<root>: expected an object");
  if (!doc.contains("dimension") || !doc["dimension"].is_number_integer()) {
    throw ConfigError("dimension: expected a positive integer");
  }
  const int dim = doc["dimension"].get<int>();
  if (dim < 1) throw ConfigError("dimension: expected a positive integer");
  if (!doc.contains("concepts") || !doc["concepts"].is_array()) {
    throw ConfigError("concepts: expected an array");
  }
  std::vector<Concept> concepts;
  const auto& jcs = doc["concepts"];
  for (std::size_t c = 0; c < jcs.size(); ++c) {
    const auto& jc = jcs[c];
    const std::string cpath = "concepts[" + std::to_string(c) + "]";
    if (!jc.is_object()) throw ConfigError(cpath + ": expected an object");
    Concept entry;
    if (!jc.contains("id") || !jc["id"].is_string()) throw ConfigError(cpath + ".id: expected a string");
    entry.id = jc["id"].get<std::string>();
    entry.prior = read_number(jc, "prior", cpath);
    if (!jc.contains("components") || !jc["components"].is_array()) {
      throw ConfigError(cpath + ".components: expected an array");
    }
    const auto& jks = jc["components"];
    for (std::size_t k = 0; k < jks.size(); ++k) {
      const auto& jk = jks[k];
      const std::string kpath = comp_path(c, k);
      if (!jk.is_object()) throw ConfigError(kpath + ": expected an object");
      GaussianComponent comp;
      comp.weight = jk.contains("weight") ? read_number(jk, "weight", kpath) : 1.0;
      if (!jk.contains("mean")) throw ConfigError(kpath + ".mean: missing");
      comp.mean = read_vector(jk["mean"], kpath + ".mean");
      if (comp.mean.size() != dim) {
        throw ConfigError(kpath + ".mean: expected " + std::to_string(dim) + " entries");
      }
      const bool has_diag = jk.contains("cov_diag");
      const bool has_full = jk.contains("cov");
      if (has_diag == has_full) {
        throw ConfigError(kpath + ": exactly one of cov_diag or cov is required");
      }
      if (has_diag) {
        Vec diag = read_vector(jk["cov_diag"], kpath + ".cov_diag");
        if (diag.size() != dim) {
          throw ConfigError(kpath + ".cov_diag: expected " + std::to_string(dim) + " entries");
        }
        comp.covariance = diag.asDiagonal();
      } else {
        const auto& rows = jk["cov"];
        if (!rows.is_array() || rows.size() != static_cast<std::size_t>(dim)) {
          throw ConfigError(kpath + ".cov: expected " + std::to_string(dim) + " rows");
        }
        comp.covariance.resize(dim, dim);
        for (int r = 0; r < dim; ++r) {
          Vec row = read_vector(rows[r], kpath + ".cov[" + std::to_string(r) + "]");
          if (row.size() != dim) {
            throw ConfigError(kpath + ".cov[" + std::to_string(r) + "]: expected " +
                              std::to_string(dim) + " entries");
          }
          comp.covariance.row(r) = row.transpose();
        }
      }
      entry.components.push_back(std::move(comp));
    }
    concepts.push_back(std::move(entry));
  }
  return ConceptWorld(dim, std::move(concepts));
}

ConceptWorld load_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open world file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return world_from_json(doc);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

nlohmann::json world_to_json(const ConceptWorld& world) {
  nlohmann::json doc;
  doc["dimension"] = world.dimension();
  doc["concepts"] = nlohmann::json::array();
  for (const Concept& c : world.concepts()) {
    nlohmann::json jc;
    jc["id"] = c.id;
    jc["prior"] = c.prior;
    jc["components"] = nlohmann::json::array();
    for (const GaussianComponent& k : c.components) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index r = 0; r < k.covariance.rows(); ++r) {
        rows.push_back(std::vector<double>(k.covariance.row(r).begin(), k.covariance.row(r).end()));
      }
      jc["components"].push_back({{"weight", k.weight},
                                  {"mean", std::vector<double>(k.mean.begin(), k.mean.end())},
                                  {"cov", rows}});
    }
    doc["concepts"].push_back(jc);
  }
  return doc;
}

}  // namespace negguide
