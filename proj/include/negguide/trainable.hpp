#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "negguide/scoremodel.hpp"

namespace negguide {

enum class Activation { kTanh, kSilu, kRelu };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

struct TrainableConfig {
  std::vector<int> hidden = {64, 64};
  Activation activation = Activation::kSilu;
  int time_features = 8;  // even; sin/cos pairs of t/T at octave frequencies
  int embedding_dim = 4;
  double learning_rate = 2e-3;
  long iterations = 4000;
  int batch_size = 128;
  double condition_dropout = 0.1;
};

/// Small fully connected noise predictor: input is [z, time features,
/// condition embedding], one embedding row per concept plus one for null.
class TrainableDenoiser final : public Denoiser {
 public:
  TrainableDenoiser(TrainableConfig config, int dimension, int num_concepts, int total_steps,
                    std::uint64_t init_seed);

  int dimension() const override { return dimension_; }
  Vec predict_noise(const Vec& z, int t, const Condition& c) const override;

  const TrainableConfig& config() const { return config_; }
  int num_concepts() const { return num_concepts_; }
  int total_steps() const { return total_steps_; }
  std::size_t parameter_count() const;

  // All parameters flattened in a fixed order; used by the optimizer and tests.
  std::vector<double> flat_parameters() const;

  nlohmann::json to_json() const;
  static TrainableDenoiser from_json(const nlohmann::json& doc);

 private:
  friend TrainableDenoiser train_denoiser(TrainableDenoiser, const ConceptWorld&,
                                          const VarianceSchedule&, std::uint64_t,
                                          std::vector<double>*);

  Mat input_features(const Mat& z, const std::vector<int>& steps,
                     const std::vector<int>& cond_rows) const;
  int embedding_row(const Condition& c) const;

  TrainableConfig config_;
  int dimension_;
  int num_concepts_;
  int total_steps_;
  std::vector<Mat> weights_;  // last entry is the output layer
  std::vector<Vec> biases_;
  Mat embedding_;  // embedding_dim x (num_concepts + 1); last column is null
};

/// Minimizes E||eps - eps_theta(z_t; t, c)||^2 with Adam on minibatches;
/// the step size decays along a half cosine to a tenth of learning_rate.
/// z ~ concept c (drawn by prior), t ~ U{1..T}, eps ~ N(0, I); the condition
/// is replaced by null with probability condition_dropout. Per-iteration
/// batch losses go to loss_curve when given. Throws TrainingError if the
/// loss becomes non-finite.
TrainableDenoiser train_denoiser(TrainableDenoiser model, const ConceptWorld& world,
                                 const VarianceSchedule& sched, std::uint64_t seed,
                                 std::vector<double>* loss_curve = nullptr);

}  // namespace negguide
