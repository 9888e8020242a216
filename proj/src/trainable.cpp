#include "negguide/trainable.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>

#include "negguide/errors.hpp"

namespace negguide {

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "silu") return Activation::kSilu;
  if (name == "relu") return Activation::kRelu;
  throw ParameterError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kSilu: return "silu";
    case Activation::kRelu: return "relu";
  }
  return "?";
}

namespace {

Mat activate(Activation a, const Mat& x) {
  switch (a) {
    case Activation::kTanh: return x.array().tanh().matrix();
    case Activation::kSilu: return (x.array() / (1.0 + (-x.array()).exp())).matrix();
    case Activation::kRelu: return x.cwiseMax(0.0);
  }
  return x;
}

Mat activate_grad(Activation a, const Mat& x) {
  switch (a) {
    case Activation::kTanh: return (1.0 - x.array().tanh().square()).matrix();
    case Activation::kSilu: {
      const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-x.array()).exp());
      return (sig * (1.0 + x.array() * (1.0 - sig))).matrix();
    }
    case Activation::kRelu: return (x.array() > 0.0).cast<double>().matrix();
  }
  return Mat::Ones(x.rows(), x.cols());
}

struct AdamState {
  Mat m, v;
  explicit AdamState(const Mat& like) : m(Mat::Zero(like.rows(), like.cols())), v(m) {}
  void step(Mat& param, const Mat& grad, double lr, long iter) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(iter));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(iter));
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

}  // namespace

TrainableDenoiser::TrainableDenoiser(TrainableConfig config, int dimension, int num_concepts,
                                     int total_steps, std::uint64_t init_seed)
    : config_(std::move(config)),
      dimension_(dimension),
      num_concepts_(num_concepts),
      total_steps_(total_steps) {
  if (dimension_ < 1 || num_concepts_ < 1 || total_steps_ < 1) {
    throw ParameterError("trainable denoiser: dimension, concepts and T must be positive");
  }
  if (config_.time_features < 0 || config_.time_features % 2 != 0) {
    throw ParameterError("time_features must be a nonnegative even number");
  }
  if (config_.embedding_dim < 0) throw ParameterError("embedding_dim must be nonnegative");
  for (int w : config_.hidden) {
    if (w < 1) throw ParameterError("hidden widths must be positive");
  }
  std::mt19937_64 rng(init_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto randn = [&](Eigen::Index r, Eigen::Index c, double scale) {
    Mat m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * normal(rng);
    return m;
  };
  int fan_in = dimension_ + config_.time_features + config_.embedding_dim;
  for (int width : config_.hidden) {
    weights_.push_back(randn(width, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in))));
    biases_.push_back(Vec::Zero(width));
    fan_in = width;
  }
  weights_.push_back(randn(dimension_, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in))));
  biases_.push_back(Vec::Zero(dimension_));
  embedding_ = randn(config_.embedding_dim, num_concepts_ + 1, 1.0);
}

int TrainableDenoiser::embedding_row(const Condition& c) const {
  if (c.is_null()) return num_concepts_;
  if (c.index() >= static_cast<std::size_t>(num_concepts_)) {
    throw ParameterError("condition index outside the trained vocabulary");
  }
  return static_cast<int>(c.index());
}

Mat TrainableDenoiser::input_features(const Mat& z, const std::vector<int>& steps,
                                      const std::vector<int>& cond_rows) const {
  const Eigen::Index batch = z.cols();
  const int tf = config_.time_features;
  Mat x(dimension_ + tf + config_.embedding_dim, batch);
  x.topRows(dimension_) = z;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double u = static_cast<double>(steps[b]) / total_steps_;
    for (int j = 0; j < tf / 2; ++j) {
      const double w = std::numbers::pi / 2.0 * std::ldexp(1.0, j);
      x(dimension_ + 2 * j, b) = std::sin(w * u);
      x(dimension_ + 2 * j + 1, b) = std::cos(w * u);
    }
    x.block(dimension_ + tf, b, config_.embedding_dim, 1) = embedding_.col(cond_rows[b]);
  }
  return x;
}

Vec TrainableDenoiser::predict_noise(const Vec& z, int t, const Condition& c) const {
  if (z.size() != dimension_) throw ShapeError("trainable denoiser: latent dimension mismatch");
  if (t < 1 || t > total_steps_) throw IndexError("trainable denoiser: step out of range");
  Mat h = input_features(z, {t}, {embedding_row(c)});
  for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
    h = activate(config_.activation, (weights_[l] * h).colwise() + biases_[l]);
  }
  return (weights_.back() * h).colwise() + biases_.back();
}

std::size_t TrainableDenoiser::parameter_count() const {
  std::size_t n = static_cast<std::size_t>(embedding_.size());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

std::vector<double> TrainableDenoiser::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.insert(out.end(), weights_[l].data(), weights_[l].data() + weights_[l].size());
    out.insert(out.end(), biases_[l].data(), biases_[l].data() + biases_[l].size());
  }
  out.insert(out.end(), embedding_.data(), embedding_.data() + embedding_.size());
  return out;
}

namespace {

nlohmann::json matrix_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Mat matrix_from(const nlohmann::json& rows, Eigen::Index r, Eigen::Index c, const std::string& path) {
  if (!rows.is_array() || rows.size() != static_cast<std::size_t>(r)) {
    throw ConfigError(path + ": expected " + std::to_string(r) + " rows");
  }
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || row.size() != static_cast<std::size_t>(c)) {
      throw ConfigError(path + "[" + std::to_string(i) + "]: expected " + std::to_string(c) + " values");
    }
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = row[j].get<double>();
  }
  return m;
}

constexpr int kModelFormatVersion = 1;

}  // namespace

nlohmann::json TrainableDenoiser::to_json() const {
  nlohmann::json doc;
  doc["format"] = "negguide-denoiser";
  doc["format_version"] = kModelFormatVersion;
  doc["dimension"] = dimension_;
  doc["num_concepts"] = num_concepts_;
  doc["total_steps"] = total_steps_;
  doc["config"] = {{"hidden", config_.hidden},
                   {"activation", std::string(to_string(config_.activation))},
                   {"time_features", config_.time_features},
                   {"embedding_dim", config_.embedding_dim},
                   {"learning_rate", config_.learning_rate},
                   {"iterations", config_.iterations},
                   {"batch_size", config_.batch_size},
                   {"condition_dropout", config_.condition_dropout}};
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    layers.push_back({{"weight", matrix_json(weights_[l])},
                      {"bias", std::vector<double>(biases_[l].begin(), biases_[l].end())}});
  }
  doc["layers"] = layers;
  doc["embedding"] = matrix_json(embedding_);
  return doc;
}

TrainableDenoiser TrainableDenoiser::from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", "") != "negguide-denoiser") throw ConfigError("format: not a denoiser file");
    if (doc.value("format_version", 0) != kModelFormatVersion) {
      throw ConfigError("format_version: unsupported");
    }
    const auto& jc = doc.at("config");
    TrainableConfig cfg;
    cfg.hidden = jc.at("hidden").get<std::vector<int>>();
    cfg.activation = parse_activation(jc.at("activation").get<std::string>());
    cfg.time_features = jc.at("time_features").get<int>();
    cfg.embedding_dim = jc.at("embedding_dim").get<int>();
    cfg.learning_rate = jc.at("learning_rate").get<double>();
    cfg.iterations = jc.at("iterations").get<long>();
    cfg.batch_size = jc.at("batch_size").get<int>();
    cfg.condition_dropout = jc.at("condition_dropout").get<double>();
    TrainableDenoiser model(cfg, doc.at("dimension").get<int>(), doc.at("num_concepts").get<int>(),
                            doc.at("total_steps").get<int>(), 0);
    const auto& layers = doc.at("layers");
    if (!layers.is_array() || layers.size() != model.weights_.size()) {
      throw ConfigError("layers: expected " + std::to_string(model.weights_.size()) + " layers");
    }
    for (std::size_t l = 0; l < model.weights_.size(); ++l) {
      const std::string path = "layers[" + std::to_string(l) + "]";
      Mat& w = model.weights_[l];
      w = matrix_from(layers[l].at("weight"), w.rows(), w.cols(), path + ".weight");
      const auto bias = layers[l].at("bias").get<std::vector<double>>();
      if (bias.size() != static_cast<std::size_t>(w.rows())) throw ConfigError(path + ".bias: wrong size");
      model.biases_[l] = Eigen::Map<const Vec>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    }
    model.embedding_ = matrix_from(doc.at("embedding"), model.embedding_.rows(),
                                   model.embedding_.cols(), "embedding");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("denoiser file: ") + e.what());
  }
}

TrainableDenoiser train_denoiser(TrainableDenoiser model, const ConceptWorld& world,
                                 const VarianceSchedule& sched, std::uint64_t seed,
                                 std::vector<double>* loss_curve) {
  const TrainableConfig& cfg = model.config_;
  if (world.dimension() != model.dimension_ ||
      world.size() != static_cast<std::size_t>(model.num_concepts_)) {
    throw ParameterError("world does not match the denoiser's dimension/vocabulary");
  }
  if (sched.total_steps() != model.total_steps_) {
    throw ParameterError("schedule length does not match the denoiser");
  }
  if (cfg.iterations < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0) ||
      cfg.condition_dropout < 0.0 || cfg.condition_dropout > 1.0) {
    throw ParameterError("invalid training hyperparameters");
  }
  if (loss_curve) loss_curve->clear();
  if (cfg.iterations == 0) return model;

  std::vector<std::vector<Mat>> chol(world.size());
  std::vector<double> priors;
  for (std::size_t c = 0; c < world.size(); ++c) {
    priors.push_back(world.concept_at(c).prior);
    for (const GaussianComponent& k : world.concept_at(c).components) {
      chol[c].push_back(Eigen::LLT<Mat>(k.covariance).matrixL().toDenseMatrix());
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> step_dist(1, sched.total_steps());
  std::bernoulli_distribution drop(cfg.condition_dropout);
  std::discrete_distribution<std::size_t> concept_dist(priors.begin(), priors.end());

  const int d = model.dimension_;
  const int batch = cfg.batch_size;
  const std::size_t n_layers = model.weights_.size();
  std::vector<AdamState> w_state, b_state;
  for (std::size_t l = 0; l < n_layers; ++l) {
    w_state.emplace_back(model.weights_[l]);
    b_state.emplace_back(Mat(model.biases_[l]));
  }
  AdamState e_state(model.embedding_);

  Mat zt(d, batch), target(d, batch);
  std::vector<int> steps(batch), rows(batch);
  for (long iter = 1; iter <= cfg.iterations; ++iter) {
    for (int b = 0; b < batch; ++b) {
      const std::size_t c = concept_dist(rng);
      const Concept& entry = world.concept_at(c);
      std::size_t k = 0;
      if (entry.components.size() > 1) {
        std::vector<double> w;
        for (const auto& comp : entry.components) w.push_back(comp.weight);
        k = std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng);
      }
      Vec xi(d), eps(d);
      for (int i = 0; i < d; ++i) xi[i] = normal(rng);
      for (int i = 0; i < d; ++i) eps[i] = normal(rng);
      const Vec z0 = entry.components[k].mean + chol[c][k] * xi;
      steps[b] = step_dist(rng);
      rows[b] = drop(rng) ? model.num_concepts_ : static_cast<int>(c);
      zt.col(b) = forward_diffuse(z0, steps[b], eps, sched);
      target.col(b) = eps;
    }

    // Forward pass, keeping pre-activations for backprop.
    std::vector<Mat> pre(n_layers - 1), post(n_layers);
    post[0] = model.input_features(zt, steps, rows);
    Mat h = post[0];
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
      pre[l] = (model.weights_[l] * h).colwise() + model.biases_[l];
      h = activate(cfg.activation, pre[l]);
      post[l + 1] = h;
    }
    const Mat out = (model.weights_.back() * h).colwise() + model.biases_.back();
    const Mat resid = out - target;
    const double loss = resid.squaredNorm() / batch;
    if (!std::isfinite(loss)) {
      throw TrainingError("training diverged at iteration " + std::to_string(iter), iter);
    }
    if (loss_curve) loss_curve->push_back(loss);

    // Cosine decay to a tenth of the base rate.
    const double progress = static_cast<double>(iter - 1) / static_cast<double>(cfg.iterations);
    const double lr = cfg.learning_rate * (0.1 + 0.45 * (1.0 + std::cos(std::numbers::pi * progress)));
    Mat grad_out = (2.0 / batch) * resid;
    std::vector<Mat> gw(n_layers), gb(n_layers);
    for (std::size_t l = n_layers; l-- > 0;) {
      gw[l] = grad_out * post[l].transpose();
      gb[l] = grad_out.rowwise().sum();
      Mat grad_in = model.weights_[l].transpose() * grad_out;
      if (l > 0) {
        grad_out = grad_in.cwiseProduct(activate_grad(cfg.activation, pre[l - 1]));
      } else {
        Mat ge = Mat::Zero(model.embedding_.rows(), model.embedding_.cols());
        for (int b = 0; b < batch; ++b) {
          ge.col(rows[b]) += grad_in.block(d + cfg.time_features, b, cfg.embedding_dim, 1);
        }
        e_state.step(model.embedding_, ge, lr, iter);
      }
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
      w_state[l].step(model.weights_[l], gw[l], lr, iter);
      Mat bias = model.biases_[l];
      b_state[l].step(bias, gb[l], lr, iter);
      model.biases_[l] = bias;
    }
  }
  return model;
}

}  // namespace negguide
