#include <cmath>

#include "doctest.h"
#include "negguide/errors.hpp"
#include "negguide/trainable.hpp"
#include "support.hpp"

using namespace negguide;
using testing::vec;

namespace {

const VarianceSchedule kSched = build_schedule(ScheduleKind::kLinear, 20, 1e-4, 0.02);

TrainableConfig small_config(long iterations) {
  TrainableConfig c;
  c.hidden = {16, 16};
  c.iterations = iterations;
  c.batch_size = 32;
  return c;
}

}  // namespace

TEST_SUITE("trainable") {

TEST_CASE("parameter count follows the layer shapes") {
  TrainableConfig c = small_config(0);
  c.hidden = {8, 5};
  c.time_features = 4;
  c.embedding_dim = 3;
  const TrainableDenoiser m(c, 2, 3, 20, 1);
  const std::size_t in = 2 + 4 + 3;
  const std::size_t expected = (in * 8 + 8) + (8 * 5 + 5) + (5 * 2 + 2) + 3 * (3 + 1);
  CHECK(m.parameter_count() == expected);
  CHECK(m.flat_parameters().size() == expected);
  CHECK(m.predict_noise(vec({0.1, 0.2}), 3, Condition::null()).size() == 2);
}

TEST_CASE("zero iterations leave parameters unchanged") {
  const ConceptWorld w = testing::symmetric_pair_1d(1.0);
  const TrainableDenoiser m(small_config(0), 1, 2, 20, 9);
  std::vector<double> losses;
  const TrainableDenoiser trained = train_denoiser(m, w, kSched, 3, &losses);
  CHECK(trained.flat_parameters() == m.flat_parameters());
  CHECK(losses.empty());
}

TEST_CASE("training lowers the loss and is reproducible") {
  const ConceptWorld w = load_world(testing::repo_path("data/worlds/adversarial.json"));
  const TrainableDenoiser m(small_config(600), 2, 3, 20, 4);
  std::vector<double> losses;
  const TrainableDenoiser a = train_denoiser(m, w, kSched, 17, &losses);
  const TrainableDenoiser b = train_denoiser(m, w, kSched, 17);
  REQUIRE(losses.size() == 600);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 60; ++i) first += losses[i], last += losses[540 + i];
  CHECK(last < first);
  CHECK(a.flat_parameters() == b.flat_parameters());
  CHECK(a.flat_parameters() != m.flat_parameters());
}

TEST_CASE("json round trip reproduces predictions exactly") {
  const ConceptWorld w = testing::symmetric_pair_1d(1.0);
  const TrainableDenoiser m = train_denoiser(TrainableDenoiser(small_config(50), 1, 2, 20, 2), w, kSched, 1);
  const TrainableDenoiser back = TrainableDenoiser::from_json(nlohmann::json::parse(m.to_json().dump()));
  CHECK(back.flat_parameters() == m.flat_parameters());
  for (int t : {1, 10, 20}) {
    for (auto c : {Condition::null(), Condition::concept_at(1)}) {
      CHECK(back.predict_noise(vec({0.7}), t, c) == m.predict_noise(vec({0.7}), t, c));
    }
  }
  nlohmann::json bad = m.to_json();
  bad["format"] = "other";
  CHECK_THROWS_AS(TrainableDenoiser::from_json(bad), ConfigError);
}

TEST_CASE("divergence reports the iteration") {
  const ConceptWorld w = testing::symmetric_pair_1d(1.0);
  TrainableConfig c = small_config(50);
  c.learning_rate = 1e150;
  c.activation = Activation::kRelu;
  try {
    train_denoiser(TrainableDenoiser(c, 1, 2, 20, 1), w, kSched, 1);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(e.iteration() >= 1);
    CHECK(e.iteration() <= 50);
  }
}

TEST_CASE("invalid construction and mismatched worlds") {
  TrainableConfig c = small_config(1);
  c.time_features = 3;
  CHECK_THROWS_AS(TrainableDenoiser(c, 1, 2, 20, 1), ParameterError);
  c = small_config(1);
  c.hidden = {0};
  CHECK_THROWS_AS(TrainableDenoiser(c, 1, 2, 20, 1), ParameterError);
  const TrainableDenoiser m(small_config(1), 2, 2, 20, 1);
  CHECK_THROWS_AS(train_denoiser(m, testing::symmetric_pair_1d(1.0), kSched, 1), ParameterError);
  CHECK_THROWS_AS(m.predict_noise(vec({0.0}), 1, Condition::null()), ShapeError);
  CHECK_THROWS_AS(m.predict_noise(vec({0.0, 0.0}), 21, Condition::null()), IndexError);
  CHECK_THROWS_AS(parse_activation("gelu"), ParameterError);
}

}
