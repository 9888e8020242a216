#include <cmath>

#include "doctest.h"
#include "negguide/chains.hpp"
#include "negguide/errors.hpp"
#include "negguide/eval.hpp"
#include "support.hpp"

using namespace negguide;
using testing::vec;

namespace {

struct Fixture {
  ConceptWorld world = load_world(testing::repo_path("data/worlds/adversarial.json"));
  VarianceSchedule sched;
  AnalyticDenoiser den;
  Quantizer quantize;

  explicit Fixture(int T = 20)
      : sched(build_schedule(ScheduleKind::kLinear, T, 1e-4, 0.02)),
        den(world, sched),
        quantize([this](const Vec& z) { return quantize_to_concept(world, sched, z); }) {}
};

GuidanceConfig config_for(Strategy s, int k = 0, SamplerKind sampler = SamplerKind::kDdpm,
                          std::uint64_t seed = 0) {
  GuidanceConfig c;
  c.strategy = s;
  c.k = k;
  c.sampler = sampler;
  c.seed = seed;
  return c;
}

const Condition kPos = Condition::concept_at(0);

bool same_latents(const ChainTrace& a, const ChainTrace& b) {
  if (a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    if (a.records[i].z_before != b.records[i].z_before || a.records[i].z_after != b.records[i].z_after ||
        a.records[i].eps_combined != b.records[i].eps_combined) {
      return false;
    }
  }
  return a.final_sample == b.final_sample;
}

}  // namespace

TEST_SUITE("chains") {

TEST_CASE("ddpm hand case") {
  const VarianceSchedule s({0.19});
  const Vec out = ddpm_step(vec({1.0}), 1, vec({1.0}), s, vec({0.0}));
  CHECK(out[0] == doctest::Approx((1.0 - std::sqrt(0.19)) / 0.9).epsilon(1e-14));
  CHECK(out[0] == doctest::Approx(0.626789).epsilon(1e-6));
  Rng rng(3);
  CHECK(ddpm_step(vec({1.0}), 1, vec({1.0}), s, rng) == out);
  Rng untouched(3);
  CHECK(rng() == untouched());  // t = 1 draws nothing
}

TEST_CASE("ddpm adds sqrt(beta) noise for t > 1") {
  const VarianceSchedule s({0.1, 0.2});
  const Vec z = vec({0.5, -0.3}), e = vec({0.2, 0.4}), xi = vec({1.0, -2.0});
  const Vec mean = ddpm_step(z, 2, e, s, Vec::Zero(2));
  CHECK((ddpm_step(z, 2, e, s, xi) - (mean + std::sqrt(0.2) * xi)).norm() < 1e-15);
}

TEST_CASE("ddim hand case") {
  const VarianceSchedule s({0.36, 0.609375});
  REQUIRE(s.alpha_bar(2) == doctest::Approx(0.25));
  const Vec z0 = predict_clean(vec({1.0}), 2, vec({0.5}), s);
  CHECK(z0[0] == doctest::Approx((1.0 - std::sqrt(0.75) * 0.5) / 0.5).epsilon(1e-14));
  CHECK(z0[0] == doctest::Approx(1.13397).epsilon(1e-5));
  const Vec z1 = ddim_step(vec({1.0}), 2, vec({0.5}), s);
  CHECK(z1[0] == doctest::Approx(0.8 * z0[0] + 0.6 * 0.5).epsilon(1e-14));
  CHECK(z1[0] == doctest::Approx(1.20718).epsilon(1e-5));
}

TEST_CASE("ddim returns the clean estimate at t = 1 and inverts forward diffusion") {
  const auto s = build_schedule(ScheduleKind::kLinear, 30, 1e-4, 0.02);
  std::mt19937_64 rng(6);
  for (int t : {1, 9, 30}) {
    const Vec z = testing::random_vec(rng, 3), e = testing::random_vec(rng, 3);
    const Vec zt = forward_diffuse(z, t, e, s);
    CHECK((predict_clean(zt, t, e, s) - z).norm() < 1e-12);
    if (t == 1) CHECK(ddim_step(zt, 1, e, s) == predict_clean(zt, 1, e, s));
  }
  CHECK_THROWS_AS(ddim_step(vec({0.0}), 31, vec({0.0}), s), IndexError);
  CHECK_THROWS_AS(ddpm_step(vec({0.0}), 0, vec({0.0}), s, vec({0.0})), IndexError);
}

TEST_CASE("CFG at s = 0 is the unconditional chain") {
  Fixture f;
  GuidanceConfig c = config_for(Strategy::kCfg, 0, SamplerKind::kDdpm, 42);
  c.s = 0.0;
  const ChainTrace trace = run_cfg(f.den, kPos, c, f.sched);
  Rng rng(42);
  Vec z = standard_normal(rng, 2);
  for (int t = f.sched.total_steps(); t >= 1; --t) {
    z = ddpm_step(z, t, f.den.predict_noise(z, t, Condition::null()), f.sched, rng);
  }
  CHECK(trace.final_sample == z);
  CHECK(trace.total_denoiser_calls == 40);
  CHECK(trace.records.size() == 20);
  CHECK(trace.records.front().t == 20);
  CHECK(trace.records.back().t == 1);
}

TEST_CASE("CFG on a separated 1-D world lands in the prompt concept") {
  const ConceptWorld w = testing::symmetric_pair_1d(4.0);
  const auto s = build_schedule(ScheduleKind::kLinear, 40, 1e-4, 0.02);
  const AnalyticDenoiser den(w, s);
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const ChainTrace t = run_cfg(den, Condition::concept_at(1), config_for(Strategy::kCfg, 0, SamplerKind::kDdpm, seed), s);
    hits += quantize_to_concept(w, s, t.final_sample) == 1;
  }
  CHECK(hits >= 950);
}

TEST_CASE("run_dns bounds and the s_n = 1 identity") {
  Fixture f;
  GuidanceConfig c;
  const Vec z = vec({0.3, -0.7});
  CHECK_THROWS_AS(run_dns(f.den, kPos, c, f.sched, z, 5, 6), ParameterError);
  CHECK_THROWS_AS(run_dns(f.den, kPos, c, f.sched, z, 5, 0), ParameterError);
  CHECK_THROWS_AS(run_dns(f.den, kPos, c, f.sched, vec({0.0}), 5, 1), ShapeError);

  c.s_n = 1.0;
  const DnsResult r = run_dns(f.den, kPos, c, f.sched, z, 12, 4);
  Vec zz = z;
  Vec last;
  for (int t = 12; t > 8; --t) {
    last = f.den.predict_noise(zz, t, Condition::null());
    zz = ddim_step(zz, t, last, f.sched);
  }
  CHECK(r.latent == zz);
  CHECK(r.last_noise == last);
  CHECK(r.calls == 8);
}

TEST_CASE("every strategy is reproducible and counts calls in closed form") {
  for (int T : {4, 20}) {
    Fixture f(T);
    for (auto s : {Strategy::kCfg, Strategy::kNp, Strategy::kDns, Strategy::kDnp, Strategy::kCnp, Strategy::kAnswer}) {
      for (auto sampler : {SamplerKind::kDdpm, SamplerKind::kDdim}) {
        for (int k : {0, 2, 5}) {
          const GuidanceConfig c = config_for(s, k, sampler, 7);
          const ChainTrace a = run_chain(f.den, f.quantize, kPos, c, f.sched, Condition::concept_at(1));
          const ChainTrace b = run_chain(f.den, f.quantize, kPos, c, f.sched, Condition::concept_at(1));
          CHECK(same_trajectory(a, b));
          CHECK(a.total_denoiser_calls == expected_denoiser_calls(c, T));
          CHECK(a.records.size() == static_cast<std::size_t>(T));
          std::uint64_t prev = 0;
          for (const StepRecord& r : a.records) {
            CHECK(r.denoiser_calls_so_far >= prev);
            prev = r.denoiser_calls_so_far;
          }
          CHECK(prev == a.total_denoiser_calls);
        }
      }
    }
  }
}

TEST_CASE("closed-form call counts") {
  CHECK(expected_denoiser_calls(config_for(Strategy::kCnp), 4) == 28);
  CHECK(expected_denoiser_calls(config_for(Strategy::kDnp), 40) == 160);
  CHECK(expected_denoiser_calls(config_for(Strategy::kAnswer, 2), 4) == 14);
  CHECK(answer_k_profile(config_for(Strategy::kAnswer, 2), 4) == std::vector<int>{2, 1, 0, 0});
}

TEST_CASE("different seeds give different chains") {
  Fixture f;
  const ChainTrace a = run_cfg(f.den, kPos, config_for(Strategy::kCfg, 0, SamplerKind::kDdpm, 1), f.sched);
  const ChainTrace b = run_cfg(f.den, kPos, config_for(Strategy::kCfg, 0, SamplerKind::kDdpm, 2), f.sched);
  CHECK(a.final_sample != b.final_sample);
}

TEST_CASE("ANSWER with K = 0 or an empty window is CFG bitwise") {
  Fixture f(40);
  for (auto sampler : {SamplerKind::kDdpm, SamplerKind::kDdim}) {
    for (std::uint64_t seed : {0u, 5u, 99u}) {
      const ChainTrace cfg = run_cfg(f.den, kPos, config_for(Strategy::kCfg, 0, sampler, seed), f.sched);
      CHECK(same_trajectory(run_answer(f.den, kPos, config_for(Strategy::kAnswer, 0, sampler, seed), f.sched), cfg));
      GuidanceConfig w = config_for(Strategy::kAnswer, 5, sampler, seed);
      w.window_fraction = 1.0;
      CHECK(same_trajectory(run_answer(f.den, kPos, w, f.sched), cfg));
    }
  }
}

TEST_CASE("ANSWER window rule and first-step agreement with CFG") {
  Fixture f(40);
  GuidanceConfig c = config_for(Strategy::kAnswer, 5, SamplerKind::kDdpm, 3);
  c.window_fraction = 0.75;
  const ChainTrace a = run_answer(f.den, kPos, c, f.sched);
  const ChainTrace cfg = run_cfg(f.den, kPos, config_for(Strategy::kCfg, 0, SamplerKind::kDdpm, 3), f.sched);
  CHECK(a.records.front().z_before == cfg.records.front().z_before);
  CHECK(a.records.front().eps_cond == cfg.records.front().eps_cond);
  for (const StepRecord& r : a.records) {
    if (r.t <= 30) {
      CHECK(r.k_t == 0);
      CHECK_FALSE(r.eps_neg.has_value());
    } else {
      CHECK(r.k_t > 0);
      CHECK(r.eps_neg.has_value());
    }
  }
}

TEST_CASE("ANSWER steps with K_t = 1 equal CFG at s^2 - s + 1") {
  Fixture f(40);
  for (double s : {1.5, 3.0, 7.5}) {
    GuidanceConfig c = config_for(Strategy::kAnswer, 1, SamplerKind::kDdpm, 11);
    c.s = s;
    c.normalize = false;
    const ChainTrace a = run_answer(f.den, kPos, c, f.sched);
    int checked = 0;
    for (const StepRecord& r : a.records) {
      if (r.k_t != 1) continue;
      ++checked;
      const Vec expected = cfg_combine(*r.eps_uncond, r.eps_cond, s * s - s + 1);
      CHECK((r.eps_combined - expected).cwiseAbs().maxCoeff() <= 1e-10 * expected.cwiseAbs().maxCoeff());
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("ANSWER surfaces degenerate inner noise with the step") {
  const ConceptWorld w = testing::standard_normal_world(1);
  const auto s = build_schedule(ScheduleKind::kLinear, 10, 1e-4, 0.02);
  const AnalyticDenoiser den(w, s);
  try {
    run_answer(den, Condition::concept_at(0), config_for(Strategy::kAnswer, 2), s);
    FAIL("expected a degenerate-noise error");
  } catch (const DegenerateNoiseError& e) {
    CHECK(std::string(e.what()).find("ANSWER step t=10") != std::string::npos);
  }
}

TEST_CASE("DNP records its negative and reduces to CFG with a null negative") {
  Fixture f;
  const GuidanceConfig c = config_for(Strategy::kDnp, 0, SamplerKind::kDdpm, 4);
  const ChainTrace d = run_dnp(f.den, f.quantize, kPos, c, f.sched);
  Rng rng(4);
  const Vec z_T = standard_normal(rng, 2);
  const std::size_t n_star = f.quantize(run_dns(f.den, kPos, c, f.sched, z_T, 20, 20).latent);
  for (const StepRecord& r : d.records) CHECK(r.negative_concept == n_star);
  CHECK(d.records.front().denoiser_calls_so_far == 42);

  const ChainTrace np_null = run_np(f.den, kPos, Condition::null(), config_for(Strategy::kNp, 0, SamplerKind::kDdpm, 4), f.sched);
  const ChainTrace cfg = run_cfg(f.den, kPos, config_for(Strategy::kCfg, 0, SamplerKind::kDdpm, 4), f.sched);
  CHECK(same_latents(np_null, cfg));

  const ChainTrace np_star = run_np(f.den, kPos, Condition::concept_at(n_star), config_for(Strategy::kNp, 0, SamplerKind::kDdpm, 4), f.sched);
  CHECK(same_latents(np_star, d));
}

TEST_CASE("CNP with a constant quantizer matches DNP phase two") {
  Fixture f(8);
  const Quantizer constant = [](const Vec&) { return std::size_t{2}; };
  const GuidanceConfig c = config_for(Strategy::kCnp, 0, SamplerKind::kDdpm, 9);
  const ChainTrace cnp = run_cnp(f.den, constant, kPos, c, f.sched);
  const ChainTrace dnp = run_dnp(f.den, constant, kPos, config_for(Strategy::kDnp, 0, SamplerKind::kDdpm, 9), f.sched);
  CHECK(same_latents(cnp, dnp));
  for (const StepRecord& r : cnp.records) CHECK(r.negative_concept == std::size_t{2});
  CHECK(cnp.total_denoiser_calls == 8 * 8 + 3 * 8);
}

TEST_CASE("CNP negative labels drift along the chain on the adversarial world") {
  Fixture f(40);
  int changed = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ChainTrace t = run_cnp(f.den, f.quantize, kPos, config_for(Strategy::kCnp, 0, SamplerKind::kDdpm, seed), f.sched);
    for (const StepRecord& r : t.records) {
      if (r.negative_concept != t.records.front().negative_concept) {
        ++changed;
        break;
      }
    }
  }
  CHECK(changed >= 50);
}

TEST_CASE("chain preconditions") {
  Fixture f;
  CHECK_THROWS_AS(run_cfg(f.den, Condition::null(), GuidanceConfig{}, f.sched), ParameterError);
  CHECK_THROWS_AS(run_chain(f.den, f.quantize, kPos, config_for(Strategy::kNp), f.sched), ParameterError);
  CHECK_THROWS_AS(run_chain(f.den, Quantizer{}, kPos, config_for(Strategy::kDnp), f.sched), ParameterError);
  GuidanceConfig bad;
  bad.k = -2;
  CHECK_THROWS_AS(run_answer(f.den, kPos, bad, f.sched), ParameterError);
  CHECK(cnp_cost_warning(200).has_value());
  CHECK_FALSE(cnp_cost_warning(100).has_value());
}

}
