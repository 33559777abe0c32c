#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fm/environments.hpp"
#include "fm/learners/bayes.hpp"
#include "fm/learners/mlp.hpp"
#include "fm/learners/thought.hpp"
#include "fm/meter.hpp"

using namespace fm;

namespace {

struct RegressionScenario {
  std::unique_ptr<SupervisedDatasetEnv> env;
  std::unique_ptr<MlpLearner> learner;
  InteractionTrace trace;
  EvalProbe probes;
};

RegressionScenario make_regression_scenario(uint64_t seed, long steps = 30) {
  RegressionScenario sc;
  Rng rng = make_stream(seed, "dataset");
  Dataset train = make_sinusoid_dataset(40, -4.0, 4.0, 0.1, rng);
  Dataset vd = make_sinusoid_dataset(100, -4.0, 4.0, 0.1, rng);
  ValidationSet val;
  for (std::size_t i = 0; i < vd.inputs.size(); ++i)
    val.emplace_back(vd.inputs[i], vd.targets[i]);
  SupervisedDatasetEnv::Config ecfg;
  ecfg.batch_size = 10;
  ecfg.epochs = 30;
  ecfg.shuffle_seed = seed;
  sc.env = std::make_unique<SupervisedDatasetEnv>(std::move(train),
                                                  std::move(val), ecfg);
  MlpLearnerConfig lcfg;
  lcfg.shape = MlpShape{1, 5, 1};
  lcfg.loss = LossKind::kSquaredError;
  lcfg.opt.lr = 0.1;
  sc.learner = std::make_unique<MlpLearner>(lcfg);
  sc.trace = run_interaction(*sc.env, *sc.learner, steps, {steps}, seed);
  for (const auto& [x, y] : sc.env->validation())
    sc.probes.points.push_back(make_probe(x));
  return sc;
}

// Snapshot with the regression predictive variance refreshed, as the
// harness does before every estimate.
std::unique_ptr<LearnerState> refreshed_snapshot(const RegressionScenario& sc,
                                                 long t) {
  auto state = sc.trace.snapshots.at(t)->clone();
  state_as<MlpState>(*state).predictive_variance =
      fit_residual_variance(*state, *sc.learner, sc.env->validation());
  return state;
}

}  // namespace

TEST_CASE("mixture_predictive identities") {
  SUBCASE("identical distributions are returned exactly") {
    std::vector<PredictiveDistribution> parts(5, Gaussian{0.3, 0.7});
    auto mix = std::get<Gaussian>(mixture_predictive(parts));
    CHECK(mix.mean == 0.3);
    CHECK(mix.variance == 0.7);
  }
  SUBCASE("categorical symmetry") {
    std::vector<PredictiveDistribution> parts = {Categorical{{1.0, 0.0}},
                                                 Categorical{{0.0, 1.0}}};
    auto mix = std::get<Categorical>(mixture_predictive(parts));
    CHECK(mix.probs[0] == doctest::Approx(0.5));
    CHECK(mix.probs[1] == doctest::Approx(0.5));
  }
  SUBCASE("gaussian moment matching") {
    std::vector<PredictiveDistribution> parts = {Gaussian{-1.0, 1.0},
                                                 Gaussian{1.0, 1.0}};
    auto mix = std::get<Gaussian>(mixture_predictive(parts));
    CHECK(mix.mean == doctest::Approx(0.0));
    CHECK(mix.variance == doctest::Approx(2.0));
  }
  SUBCASE("empirical pooling") {
    std::vector<PredictiveDistribution> parts = {Empirical{{{1.0}, {2.0}}},
                                                 Empirical{{{3.0}}}};
    auto mix = std::get<Empirical>(mixture_predictive(parts));
    CHECK(mix.samples.size() == 3);
  }
  SUBCASE("mixed variants rejected") {
    std::vector<PredictiveDistribution> parts = {Gaussian{0.0, 1.0},
                                                 Categorical{{1.0}}};
    CHECK_THROWS(mixture_predictive(parts));
  }
}

TEST_CASE("state-invariant learners have exactly zero gamma") {
  DegenerateLearner learner(Categorical{{0.3, 0.7}});
  CoinFlipEnv env(0.5);
  Rng rng(1);
  auto state = learner.initial_state(rng);
  History h;
  h.append(env.initial_observation(rng), make_null_output());

  ForgettingConfig cfg;
  cfg.probes.points.push_back(make_supervised_obs({}));
  for (long k : {1L, 7L, 40L}) {
    for (std::size_t m : {1u, 16u, 256u}) {
      cfg.k = k;
      cfg.num_particles = m;
      cfg.rng_root = 1234 + k + m;
      auto est = estimate_gamma(learner, *state, h, env, cfg);
      CHECK(est.gamma == 0.0);
      CHECK(est.std_error == 0.0);
      CHECK_FALSE(est.infinite);
    }
  }
}

TEST_CASE("five-bit stack at capacity forgets after one update") {
  FifoStackLearner learner(5);
  StackEnv env(5);
  auto state = FifoStackLearner::with_bits(5, {0, 1, 0, 1, 0});
  Rng rng(3);
  History h;
  h.append(env.initial_observation(rng), make_null_output());

  ForgettingConfig cfg;
  cfg.k = 1;
  cfg.num_particles = 64;
  cfg.rng_root = 9;
  for (int slot = 0; slot < 5; ++slot)
    cfg.probes.points.push_back(make_probe({static_cast<double>(slot)}));
  auto est = estimate_gamma(learner, *state, h, env, cfg);
  CHECK(est.gamma > 0.0);
  CHECK(est.infinite);  // overwritten slots flip deterministically
  CHECK_FALSE(est.infinite_probes.empty());
  CHECK(check_consistency(learner, *state, h, env, cfg, 1e6) ==
        ConsistencyVerdict::kForgetting);

  // The 0-bit stack has a singleton state space: never forgets.
  FifoStackLearner zero(0);
  StackEnv env0(0);
  auto zstate = zero.initial_state(rng);
  History h0;
  h0.append(env0.initial_observation(rng), make_null_output());
  ForgettingConfig cfg0;
  cfg0.k = 10;
  cfg0.num_particles = 32;
  cfg0.probes.points.push_back(make_probe({0.0}));
  CHECK(estimate_gamma(zero, *zstate, h0, env0, cfg0).gamma == 0.0);
}

TEST_CASE("estimate_gamma leaves the live state untouched") {
  auto sc = make_regression_scenario(21);
  auto snapshot = refreshed_snapshot(sc, 30);
  uint64_t before = snapshot->content_hash();
  ForgettingConfig cfg;
  cfg.k = 10;
  cfg.num_particles = 32;
  cfg.probes = sc.probes;
  cfg.rng_root = 4;
  cfg.time_index = 30;
  auto est = estimate_gamma(*sc.learner, *snapshot, sc.trace.history, *sc.env, cfg);
  CHECK(snapshot->content_hash() == before);
  CHECK(est.gamma > 0.0);  // a training neural learner always forgets some
  CHECK(est.per_probe.size() == sc.probes.points.size());
}

TEST_CASE("estimates are reproducible and thread-count invariant") {
  auto sc = make_regression_scenario(22);
  auto snapshot = refreshed_snapshot(sc, 30);
  ForgettingConfig cfg;
  cfg.k = 5;
  cfg.num_particles = 48;
  cfg.probes = sc.probes;
  cfg.rng_root = 11;
  cfg.time_index = 30;
  auto est1 = estimate_gamma(*sc.learner, *snapshot, sc.trace.history, *sc.env, cfg);
  auto est2 = estimate_gamma(*sc.learner, *snapshot, sc.trace.history, *sc.env, cfg);
  CHECK(est1.gamma == est2.gamma);
  CHECK(est1.std_error == est2.std_error);
  cfg.num_threads = 3;
  auto est3 = estimate_gamma(*sc.learner, *snapshot, sc.trace.history, *sc.env, cfg);
  CHECK(est1.gamma == est3.gamma);
  CHECK(est1.std_error == est3.std_error);
}

TEST_CASE("bootstrap standard error shrinks like one over sqrt M") {
  auto sc = make_regression_scenario(23);
  auto snapshot = refreshed_snapshot(sc, 30);
  ForgettingConfig cfg;
  cfg.k = 5;
  cfg.probes = sc.probes;
  cfg.rng_root = 31;
  cfg.time_index = 30;
  cfg.bootstrap_resamples = 200;

  cfg.num_particles = 100;
  double se100 =
      estimate_gamma(*sc.learner, *snapshot, sc.trace.history, *sc.env, cfg)
          .std_error;
  cfg.num_particles = 1000;
  double se1000 =
      estimate_gamma(*sc.learner, *snapshot, sc.trace.history, *sc.env, cfg)
          .std_error;
  CHECK(se1000 < se100);
  double ratio = se100 / se1000;
  CHECK(ratio > std::sqrt(10.0) / 2.0);
  CHECK(ratio < std::sqrt(10.0) * 2.0);
}

TEST_CASE("exact coin-flip counting stays below the calibrated noise threshold") {
  CoinFlipBayesLearner learner;
  CoinFlipEnv env(0.5);

  auto gamma_of_seed = [&](uint64_t seed) {
    auto state = std::make_unique<CoinFlipBayesState>();
    state->heads = 7;
    state->total = 12;
    Rng rng(seed);
    History h;
    h.append(env.initial_observation(rng), make_null_output());
    ForgettingConfig cfg;
    cfg.k = 5;
    cfg.num_particles = 400;
    cfg.probes.points.push_back(make_supervised_obs({}));
    cfg.rng_root = seed * 977 + 5;
    return estimate_gamma(learner, *state, h, env, cfg).gamma;
  };
  double tau = calibrate_tau_mc(gamma_of_seed, 30, 0.99);
  CHECK(tau < 0.01);  // conjugate counting is consistent up to MC noise
  double median_probe = gamma_of_seed(100);
  CHECK(median_probe <= tau * 3.0 + 1e-9);
}

TEST_CASE("moody learner on a skipped step has exactly zero gamma") {
  auto inner = std::make_shared<CoinFlipBayesLearner>();
  MoodyLearner learner(inner);
  CoinFlipEnv env(0.5);
  auto state = std::make_unique<MoodyState>();
  auto is =  std::make_unique<CoinFlipBayesState>();
  is->heads = 3;
  is->total = 6;
  state->inner = std::move(is);
  state->step = 1;  // next update is ignored
  Rng rng(5);
  History h;
  h.append(env.initial_observation(rng), make_null_output());
  ForgettingConfig cfg;
  cfg.k = 1;
  cfg.num_particles = 64;
  cfg.probes.points.push_back(make_supervised_obs({}));
  CHECK(estimate_gamma(learner, *state, h, env, cfg).gamma == 0.0);
}

TEST_CASE("sweep_k shares references and reports one estimate per k") {
  DegenerateLearner learner(Gaussian{0.0, 1.0});
  CoinFlipEnv env(0.5);
  Rng rng(1);
  auto state = learner.initial_state(rng);
  History h;
  h.append(env.initial_observation(rng), make_null_output());
  ForgettingConfig cfg;
  cfg.num_particles = 16;
  cfg.probes.points.push_back(make_supervised_obs({}));
  auto curve = sweep_k(learner, *state, h, env, cfg, {1, 5, 10, 40});
  CHECK(curve.size() == 4);
  for (const auto& est : curve) CHECK(est.gamma == 0.0);
  CHECK(curve[3].k == 40);
  CHECK_THROWS(sweep_k(learner, *state, h, env, cfg, {}));
}

TEST_CASE("mean-per-particle policy upper-bounds the mixture policy") {
  auto sc = make_regression_scenario(29);
  auto snapshot = refreshed_snapshot(sc, 30);
  ForgettingConfig cfg;
  cfg.k = 10;
  cfg.num_particles = 64;
  cfg.probes = sc.probes;
  cfg.rng_root = 3;
  cfg.time_index = 30;
  auto mix =
      estimate_gamma(*sc.learner, *snapshot, sc.trace.history, *sc.env, cfg);
  cfg.mixture_policy = MixturePolicy::kMeanPerParticleDivergence;
  auto mean =
      estimate_gamma(*sc.learner, *snapshot, sc.trace.history, *sc.env, cfg);
  CHECK(mean.gamma >= mix.gamma - 1e-12);
}
