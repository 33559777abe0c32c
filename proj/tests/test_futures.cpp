#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fm/environments.hpp"
#include "fm/futures.hpp"
#include "fm/learners/mlp.hpp"
#include "fm/learners/thought.hpp"

using namespace fm;

namespace {

SupervisedDatasetEnv moons_env(uint64_t seed) {
  Rng rng = make_stream(seed, "dataset");
  Dataset train = two_moons_dataset(100, 0.1, rng);
  train.task.clear();
  ValidationSet val;
  for (auto& [p, label] : gen_two_moons(100, 0.1, rng))
    val.emplace_back(p, Vec{static_cast<double>(label)});
  SupervisedDatasetEnv::Config cfg;
  cfg.batch_size = 25;
  cfg.epochs = 30;
  cfg.shuffle_seed = seed;
  return SupervisedDatasetEnv(std::move(train), std::move(val), cfg);
}

MlpLearner classifier(std::size_t hidden = 10) {
  MlpLearnerConfig cfg;
  cfg.shape = MlpShape{2, hidden, 2};
  cfg.loss = LossKind::kCrossEntropy;
  cfg.opt.lr = 0.1;
  return MlpLearner(cfg);
}

}  // namespace

TEST_CASE("rollouts never mutate the live state or history") {
  auto env = moons_env(3);
  auto learner = classifier();
  auto trace = run_interaction(env, learner, 20, {20}, 77);
  const LearnerState& live = *trace.snapshots.at(20);
  uint64_t state_hash = live.content_hash();
  std::size_t history_len = trace.history.size();

  HybridEnvironment hybrid(env, learner);
  Rng rng(5);
  auto roll = rollout(hybrid, learner, live, trace.history, 40,
                      RolloutMode::kLearning, rng, 20);
  CHECK(roll.future_history.size() == 40);
  CHECK(roll.future_history.origin_time() == trace.history.current_time() + 1);
  CHECK(live.content_hash() == state_hash);
  CHECK(trace.history.size() == history_len);
}

TEST_CASE("inference rollouts leave probe predictives unchanged") {
  auto env = moons_env(5);
  auto learner = classifier();
  auto trace = run_interaction(env, learner, 10, {10}, 13);
  const LearnerState& live = *trace.snapshots.at(10);

  EvalProbe probes;
  for (int i = 0; i < 5; ++i)
    probes.points.push_back(make_probe({0.3 * i - 0.5, 0.2 * i}));
  Rng prng(0);
  auto before = probe_predictives(learner, live, probes, prng);

  HybridEnvironment hybrid(env, learner);
  Rng rng(9);
  auto roll = rollout(hybrid, learner, live, trace.history, 25,
                      RolloutMode::kInference, rng, 10);
  auto after = probe_predictives(learner, *roll.terminal_state, probes, prng);
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(equal_dist(before[i], after[i]));
}

TEST_CASE("learning rollouts move MLP parameters") {
  auto env = moons_env(7);
  auto learner = classifier();
  auto trace = run_interaction(env, learner, 10, {10}, 21);
  const auto& live = state_as<MlpState>(*trace.snapshots.at(10));

  HybridEnvironment hybrid(env, learner);
  Rng rng(11);
  auto roll = rollout(hybrid, learner, live, trace.history, 15,
                      RolloutMode::kLearning, rng, 10);
  const auto& terminal = state_as<MlpState>(*roll.terminal_state);
  double delta = 0.0;
  for (std::size_t i = 0; i < live.theta.size(); ++i)
    delta += std::abs(terminal.theta[i] - live.theta[i]);
  CHECK(delta > 1e-6);
}

TEST_CASE("degenerate learner rollout terminal state equals initial") {
  DegenerateLearner learner(Categorical{{0.5, 0.5}});
  CoinFlipEnv env(0.5);
  Rng rng(1);
  auto state = learner.initial_state(rng);
  History h;
  h.append(env.initial_observation(rng), make_null_output());
  HybridEnvironment hybrid(env, learner);
  for (RolloutMode mode : {RolloutMode::kLearning, RolloutMode::kInference}) {
    Rng r(2);
    auto roll = rollout(hybrid, learner, *state, h, 40, mode, r);
    CHECK(roll.terminal_state->content_hash() == state->content_hash());
  }
}

TEST_CASE("clock predicts its frozen time for any rollout length") {
  ClockLearner learner;
  TickEnv env;
  Rng rng(1);
  auto state = learner.initial_state(rng);
  state_as<ClockState>(*state).time = 7.0;
  History h;
  h.append(make_supervised_obs({}, {{7.0}}), make_null_output());
  HybridEnvironment hybrid(env, learner);
  for (long horizon : {1L, 10L, 80L}) {
    for (RolloutMode mode : {RolloutMode::kInference, RolloutMode::kLearning}) {
      Rng r(3);
      auto roll = rollout(hybrid, learner, *state, h, horizon, mode, r);
      Rng prng(0);
      auto dist =
          learner.predict(*roll.terminal_state, make_probe({0.0}), prng);
      CHECK(std::get<Dirac>(dist).value[0] == 7.0);
    }
  }
}

TEST_CASE("hybrid targets at a fixed input match the predictive probabilities") {
  auto env = moons_env(11);
  auto learner = classifier();
  auto trace = run_interaction(env, learner, 30, {30}, 5);
  const LearnerState& live = *trace.snapshots.at(30);

  Vec x = {0.4, 0.3};
  Observation last = make_supervised_obs({x});
  Rng prng(0);
  double p1 = std::get<Categorical>(learner.predict(live, make_probe(x), prng))
                  .probs[1];

  HybridEnvironment hybrid(env, learner);
  Rng rng(17);
  const int n = 10000;
  int ones = 0;
  for (int i = 0; i < n; ++i) {
    auto [out, obs] = hybrid.next(live, last, 30, rng);
    if (out.predicted().values[0][0] == 1.0) ++ones;
    CHECK(obs.supervised().prev_targets.size() == 1);
  }
  double freq = static_cast<double>(ones) / n;
  double se = std::sqrt(std::max(p1 * (1.0 - p1), 1e-9) / n);
  CHECK(std::abs(freq - p1) <= 3.0 * se + 1e-9);
}

TEST_CASE("probe predictives of identical states match element-wise") {
  auto learner = classifier();
  Rng rng(2);
  auto a = learner.initial_state(rng);
  auto b = a->clone();
  EvalProbe probes;
  probes.points.push_back(make_probe({0.1, -0.2}));
  probes.points.push_back(make_probe({1.4, 0.9}));
  Rng prng(0);
  auto da = probe_predictives(learner, *a, probes, prng);
  auto db = probe_predictives(learner, *b, probes, prng);
  for (std::size_t i = 0; i < da.size(); ++i) CHECK(equal_dist(da[i], db[i]));
  CHECK_THROWS(probe_predictives(learner, *a, EvalProbe{}, prng));
}
