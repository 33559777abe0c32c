#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fm/environments.hpp"
#include "fm/learners/mlp.hpp"
#include "fm/learners/thought.hpp"
#include "fm/process.hpp"
#include "fm/rng.hpp"

using namespace fm;

namespace {

SupervisedDatasetEnv sinusoid_env(uint64_t seed, std::size_t n = 40,
                                  std::size_t batch = 10, long epochs = 30) {
  Rng rng = make_stream(seed, "dataset");
  Dataset train = make_sinusoid_dataset(n, -4.0, 4.0, 0.1, rng);
  ValidationSet val;
  Dataset v = make_sinusoid_dataset(100, -4.0, 4.0, 0.1, rng);
  for (std::size_t i = 0; i < v.inputs.size(); ++i)
    val.emplace_back(v.inputs[i], v.targets[i]);
  SupervisedDatasetEnv::Config cfg;
  cfg.batch_size = batch;
  cfg.epochs = epochs;
  cfg.shuffle_seed = seed;
  return SupervisedDatasetEnv(std::move(train), std::move(val), cfg);
}

MlpLearner regression_learner(std::size_t hidden = 5) {
  MlpLearnerConfig cfg;
  cfg.shape = MlpShape{1, hidden, 1};
  cfg.loss = LossKind::kSquaredError;
  cfg.opt.kind = OptimizerKind::kAdam;
  cfg.opt.lr = 0.1;
  return MlpLearner(cfg);
}

}  // namespace

TEST_CASE("rng streams are independent of instrumentation order") {
  Rng a = make_stream(42, "train");
  Rng b = make_stream(42, "train");
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  // A child stream with a different label never matches.
  Rng c = make_stream(42, "gamma");
  bool all_equal = true;
  Rng d = make_stream(42, "train");
  for (int i = 0; i < 10; ++i) all_equal &= (c.next_u64() == d.next_u64());
  CHECK_FALSE(all_equal);
}

TEST_CASE("rng normal moments") {
  Rng rng(5);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sum_sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sum_sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("history bookkeeping") {
  History h(0);
  CHECK(h.empty());
  h.append(make_supervised_obs({{1.0}}), make_null_output());
  h.append(make_supervised_obs({{2.0}}, {{0.5}}), make_target_output({{0.4}}));
  CHECK(h.size() == 2);
  CHECK(h.current_time() == 1);
  CHECK(h.at_time(1).first.supervised().inputs[0][0] == 2.0);
}

TEST_CASE("degenerate learner step leaves state bit-identical") {
  DegenerateLearner learner(Categorical{{0.5, 0.5}});
  CoinFlipEnv env(0.5);
  Rng rng(1);
  auto state = learner.initial_state(rng);
  uint64_t hash_before = state->content_hash();
  History h;
  h.append(env.initial_observation(rng), make_null_output());
  auto step = step_interaction(env, learner, *state, h, rng);
  CHECK(step.state->content_hash() == hash_before);
  CHECK(h.size() == 2);
}

TEST_CASE("sinusoid observations carry sin(x) + noise targets") {
  auto env = sinusoid_env(99);
  // The dataset invariant: residual to sin(x) is N(0, 0.1^2) at
  // generation time; check bounds and spread over the train set.
  const auto& ds = env.train();
  double max_abs = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < ds.inputs.size(); ++i) {
    double x = ds.inputs[i][0];
    CHECK(x >= -4.0);
    CHECK(x <= 4.0);
    double r = ds.targets[i][0] - std::sin(x);
    max_abs = std::max(max_abs, std::abs(r));
    sum_sq += r * r;
  }
  CHECK(max_abs < 0.5);  // 5 sigma
  CHECK(sum_sq / static_cast<double>(ds.inputs.size()) < 0.03);

  // The observation at t carries the input served at t and the target
  // for the input served at t-1 (interpretation round-trip).
  Rng rng(3);
  History h;
  h.append(env.initial_observation(rng), make_null_output());
  Observation x1 = env.next(h, make_null_output(), rng);
  Batch first_inputs = h.back().first.supervised().inputs;
  const auto& targets = x1.supervised().prev_targets;
  REQUIRE(targets.size() == first_inputs.size());
  for (std::size_t i = 0; i < first_inputs.size(); ++i) {
    // Each target matches the dataset target of the corresponding input.
    bool found = false;
    for (std::size_t j = 0; j < ds.inputs.size(); ++j)
      if (ds.inputs[j][0] == first_inputs[i][0] &&
          ds.targets[j][0] == targets[i][0])
        found = true;
    CHECK(found);
  }
}

TEST_CASE("run_interaction rejects empty runs and is deterministic") {
  auto env = sinusoid_env(7);
  auto learner = regression_learner();
  CHECK_THROWS_AS(run_interaction(env, learner, 0, {}, 1),
                  std::invalid_argument);

  auto t1 = run_interaction(env, learner, 40, {10, 40}, 1234);
  auto t2 = run_interaction(env, learner, 40, {10, 40}, 1234);
  CHECK(t1.history.size() == t2.history.size());
  CHECK(t1.snapshots.at(40)->content_hash() == t2.snapshots.at(40)->content_hash());
  for (std::size_t i = 0; i < t1.losses.size(); ++i) {
    if (std::isnan(t1.losses[i]))
      CHECK(std::isnan(t2.losses[i]));
    else
      CHECK(t1.losses[i] == t2.losses[i]);
  }
  // A different seed diverges.
  auto t3 = run_interaction(env, learner, 40, {40}, 99);
  CHECK(t3.snapshots.at(40)->content_hash() != t1.snapshots.at(40)->content_hash());
}

TEST_CASE("regression run of the table settings records 120 optimizer steps") {
  auto env = sinusoid_env(11);
  CHECK(env.total_steps() == 120);  // 40 samples / batch 10 x 30 epochs
  auto learner = regression_learner();
  auto trace = run_interaction(env, learner, env.total_steps(), {120}, 5);
  const auto& final_state = state_as<MlpState>(*trace.snapshots.at(120));
  CHECK(final_state.opt.step == 120);
  CHECK(trace.history.size() == 121);  // bootstrap + 120 steps
}

TEST_CASE("snapshots taken exactly at scheduled times") {
  auto env = sinusoid_env(13);
  auto learner = regression_learner();
  auto trace = run_interaction(env, learner, 20, {0, 7, 20}, 2);
  CHECK(trace.snapshots.size() == 3);
  CHECK(trace.snapshots.count(0) == 1);
  CHECK(trace.snapshots.count(7) == 1);
  CHECK(trace.snapshots.count(20) == 1);
}

TEST_CASE("state purity: predictions from the pre-update state unchanged") {
  auto env = sinusoid_env(17);
  auto learner = regression_learner();
  Rng rng(4);
  auto state = learner.initial_state(rng);
  Observation x0 = env.initial_observation(rng);
  state = learner.observe_bootstrap(*state, x0);
  Observation probe = make_probe({0.7});
  Rng prng(0);
  auto before = learner.predict(*state, probe, prng);

  History h;
  h.append(x0, make_null_output());
  uint64_t hash_before = state->content_hash();
  auto step = step_interaction(env, learner, *state, h, rng);
  CHECK(state->content_hash() == hash_before);
  auto after = learner.predict(*state, probe, prng);
  CHECK(equal_dist(before, after));
  // The updated state moved.
  CHECK(step.state->content_hash() != hash_before);
}

TEST_CASE("inference-mode update freezes beliefs for parameterized learners") {
  auto learner = regression_learner();
  Rng rng(21);
  auto state = learner.initial_state(rng);
  Observation obs = make_supervised_obs({{0.3}}, {{1.0}});
  auto inferred =
      learner.infer_update(*state, obs, make_target_output({{0.2}}), rng);
  Observation probe = make_probe({-1.1});
  Rng prng(0);
  CHECK(equal_dist(learner.predict(*state, probe, prng),
                   learner.predict(*inferred, probe, prng)));
}

TEST_CASE("interface dimension mismatch raises an interface error") {
  auto env = sinusoid_env(23);
  MlpLearnerConfig cfg;
  cfg.shape = MlpShape{3, 4, 1};  // expects 3-d inputs
  MlpLearner learner(cfg);
  Rng rng(1);
  auto state = learner.initial_state(rng);
  History h;
  h.append(env.initial_observation(rng), make_null_output());
  CHECK_THROWS_AS(step_interaction(env, learner, *state, h, rng),
                  InterfaceError);
}
