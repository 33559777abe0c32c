#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fm/environments.hpp"
#include "fm/learners/mlp.hpp"
#include "fm/predictive.hpp"

using namespace fm;

namespace {

// Independent re-implementation of the forward pass for the
// dual-implementation oracle (nested loops, different accumulation
// order).
Vec forward_oracle(const Vec& theta, const MlpShape& sh, const Vec& x) {
  std::vector<double> pre(sh.hidden, 0.0);
  std::size_t off = 0;
  for (std::size_t j = 0; j < sh.hidden; ++j)
    for (std::size_t i = 0; i < sh.in_dim; ++i)
      pre[j] += theta[off + j * sh.in_dim + i] * x[i];
  off += sh.hidden * sh.in_dim;
  for (std::size_t j = 0; j < sh.hidden; ++j) pre[j] += theta[off + j];
  off += sh.hidden;
  std::vector<double> act(sh.hidden);
  for (std::size_t j = 0; j < sh.hidden; ++j) act[j] = std::tanh(pre[j]);
  Vec out(sh.out_dim, 0.0);
  for (std::size_t k = 0; k < sh.out_dim; ++k)
    for (std::size_t j = 0; j < sh.hidden; ++j)
      out[k] += theta[off + k * sh.hidden + j] * act[j];
  off += sh.out_dim * sh.hidden;
  for (std::size_t k = 0; k < sh.out_dim; ++k) out[k] += theta[off + k];
  return out;
}

MlpState make_state(const MlpShape& shape, uint64_t seed) {
  MlpState s;
  s.shape = shape;
  Rng rng(seed);
  s.theta = mlp_init_params(shape, rng);
  s.opt.init(s.theta.size());
  return s;
}

double loss_at(const MlpState& base, const Vec& theta, const Batch& x,
               const Batch& y, LossKind loss) {
  MlpState s = base;
  s.theta = theta;
  return mlp_loss_and_gradient(s, x, y, loss).first;
}

// Central finite differences on a subset of coordinates.
void check_gradient(const MlpState& state, const Batch& x, const Batch& y,
                    LossKind loss, int coords = 20, double h = 1e-5,
                    double tol = 1e-4) {
  auto [l0, grad] = mlp_loss_and_gradient(state, x, y, loss);
  (void)l0;
  Rng rng(99);
  for (int c = 0; c < coords; ++c) {
    std::size_t i = rng.uniform_int(state.theta.size());
    Vec tp = state.theta, tm = state.theta;
    tp[i] += h;
    tm[i] -= h;
    double fd = (loss_at(state, tp, x, y, loss) - loss_at(state, tm, x, y, loss)) /
                (2.0 * h);
    double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
    CHECK(std::abs(fd - grad[i]) / denom < tol);
  }
}

}  // namespace

TEST_CASE("mlp forward trivial cases") {
  MlpShape sh{1, 1, 1};
  MlpState s;
  s.shape = sh;
  s.theta.assign(sh.param_count(), 0.0);
  s.opt.init(s.theta.size());
  Vec hidden, out;
  mlp_forward_raw(s.theta, sh, {0.7}, hidden, out);
  CHECK(out[0] == 0.0);  // zero weights, zero biases

  // Identity-like net: weights 1, biases 0, input 0 -> tanh(0) = 0.
  s.theta = {1.0, 0.0, 1.0, 0.0};
  mlp_forward_raw(s.theta, sh, {0.0}, hidden, out);
  CHECK(out[0] == 0.0);
}

TEST_CASE("mlp forward dual-implementation oracle") {
  MlpShape sh{3, 7, 2};
  MlpState s = make_state(sh, 41);
  Rng rng(17);
  for (int it = 0; it < 50; ++it) {
    Vec x = {rng.normal(), rng.normal(), rng.normal()};
    Vec hidden, out;
    mlp_forward_raw(s.theta, sh, x, hidden, out);
    Vec want = forward_oracle(s.theta, sh, x);
    for (std::size_t k = 0; k < out.size(); ++k)
      CHECK(out[k] == doctest::Approx(want[k]).epsilon(1e-12));
  }
}

TEST_CASE("mlp gradient vanishes at a perfect fit") {
  MlpShape sh{1, 3, 1};
  MlpState s = make_state(sh, 5);
  // Targets = the network's own outputs: a strict minimum of squared error.
  Batch x = {{0.2}, {-1.4}, {2.2}};
  Batch y;
  for (const auto& xi : x) {
    Vec hidden, out;
    mlp_forward_raw(s.theta, sh, xi, hidden, out);
    y.push_back(out);
  }
  auto [loss, grad] = mlp_loss_and_gradient(s, x, y, LossKind::kSquaredError);
  CHECK(loss <= 1e-24);
  for (double g : grad) CHECK(std::abs(g) <= 1e-12);
}

TEST_CASE("mlp squared-error gradient matches finite differences") {
  MlpShape sh{2, 6, 1};
  MlpState s = make_state(sh, 31);
  Rng rng(8);
  Batch x, y;
  for (int i = 0; i < 10; ++i) {
    x.push_back({rng.normal(), rng.normal()});
    y.push_back({rng.normal()});
  }
  check_gradient(s, x, y, LossKind::kSquaredError);
}

TEST_CASE("mlp cross-entropy gradient matches finite differences") {
  MlpShape sh{2, 5, 3};
  MlpState s = make_state(sh, 77);
  Rng rng(9);
  Batch x, y;
  for (int i = 0; i < 8; ++i) {
    x.push_back({rng.normal(), rng.normal()});
    y.push_back({static_cast<double>(rng.uniform_int(3))});
  }
  check_gradient(s, x, y, LossKind::kCrossEntropy);
}

TEST_CASE("cross-entropy logit gradient equals probs minus onehot") {
  MlpShape sh{1, 1, 3};
  MlpState s = make_state(sh, 3);
  // Single example, class 1. Check d loss / d b2 = softmax(out) - onehot,
  // since b2 feeds logits directly.
  Batch x = {{0.5}};
  Batch y = {{1.0}};
  auto [loss, grad] = mlp_loss_and_gradient(s, x, y, LossKind::kCrossEntropy);
  (void)loss;
  Vec hidden, out;
  mlp_forward_raw(s.theta, sh, x[0], hidden, out);
  auto probs = softmax(out);
  std::size_t b2_off = sh.hidden * sh.in_dim + sh.hidden + sh.out_dim * sh.hidden;
  for (std::size_t k = 0; k < 3; ++k) {
    double want = probs[k] - (k == 1 ? 1.0 : 0.0);
    CHECK(grad[b2_off + k] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("sgd momentum closed forms") {
  Vec theta = {0.0};
  OptimizerState opt;
  opt.init(1);
  Vec g = {2.0};

  SUBCASE("beta 0 is a plain gradient step") {
    sgd_momentum_step(theta, opt, g, 0.1, 0.0);
    CHECK(theta[0] == doctest::Approx(-0.2));
  }
  SUBCASE("two steps with constant gradient unroll to lr*g*(1 + 1.9)") {
    sgd_momentum_step(theta, opt, g, 0.1, 0.9);
    sgd_momentum_step(theta, opt, g, 0.1, 0.9);
    CHECK(theta[0] == doctest::Approx(-0.1 * 2.0 * (1.0 + 1.9)).epsilon(1e-12));
  }
  SUBCASE("zero gradient with a charged buffer still moves parameters") {
    sgd_momentum_step(theta, opt, g, 0.1, 0.9);
    double after_one = theta[0];
    Vec zero = {0.0};
    sgd_momentum_step(theta, opt, zero, 0.1, 0.9);
    CHECK(theta[0] != after_one);
    CHECK(theta[0] == doctest::Approx(after_one - 0.1 * 0.9 * 2.0));
  }
}

TEST_CASE("adam first step magnitude and zero-gradient fixpoint") {
  Vec theta = {1.0, -2.0};
  OptimizerState opt;
  opt.init(2);
  Vec g = {0.3, -4.0};
  adam_step(theta, opt, g, 0.01);
  // Bias-corrected first step is ~ -lr * sign(g).
  CHECK(theta[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(theta[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));

  Vec theta2 = {0.5};
  OptimizerState opt2;
  opt2.init(1);
  Vec zero = {0.0};
  for (int i = 0; i < 10; ++i) adam_step(theta2, opt2, zero, 0.01);
  CHECK(theta2[0] == 0.5);
}

TEST_CASE("adam dual-implementation oracle over 100 steps") {
  // Reference implementation with explicit state kept in doubles.
  MlpShape sh{2, 4, 1};
  MlpState s = make_state(sh, 55);
  Vec theta = s.theta;
  Vec m(theta.size(), 0.0), v(theta.size(), 0.0);
  Vec theta_ref = theta;
  OptimizerState opt;
  opt.init(theta.size());
  Rng rng(6);
  const double lr = 0.003, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 100; ++t) {
    Vec g(theta.size());
    for (double& x : g) x = rng.normal();
    adam_step(theta, opt, g, lr, b1, b2, eps);
    for (std::size_t i = 0; i < theta_ref.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      double mh = m[i] / (1 - std::pow(b1, t));
      double vh = v[i] / (1 - std::pow(b2, t));
      theta_ref[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
  for (std::size_t i = 0; i < theta.size(); ++i)
    CHECK(theta[i] == doctest::Approx(theta_ref[i]).epsilon(1e-12));
}

TEST_CASE("fit_residual_variance examples") {
  MlpLearnerConfig cfg;
  cfg.shape = MlpShape{1, 2, 1};
  MlpLearner learner(cfg);
  Rng rng(12);
  auto state = learner.initial_state(rng);

  // Perfect predictor: targets equal the network outputs -> floored.
  ValidationSet perfect;
  for (double x : {0.1, -0.7, 1.5}) {
    auto& s = state_as<MlpState>(*state);
    Vec hidden, out;
    mlp_forward_raw(s.theta, s.shape, {x}, hidden, out);
    perfect.emplace_back(Vec{x}, out);
  }
  CHECK(fit_residual_variance(*state, learner, perfect) == kVarianceFloor);

  // Constant-zero predictor on targets {1, -1} -> 1.
  auto zero_state = learner.initial_state(rng);
  state_as<MlpState>(*zero_state).theta.assign(
      state_as<MlpState>(*zero_state).theta.size(), 0.0);
  ValidationSet pm1 = {{{0.0}, {1.0}}, {{0.5}, {-1.0}}};
  CHECK(fit_residual_variance(*zero_state, learner, pm1) == doctest::Approx(1.0));

  CHECK_THROWS(fit_residual_variance(*state, learner, {}));
}
