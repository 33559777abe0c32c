#pragma once

#include <limits>
#include <memory>

#include "fm/process.hpp"

namespace fm {

// ---------------------------------------------------------------------------
// Single-hidden-layer network with tanh nonlinearity, hand-rolled
// forward/backward. Parameters live in one flat vector with layout
// [w1 (hidden x in), b1, w2 (out x hidden), b2].
// ---------------------------------------------------------------------------

struct MlpShape {
  std::size_t in_dim = 1;
  std::size_t hidden = 5;
  std::size_t out_dim = 1;

  std::size_t param_count() const {
    return hidden * in_dim + hidden + out_dim * hidden + out_dim;
  }
};

enum class LossKind { kSquaredError, kCrossEntropy };

enum class OptimizerKind { kSgdMomentum, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 0.1;
  double momentum = 0.0;  // SGD only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Forward pass; hidden receives the tanh activations for reuse in the
// backward pass.
void mlp_forward_raw(const Vec& theta, const MlpShape& shape, const Vec& input,
                     Vec& hidden, Vec& out);

// Accumulates parameter gradients for one sample given dL/d(output).
void mlp_backward_raw(const Vec& theta, const MlpShape& shape, const Vec& input,
                      const Vec& hidden, const Vec& dout, Vec& grad);

Vec mlp_init_params(const MlpShape& shape, Rng& rng);

// ---------------------------------------------------------------------------
// Optimizer state shared by every network learner in this project.
// ---------------------------------------------------------------------------

struct OptimizerState {
  Vec momentum;  // SGD buffer
  Vec adam_m;
  Vec adam_v;
  long step = 0;

  void init(std::size_t n) {
    momentum.assign(n, 0.0);
    adam_m.assign(n, 0.0);
    adam_v.assign(n, 0.0);
    step = 0;
  }
};

// v <- beta v + g; theta <- theta - lr v.
void sgd_momentum_step(Vec& theta, OptimizerState& opt, const Vec& grad,
                       double lr, double beta);

// Standard bias-corrected Adam update.
void adam_step(Vec& theta, OptimizerState& opt, const Vec& grad, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

void optimizer_step(Vec& theta, OptimizerState& opt, const Vec& grad,
                    const OptimizerConfig& cfg);

// ---------------------------------------------------------------------------
// Supervised MLP learner (regression / classification)
// ---------------------------------------------------------------------------

class MlpState final : public LearnerState {
 public:
  MlpShape shape;
  Vec theta;
  OptimizerState opt;
  Batch pending_inputs;  // inputs awaiting their targets
  double predictive_variance = 1.0;  // regression Gaussian width
  double last_loss = std::numeric_limits<double>::quiet_NaN();

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<MlpState>(*this);
  }
  uint64_t content_hash() const override;
  bool finite() const override;
};

struct MlpLearnerConfig {
  MlpShape shape;
  LossKind loss = LossKind::kSquaredError;
  OptimizerConfig opt;
};

// Mean loss over the batch and its parameter gradient.
std::pair<double, Vec> mlp_loss_and_gradient(const MlpState& state,
                                             const Batch& inputs,
                                             const Batch& targets,
                                             LossKind loss);

class MlpLearner : public LearnerRole {
 public:
  explicit MlpLearner(MlpLearnerConfig cfg) : cfg_(cfg) {}

  std::unique_ptr<LearnerState> initial_state(Rng& rng) const override;
  std::unique_ptr<LearnerState> observe_bootstrap(
      const LearnerState& state, const Observation& x0) const override;
  PredictiveDistribution predict(const LearnerState& state,
                                 const Observation& obs,
                                 Rng& rng) const override;
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output& out,
                                             Rng& rng) const override;
  Output act(const LearnerState& state, const Observation& obs,
             Rng& rng) const override;
  std::size_t input_dim() const override { return cfg_.shape.in_dim; }
  double train_loss(const LearnerState& state) const override;

  const MlpLearnerConfig& config() const { return cfg_; }
  Vec forward(const MlpState& state, const Vec& input) const;

 private:
  MlpLearnerConfig cfg_;
};

std::vector<double> softmax(const Vec& logits);

}  // namespace fm
