#pragma once

#include "fm/learners/mlp.hpp"
#include "fm/process.hpp"

namespace fm {

// ---------------------------------------------------------------------------
// Conditional flow-matching generative learner: regresses a vector field
// v(x_t, t) onto (x1 - x0) along linear interpolants, generates by Euler
// integration from standard normal noise.
// ---------------------------------------------------------------------------

struct FlowConfig {
  std::size_t data_dim = 2;
  std::size_t hidden = 64;
  long integration_steps = 100;
  double lr = 0.01;  // Adam
  std::size_t probe_samples = 256;   // Empirical predictive size
  std::size_t rollout_batch = 256;   // self-training batch inside rollouts
};

class FlowGenState final : public LearnerState {
 public:
  MlpShape shape;  // (data_dim + 1) -> hidden -> data_dim
  Vec theta;
  OptimizerState opt;
  double last_loss = std::numeric_limits<double>::quiet_NaN();

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<FlowGenState>(*this);
  }
  uint64_t content_hash() const override;
  bool finite() const override;
};

// One (t, x0) draw per data point; exposed so gradients can be checked
// at fixed draws.
struct FlowDraw {
  double t = 0.5;
  Vec noise;
};

std::pair<double, Vec> flow_loss_and_gradient(const FlowGenState& state,
                                              const Batch& data,
                                              const std::vector<FlowDraw>& draws);

FlowGenState flow_train_step(const FlowGenState& state, const Batch& data,
                             double lr, Rng& rng);

Batch flow_generate(const FlowGenState& state, std::size_t n,
                    long integration_steps, Rng& rng);

class FlowGenLearner : public LearnerRole {
 public:
  explicit FlowGenLearner(FlowConfig cfg) : cfg_(cfg) {}

  std::unique_ptr<LearnerState> initial_state(Rng& rng) const override;
  PredictiveDistribution predict(const LearnerState& state,
                                 const Observation& obs,
                                 Rng& rng) const override;
  Output act(const LearnerState& state, const Observation& obs,
             Rng& rng) const override;
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output& out,
                                             Rng& rng) const override;
  double train_loss(const LearnerState& state) const override {
    return state_as<FlowGenState>(state).last_loss;
  }

  const FlowConfig& config() const { return cfg_; }

 private:
  FlowConfig cfg_;
};

}  // namespace fm
