#pragma once

#include "fm/futures.hpp"
#include "fm/learners/mlp.hpp"
#include "fm/process.hpp"

namespace fm {

// ---------------------------------------------------------------------------
// Deep Q-learning with a replay buffer, epsilon-greedy exploration and a
// hard-synced target network.
// ---------------------------------------------------------------------------

struct DqnConfig {
  std::size_t state_dim = 4;
  std::size_t num_actions = 2;
  std::size_t hidden = 5;
  double lr = 2.5e-4;
  double discount = 0.99;
  double start_e = 1.0;
  double end_e = 0.05;
  double exploration_fraction = 0.5;
  long total_timesteps = 20000;  // scales the epsilon schedule
  long learning_starts = 1000;
  long train_frequency = 10;
  long target_network_frequency = 500;
  std::size_t batch_size = 128;
  std::size_t buffer_capacity = 10000;
  double softmax_temperature = 1.0;  // predictive over actions
};

struct Transition {
  Vec s;
  int a = 0;
  double r = 0.0;
  Vec s_next;
  bool done = false;
};

class DqnState final : public LearnerState {
 public:
  MlpShape shape;
  Vec theta;
  Vec theta_target;
  OptimizerState opt;
  std::vector<Transition> buffer;  // FIFO ring, bounded by capacity
  std::size_t capacity = 0;
  std::size_t buffer_write = 0;
  long global_step = 0;
  long last_sync_step = 0;
  Vec pending_state;
  bool pending_terminal = false;
  double last_td_loss = std::numeric_limits<double>::quiet_NaN();

  std::size_t buffer_size() const { return buffer.size(); }
  void push_transition(Transition t);

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<DqnState>(*this);
  }
  uint64_t content_hash() const override;
  bool finite() const override;
};

class DqnLearner : public LearnerRole, public SelfConsistentRewardModel {
 public:
  explicit DqnLearner(DqnConfig cfg) : cfg_(cfg) {}

  std::unique_ptr<LearnerState> initial_state(Rng& rng) const override;
  std::unique_ptr<LearnerState> observe_bootstrap(
      const LearnerState& state, const Observation& x0) const override;
  // Softmax over Q-values at the configured temperature.
  PredictiveDistribution predict(const LearnerState& state,
                                 const Observation& obs,
                                 Rng& rng) const override;
  // Epsilon-greedy policy.
  Output act(const LearnerState& state, const Observation& obs,
             Rng& rng) const override;
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output& out,
                                             Rng& rng) const override;
  std::size_t input_dim() const override { return cfg_.state_dim; }
  double train_loss(const LearnerState& state) const override {
    return state_as<DqnState>(state).last_td_loss;
  }
  long update_count(const LearnerState& state) const override {
    return state_as<DqnState>(state).opt.step;
  }
  long interactions_per_update() const override { return cfg_.train_frequency; }

  // The reward that makes (s, a, s') a zero-residual transition under the
  // learner's own value estimates: Q(s,a) - discount * max_a' Q(s',a').
  double consistent_reward(const LearnerState& state, const Vec& s, int action,
                           const Vec& s_next, bool done) const override;

  double epsilon_at(long step) const;
  Vec q_values(const DqnState& state, const Vec& s) const;
  Vec target_q_values(const DqnState& state, const Vec& s) const;

  // TD loss and gradient for an explicit batch (finite-difference tests).
  std::pair<double, Vec> td_loss_and_gradient(
      const DqnState& state, const std::vector<Transition>& batch) const;

  const DqnConfig& config() const { return cfg_; }

 private:
  DqnConfig cfg_;
};

}  // namespace fm
