#pragma once

#include <memory>
#include <tuple>
#include <vector>

#include "fm/process.hpp"

namespace fm {

// ---------------------------------------------------------------------------
// Borrow capabilities. The hybrid distribution takes targets from the
// learner and borrows everything the learner does not model from the
// environment: supervised settings lend their input process, RL settings
// lend their dynamics.
// ---------------------------------------------------------------------------

class SupervisedInputProcess {
 public:
  virtual ~SupervisedInputProcess() = default;
  // Fresh inputs from the training input marginal as served around step
  // at_step (class-incremental schedules are step-dependent).
  virtual Batch sample_input_batch(long at_step, Rng& rng) const = 0;
};

class MarkovDynamics {
 public:
  virtual ~MarkovDynamics() = default;
  virtual Vec sample_initial_state(Rng& rng) const = 0;
  virtual std::tuple<Vec, double, bool> dynamics(const Vec& state,
                                                 int action) const = 0;
};

// Learner-side capability: the reward that makes a transition exactly
// consistent with the learner's own value estimates. Used by the RL
// hybrid in place of the environment reward.
class SelfConsistentRewardModel {
 public:
  virtual ~SelfConsistentRewardModel() = default;
  virtual double consistent_reward(const LearnerState& state, const Vec& s,
                                   int action, const Vec& s_next,
                                   bool done) const = 0;
};

// ---------------------------------------------------------------------------
// Probes and rollouts
// ---------------------------------------------------------------------------

// Fixed set of probe observations; the finite surrogate on which futures
// distributions are compared. Fixed for the lifetime of one estimate.
struct EvalProbe {
  std::vector<Observation> points;
};

enum class RolloutMode { kLearning, kInference };

struct FuturesRollout {
  History future_history;
  std::unique_ptr<LearnerState> terminal_state;
  RolloutMode mode = RolloutMode::kInference;
};

// Hybrid environment q_e: outputs sampled from the learner's predictive
// distribution, observations assembled per the setting's borrow policy.
class HybridEnvironment {
 public:
  HybridEnvironment(const EnvironmentRole& base, const LearnerRole& learner);

  // Samples Y^s ~ q_f(.|Z, X^{s-1}) and X^s ~ q_e(.|., Y^s) given the
  // previous observation of the rollout.
  std::pair<Output, Observation> next(const LearnerState& state,
                                      const Observation& last_obs,
                                      long at_step, Rng& rng) const;

  const EnvironmentRole& base() const { return base_; }

 private:
  const EnvironmentRole& base_;
  const LearnerRole& learner_;
  const SupervisedInputProcess* inputs_ = nullptr;
  const MarkovDynamics* dynamics_ = nullptr;
  const SelfConsistentRewardModel* reward_model_ = nullptr;
};

// Rolls the learner forward for exactly `horizon` hybrid interaction
// steps. Learning mode applies u, inference mode u'. The live history
// and state are never mutated; the future history starts at
// history.current_time() + 1.
FuturesRollout rollout(const HybridEnvironment& hybrid,
                       const LearnerRole& learner, const LearnerState& state,
                       const History& history, long horizon, RolloutMode mode,
                       Rng& rng, long at_step = 0);

// One predictive distribution per probe point, without mutating state.
std::vector<PredictiveDistribution> probe_predictives(
    const LearnerRole& learner, const LearnerState& state,
    const EvalProbe& probes, Rng& rng);

}  // namespace fm
