#pragma once

#include <map>
#include <memory>
#include <vector>

#include "fm/predictive.hpp"
#include "fm/rng.hpp"
#include "fm/types.hpp"

namespace fm {

// ---------------------------------------------------------------------------
// Learner state
// ---------------------------------------------------------------------------

// Opaque, cloneable snapshot of everything the learner carries
// (parameters, optimizer state, buffers, counters). The unit of particle
// cloning.
class LearnerState {
 public:
  virtual ~LearnerState() = default;
  virtual std::unique_ptr<LearnerState> clone() const = 0;
  // Hash of the full state contents; used by no-mutation checks.
  virtual uint64_t content_hash() const = 0;
  virtual bool finite() const = 0;
};

template <typename T>
const T& state_as(const LearnerState& s) {
  return dynamic_cast<const T&>(s);
}

template <typename T>
T& state_as(LearnerState& s) {
  return dynamic_cast<T&>(s);
}

// ---------------------------------------------------------------------------
// Roles
// ---------------------------------------------------------------------------

class EnvironmentRole {
 public:
  virtual ~EnvironmentRole() = default;

  virtual Observation initial_observation(Rng& rng) const = 0;
  // Pure function of (history, output, rng state).
  virtual Observation next(const History& history, const Output& output,
                           Rng& rng) const = 0;
  // Input dimensionality of the interface (0 = unconstrained).
  virtual std::size_t interface_dim() const { return 0; }
};

class LearnerRole {
 public:
  virtual ~LearnerRole() = default;

  virtual std::unique_ptr<LearnerState> initial_state(Rng& rng) const = 0;

  // Called once with the time-zero observation so learners that carry
  // pending inputs in their state can absorb X_0 before the first
  // prediction. Default: identity clone.
  virtual std::unique_ptr<LearnerState> observe_bootstrap(
      const LearnerState& state, const Observation& x0) const {
    (void)x0;
    return state.clone();
  }

  // Predictive distribution q_f for a single probe observation. The rng
  // is only consumed by learners whose predictive is represented by a
  // finite sample set (generative models).
  virtual PredictiveDistribution predict(const LearnerState& state,
                                         const Observation& obs,
                                         Rng& rng) const = 0;

  // Learning-mode update u. Never mutates the input state.
  virtual std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                                     const Observation& obs,
                                                     const Output& out,
                                                     Rng& rng) const = 0;

  // Inference-mode update u': predictive parameters stay fixed while
  // auxiliary state may evolve. Default: identity clone.
  virtual std::unique_ptr<LearnerState> infer_update(const LearnerState& state,
                                                     const Observation& obs,
                                                     const Output& out,
                                                     Rng& rng) const {
    (void)obs;
    (void)out;
    (void)rng;
    return state.clone();
  }

  // Behavioural output sampler (Y_t ~ q_f). Default samples predict();
  // learners with batched or policy outputs override.
  virtual Output act(const LearnerState& state, const Observation& obs,
                     Rng& rng) const;

  // False when predictions are read from auxiliary state that keeps
  // evolving under u' (the forgetting meter then has to simulate the
  // reference side instead of reusing the current predictives).
  virtual bool inference_frozen_predictive() const { return true; }

  // Input dimensionality expected from the environment (0 = any).
  virtual std::size_t input_dim() const { return 0; }

  // Number of learning updates performed so far, when updates are
  // sparser than interaction steps (DQN trains every train_frequency
  // steps). -1 means every interaction step is one update.
  virtual long update_count(const LearnerState& state) const {
    (void)state;
    return -1;
  }
  virtual long interactions_per_update() const { return 1; }

  // Most recent training loss recorded in the state; NaN when undefined.
  virtual double train_loss(const LearnerState& state) const;
};

// ---------------------------------------------------------------------------
// Interaction process
// ---------------------------------------------------------------------------

struct InteractionTrace {
  History history;
  std::map<long, std::unique_ptr<LearnerState>> snapshots;
  std::vector<double> losses;   // one entry per interaction step
  std::vector<double> rewards;  // NaN for settings without reward
};

struct StepResult {
  Observation obs;
  Output out;
  std::unique_ptr<LearnerState> state;
};

// One step of the learning-mode interaction process:
//   Y_t ~ q_f(.|Z_{t-1}, X_{t-1}),  X_t ~ p_e(.|H_{0:t-1}, Y_t),
//   Z_t ~ u(Z_{t-1}, X_t, Y_t).
// Extends history by one step. Throws InterfaceError on dimension
// mismatch and NumericalError when the updated state is non-finite.
StepResult step_interaction(const EnvironmentRole& env,
                            const LearnerRole& learner,
                            const LearnerState& state, History& history,
                            Rng& act_rng, Rng& env_rng, Rng& update_rng);

// Convenience overload drawing all three roles from one stream.
StepResult step_interaction(const EnvironmentRole& env,
                            const LearnerRole& learner,
                            const LearnerState& state, History& history,
                            Rng& rng);

// Runs the interaction for total_steps steps from a fresh bootstrap
// (X_0 paired with a null output at t = 0). Snapshots are deep state
// clones taken after the update at each scheduled time; time 0 snapshots
// the initial state. Fully reproducible from (env, learner, seed).
InteractionTrace run_interaction(const EnvironmentRole& env,
                                 const LearnerRole& learner, long total_steps,
                                 const std::vector<long>& snapshot_schedule,
                                 uint64_t seed);

}  // namespace fm
