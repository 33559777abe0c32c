#include "fm/process.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fm {

Output LearnerRole::act(const LearnerState& state, const Observation& obs,
                        Rng& rng) const {
  Batch values;
  values.push_back(sample(predict(state, obs, rng), rng));
  return make_target_output(std::move(values));
}

double LearnerRole::train_loss(const LearnerState& state) const {
  (void)state;
  return std::numeric_limits<double>::quiet_NaN();
}

StepResult step_interaction(const EnvironmentRole& env,
                            const LearnerRole& learner,
                            const LearnerState& state, History& history,
                            Rng& act_rng, Rng& env_rng, Rng& update_rng) {
  if (history.empty())
    throw InterfaceError("step_interaction: history must contain the bootstrap");

  const Observation& prev_obs = history.back().first;
  if (learner.input_dim() != 0 && observation_dim(prev_obs) != 0 &&
      learner.input_dim() != observation_dim(prev_obs)) {
    throw InterfaceError("step_interaction: learner/environment dimension mismatch");
  }

  Output out = learner.act(state, prev_obs, act_rng);
  Observation obs = env.next(history, out, env_rng);
  if (!observation_finite(obs))
    throw NumericalError("non-finite observation", history.current_time() + 1);

  std::unique_ptr<LearnerState> next_state =
      learner.learn_update(state, obs, out, update_rng);
  if (!next_state->finite())
    throw NumericalError("non-finite learner state after update",
                         history.current_time() + 1);

  history.append(obs, out);
  return StepResult{std::move(obs), std::move(out), std::move(next_state)};
}

StepResult step_interaction(const EnvironmentRole& env,
                            const LearnerRole& learner,
                            const LearnerState& state, History& history,
                            Rng& rng) {
  return step_interaction(env, learner, state, history, rng, rng, rng);
}

InteractionTrace run_interaction(const EnvironmentRole& env,
                                 const LearnerRole& learner, long total_steps,
                                 const std::vector<long>& snapshot_schedule,
                                 uint64_t seed) {
  if (total_steps < 1)
    throw std::invalid_argument("run_interaction: total_steps must be >= 1");

  Rng init_rng = make_stream(seed, "init");
  Rng act_rng = make_stream(seed, "act");
  Rng env_rng = make_stream(seed, "env");
  Rng update_rng = make_stream(seed, "update");

  InteractionTrace trace;
  std::unique_ptr<LearnerState> state = learner.initial_state(init_rng);
  Observation x0 = env.initial_observation(env_rng);
  state = learner.observe_bootstrap(*state, x0);
  trace.history.append(std::move(x0), make_null_output());

  auto scheduled = [&](long t) {
    return std::find(snapshot_schedule.begin(), snapshot_schedule.end(), t) !=
           snapshot_schedule.end();
  };
  if (scheduled(0)) trace.snapshots.emplace(0, state->clone());

  for (long t = 1; t <= total_steps; ++t) {
    StepResult step = step_interaction(env, learner, *state, trace.history,
                                       act_rng, env_rng, update_rng);
    state = std::move(step.state);
    trace.losses.push_back(learner.train_loss(*state));
    trace.rewards.push_back(step.obs.is_rl()
                                ? step.obs.rl().reward
                                : std::numeric_limits<double>::quiet_NaN());
    if (scheduled(t)) trace.snapshots.emplace(t, state->clone());
  }
  return trace;
}

}  // namespace fm
