#include "fm/futures.hpp"

namespace fm {

HybridEnvironment::HybridEnvironment(const EnvironmentRole& base,
                                     const LearnerRole& learner)
    : base_(base), learner_(learner) {
  inputs_ = dynamic_cast<const SupervisedInputProcess*>(&base);
  dynamics_ = dynamic_cast<const MarkovDynamics*>(&base);
  reward_model_ = dynamic_cast<const SelfConsistentRewardModel*>(&learner);
}

std::pair<Output, Observation> HybridEnvironment::next(
    const LearnerState& state, const Observation& last_obs, long at_step,
    Rng& rng) const {
  Output out = learner_.act(state, last_obs, rng);

  if (last_obs.is_rl()) {
    if (dynamics_ == nullptr)
      throw InterfaceError("hybrid: RL observation without dynamics capability");
    const auto& rl = last_obs.rl();
    if (rl.terminal) {
      // Episode ended inside the rollout: reset from the initial
      // distribution and continue.
      Vec s0 = dynamics_->sample_initial_state(rng);
      return {std::move(out), make_rl_obs(std::move(s0), 0.0, false)};
    }
    int action = out.action().index;
    auto [s_next, env_reward, done] = dynamics_->dynamics(rl.state, action);
    double reward = reward_model_ != nullptr
                        ? reward_model_->consistent_reward(state, rl.state,
                                                           action, s_next, done)
                        : env_reward;
    return {std::move(out), make_rl_obs(std::move(s_next), reward, done)};
  }

  if (last_obs.is_gen()) {
    // The learner models the observation directly: the next observation
    // is its own generated sample.
    Batch data = out.generated().data;
    return {std::move(out), make_gen_obs(std::move(data))};
  }

  if (inputs_ == nullptr)
    throw InterfaceError("hybrid: supervised observation without input process");
  Batch fresh = inputs_->sample_input_batch(at_step, rng);
  Batch targets = out.is_null() ? Batch{} : out.predicted().values;
  return {std::move(out), make_supervised_obs(std::move(fresh), std::move(targets))};
}

FuturesRollout rollout(const HybridEnvironment& hybrid,
                       const LearnerRole& learner, const LearnerState& state,
                       const History& history, long horizon, RolloutMode mode,
                       Rng& rng, long at_step) {
  if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
  if (history.empty())
    throw InterfaceError("rollout: history must contain at least X_0");

  FuturesRollout result;
  result.mode = mode;
  result.future_history = History(history.current_time() + 1);
  std::unique_ptr<LearnerState> current = state.clone();

  for (long s = 0; s < horizon; ++s) {
    const Observation& last_obs = result.future_history.empty()
                                      ? history.back().first
                                      : result.future_history.back().first;
    auto [out, obs] = hybrid.next(*current, last_obs, at_step, rng);
    current = mode == RolloutMode::kLearning
                  ? learner.learn_update(*current, obs, out, rng)
                  : learner.infer_update(*current, obs, out, rng);
    if (!current->finite())
      throw NumericalError("rollout: learner state diverged", s + 1);
    result.future_history.append(std::move(obs), std::move(out));
  }
  result.terminal_state = std::move(current);
  return result;
}

std::vector<PredictiveDistribution> probe_predictives(
    const LearnerRole& learner, const LearnerState& state,
    const EvalProbe& probes, Rng& rng) {
  if (probes.points.empty())
    throw std::invalid_argument("probe_predictives: empty probe set");
  std::vector<PredictiveDistribution> out;
  out.reserve(probes.points.size());
  for (const auto& p : probes.points)
    out.push_back(learner.predict(state, p, rng));
  return out;
}

}  // namespace fm
