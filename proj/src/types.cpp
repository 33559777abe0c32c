#include "fm/types.hpp"

#include <cmath>

namespace fm {

Observation make_supervised_obs(Batch inputs, Batch prev_targets) {
  Observation obs;
  obs.payload = SupervisedPair{std::move(inputs), std::move(prev_targets)};
  return obs;
}

Observation make_rl_obs(Vec state, double reward, bool terminal) {
  if (!std::isfinite(reward)) throw InterfaceError("non-finite reward");
  Observation obs;
  obs.payload = RlSignal{std::move(state), reward, terminal};
  return obs;
}

Observation make_gen_obs(Batch data) {
  Observation obs;
  obs.payload = GenSample{std::move(data)};
  return obs;
}

Observation make_probe(Vec input) {
  Batch b;
  b.push_back(std::move(input));
  return make_supervised_obs(std::move(b));
}

namespace {
bool batch_finite(const Batch& b) {
  for (const auto& row : b)
    for (double v : row)
      if (!std::isfinite(v)) return false;
  return true;
}
}  // namespace

bool observation_finite(const Observation& obs) {
  if (obs.is_supervised()) {
    const auto& sp = obs.supervised();
    return batch_finite(sp.inputs) && batch_finite(sp.prev_targets);
  }
  if (obs.is_rl()) {
    const auto& rl = obs.rl();
    if (!std::isfinite(rl.reward)) return false;
    for (double v : rl.state)
      if (!std::isfinite(v)) return false;
    return true;
  }
  return batch_finite(obs.gen().data);
}

std::size_t observation_dim(const Observation& obs) {
  if (obs.is_supervised()) {
    const auto& sp = obs.supervised();
    return sp.inputs.empty() ? 0 : sp.inputs.front().size();
  }
  if (obs.is_rl()) return obs.rl().state.size();
  const auto& g = obs.gen();
  return g.data.empty() ? 0 : g.data.front().size();
}

Output make_null_output() { return Output{NullOutput{}}; }

Output make_target_output(Batch values) {
  return Output{PredictedTarget{std::move(values)}};
}

Output make_action_output(int index) { return Output{ActionOutput{index}}; }

Output make_gen_output(Batch data) {
  return Output{GeneratedSample{std::move(data)}};
}

}  // namespace fm
