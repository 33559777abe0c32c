#include "fm/learners/flow.hpp"

#include <cmath>

namespace fm {

uint64_t FlowGenState::content_hash() const {
  uint64_t h = fnv1a("flow");
  for (double v : theta) h = hash_double(h, v);
  h = hash_combine(h, static_cast<uint64_t>(opt.step));
  return h;
}

bool FlowGenState::finite() const {
  for (double v : theta)
    if (!std::isfinite(v)) return false;
  return true;
}

std::pair<double, Vec> flow_loss_and_gradient(const FlowGenState& state,
                                              const Batch& data,
                                              const std::vector<FlowDraw>& draws) {
  if (data.empty() || data.size() != draws.size())
    throw std::invalid_argument("flow_loss_and_gradient: bad batch");
  std::size_t d = state.shape.out_dim;
  double inv_b = 1.0 / static_cast<double>(data.size());
  Vec grad(state.theta.size(), 0.0);
  double loss = 0.0;
  Vec input(d + 1), hidden, out, dout(d);
  for (std::size_t b = 0; b < data.size(); ++b) {
    const auto& x1 = data[b];
    const auto& x0 = draws[b].noise;
    double t = draws[b].t;
    for (std::size_t i = 0; i < d; ++i)
      input[i] = (1.0 - t) * x0[i] + t * x1[i];
    input[d] = t;
    mlp_forward_raw(state.theta, state.shape, input, hidden, out);
    for (std::size_t i = 0; i < d; ++i) {
      double r = out[i] - (x1[i] - x0[i]);
      loss += 0.5 * r * r * inv_b;
      dout[i] = r * inv_b;
    }
    mlp_backward_raw(state.theta, state.shape, input, hidden, dout, grad);
  }
  if (!std::isfinite(loss)) throw NumericalError("flow loss non-finite", -1);
  return {loss, std::move(grad)};
}

FlowGenState flow_train_step(const FlowGenState& state, const Batch& data,
                             double lr, Rng& rng) {
  std::size_t d = state.shape.out_dim;
  std::vector<FlowDraw> draws(data.size());
  for (auto& draw : draws) {
    draw.t = rng.uniform01();
    draw.noise.resize(d);
    for (double& v : draw.noise) v = rng.normal();
  }
  auto [loss, grad] = flow_loss_and_gradient(state, data, draws);
  FlowGenState next = state;
  adam_step(next.theta, next.opt, grad, lr);
  next.last_loss = loss;
  return next;
}

Batch flow_generate(const FlowGenState& state, std::size_t n,
                    long integration_steps, Rng& rng) {
  std::size_t d = state.shape.out_dim;
  double dt = 1.0 / static_cast<double>(integration_steps);
  Batch samples;
  samples.reserve(n);
  Vec input(d + 1), hidden, out;
  for (std::size_t i = 0; i < n; ++i) {
    Vec x(d);
    for (double& v : x) v = rng.normal();
    for (long s = 0; s < integration_steps; ++s) {
      for (std::size_t j = 0; j < d; ++j) input[j] = x[j];
      input[d] = static_cast<double>(s) * dt;
      mlp_forward_raw(state.theta, state.shape, input, hidden, out);
      for (std::size_t j = 0; j < d; ++j) x[j] += out[j] * dt;
    }
    samples.push_back(std::move(x));
  }
  return samples;
}

std::unique_ptr<LearnerState> FlowGenLearner::initial_state(Rng& rng) const {
  auto s = std::make_unique<FlowGenState>();
  s->shape = MlpShape{cfg_.data_dim + 1, cfg_.hidden, cfg_.data_dim};
  s->theta = mlp_init_params(s->shape, rng);
  s->opt.init(s->theta.size());
  return s;
}

PredictiveDistribution FlowGenLearner::predict(const LearnerState& state,
                                               const Observation&,
                                               Rng& rng) const {
  const auto& s = state_as<FlowGenState>(state);
  return Empirical{
      flow_generate(s, cfg_.probe_samples, cfg_.integration_steps, rng)};
}

Output FlowGenLearner::act(const LearnerState& state, const Observation&,
                           Rng& rng) const {
  const auto& s = state_as<FlowGenState>(state);
  return make_gen_output(
      flow_generate(s, cfg_.rollout_batch, cfg_.integration_steps, rng));
}

std::unique_ptr<LearnerState> FlowGenLearner::learn_update(
    const LearnerState& state, const Observation& obs, const Output&,
    Rng& rng) const {
  const auto& s = state_as<FlowGenState>(state);
  return std::make_unique<FlowGenState>(
      flow_train_step(s, obs.gen().data, cfg_.lr, rng));
}

}  // namespace fm
