#include "fm/learners/dqn.hpp"

#include <algorithm>
#include <cmath>

namespace fm {

void DqnState::push_transition(Transition t) {
  if (capacity == 0) return;
  if (buffer.size() < capacity) {
    buffer.push_back(std::move(t));
    buffer_write = buffer.size() % capacity;
  } else {
    buffer[buffer_write] = std::move(t);
    buffer_write = (buffer_write + 1) % capacity;
  }
}

uint64_t DqnState::content_hash() const {
  uint64_t h = fnv1a("dqn");
  for (double v : theta) h = hash_double(h, v);
  for (double v : theta_target) h = hash_double(h, v);
  h = hash_combine(h, static_cast<uint64_t>(opt.step));
  h = hash_combine(h, static_cast<uint64_t>(global_step));
  h = hash_combine(h, buffer_write);
  for (const auto& t : buffer) {
    for (double v : t.s) h = hash_double(h, v);
    h = hash_combine(h, static_cast<uint64_t>(t.a));
    h = hash_double(h, t.r);
    for (double v : t.s_next) h = hash_double(h, v);
    h = hash_combine(h, t.done ? 1u : 0u);
  }
  for (double v : pending_state) h = hash_double(h, v);
  return h;
}

bool DqnState::finite() const {
  for (double v : theta)
    if (!std::isfinite(v)) return false;
  for (double v : theta_target)
    if (!std::isfinite(v)) return false;
  return true;
}

std::unique_ptr<LearnerState> DqnLearner::initial_state(Rng& rng) const {
  auto s = std::make_unique<DqnState>();
  s->shape = MlpShape{cfg_.state_dim, cfg_.hidden, cfg_.num_actions};
  s->theta = mlp_init_params(s->shape, rng);
  s->theta_target = s->theta;
  s->opt.init(s->theta.size());
  s->capacity = cfg_.buffer_capacity;
  s->buffer.reserve(cfg_.buffer_capacity);
  return s;
}

std::unique_ptr<LearnerState> DqnLearner::observe_bootstrap(
    const LearnerState& state, const Observation& x0) const {
  auto next = std::make_unique<DqnState>(state_as<DqnState>(state));
  next->pending_state = x0.rl().state;
  next->pending_terminal = x0.rl().terminal;
  return next;
}

double DqnLearner::epsilon_at(long step) const {
  double horizon = cfg_.exploration_fraction *
                   static_cast<double>(cfg_.total_timesteps);
  double frac = horizon > 0.0 ? static_cast<double>(step) / horizon : 1.0;
  frac = std::clamp(frac, 0.0, 1.0);
  return cfg_.start_e + frac * (cfg_.end_e - cfg_.start_e);
}

Vec DqnLearner::q_values(const DqnState& state, const Vec& s) const {
  Vec hidden, out;
  mlp_forward_raw(state.theta, state.shape, s, hidden, out);
  return out;
}

Vec DqnLearner::target_q_values(const DqnState& state, const Vec& s) const {
  Vec hidden, out;
  mlp_forward_raw(state.theta_target, state.shape, s, hidden, out);
  return out;
}

PredictiveDistribution DqnLearner::predict(const LearnerState& state,
                                           const Observation& obs,
                                           Rng&) const {
  const auto& s = state_as<DqnState>(state);
  Vec q = q_values(s, obs.rl().state);
  for (double& v : q) v /= cfg_.softmax_temperature;
  return Categorical{softmax(q)};
}

Output DqnLearner::act(const LearnerState& state, const Observation& obs,
                       Rng& rng) const {
  const auto& s = state_as<DqnState>(state);
  double eps = epsilon_at(s.global_step);
  if (rng.uniform01() < eps)
    return make_action_output(static_cast<int>(rng.uniform_int(cfg_.num_actions)));
  Vec q = q_values(s, obs.rl().state);
  int best = 0;
  for (std::size_t a = 1; a < q.size(); ++a)
    if (q[a] > q[best]) best = static_cast<int>(a);
  return make_action_output(best);
}

double DqnLearner::consistent_reward(const LearnerState& state, const Vec& s,
                                     int action, const Vec& s_next,
                                     bool done) const {
  const auto& st = state_as<DqnState>(state);
  double q_sa = q_values(st, s)[static_cast<std::size_t>(action)];
  if (done) return q_sa;
  Vec q_next = q_values(st, s_next);
  double max_q = *std::max_element(q_next.begin(), q_next.end());
  return q_sa - cfg_.discount * max_q;
}

std::pair<double, Vec> DqnLearner::td_loss_and_gradient(
    const DqnState& state, const std::vector<Transition>& batch) const {
  double inv_b = 1.0 / static_cast<double>(batch.size());
  Vec grad(state.theta.size(), 0.0);
  double loss = 0.0;
  Vec hidden, out, dout;
  for (const auto& t : batch) {
    double target = t.r;
    if (!t.done) {
      Vec q_next = target_q_values(state, t.s_next);
      target += cfg_.discount * *std::max_element(q_next.begin(), q_next.end());
    }
    mlp_forward_raw(state.theta, state.shape, t.s, hidden, out);
    double residual = out[static_cast<std::size_t>(t.a)] - target;
    loss += 0.5 * residual * residual * inv_b;
    dout.assign(out.size(), 0.0);
    dout[static_cast<std::size_t>(t.a)] = residual * inv_b;
    mlp_backward_raw(state.theta, state.shape, t.s, hidden, dout, grad);
  }
  return {loss, std::move(grad)};
}

std::unique_ptr<LearnerState> DqnLearner::learn_update(const LearnerState& state,
                                                       const Observation& obs,
                                                       const Output& out,
                                                       Rng& rng) const {
  const auto& rl = obs.rl();
  auto next = std::make_unique<DqnState>(state_as<DqnState>(state));

  if (!next->pending_terminal) {
    next->push_transition(Transition{next->pending_state, out.action().index,
                                     rl.reward, rl.state, rl.terminal});
  }
  next->pending_state = rl.state;
  next->pending_terminal = rl.terminal;
  next->global_step += 1;

  if (next->global_step > cfg_.learning_starts &&
      next->global_step % cfg_.train_frequency == 0 &&
      next->buffer_size() >= cfg_.batch_size) {
    std::vector<Transition> batch;
    batch.reserve(cfg_.batch_size);
    for (std::size_t i = 0; i < cfg_.batch_size; ++i)
      batch.push_back(next->buffer[rng.uniform_int(next->buffer_size())]);
    auto [loss, grad] = td_loss_and_gradient(*next, batch);
    if (!std::isfinite(loss))
      throw NumericalError("dqn: non-finite TD loss", next->global_step);
    adam_step(next->theta, next->opt, grad, cfg_.lr);
    next->last_td_loss = loss;
  }

  if (next->global_step % cfg_.target_network_frequency == 0) {
    next->theta_target = next->theta;  // hard sync (tau = 1)
    next->last_sync_step = next->global_step;
  }
  return next;
}

}  // namespace fm
