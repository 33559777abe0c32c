#include "fm/learners/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace fm {

void mlp_forward_raw(const Vec& theta, const MlpShape& shape, const Vec& input,
                     Vec& hidden, Vec& out) {
  const std::size_t d = shape.in_dim, h = shape.hidden, o = shape.out_dim;
  const double* w1 = theta.data();
  const double* b1 = w1 + h * d;
  const double* w2 = b1 + h;
  const double* b2 = w2 + o * h;

  hidden.assign(h, 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    double acc = b1[j];
    const double* row = w1 + j * d;
    for (std::size_t i = 0; i < d; ++i) acc += row[i] * input[i];
    hidden[j] = std::tanh(acc);
  }
  out.assign(o, 0.0);
  for (std::size_t k = 0; k < o; ++k) {
    double acc = b2[k];
    const double* row = w2 + k * h;
    for (std::size_t j = 0; j < h; ++j) acc += row[j] * hidden[j];
    out[k] = acc;
  }
}

void mlp_backward_raw(const Vec& theta, const MlpShape& shape, const Vec& input,
                      const Vec& hidden, const Vec& dout, Vec& grad) {
  const std::size_t d = shape.in_dim, h = shape.hidden, o = shape.out_dim;
  const double* w2 = theta.data() + h * d + h;
  double* gw1 = grad.data();
  double* gb1 = gw1 + h * d;
  double* gw2 = gb1 + h;
  double* gb2 = gw2 + o * h;

  // Output layer.
  for (std::size_t k = 0; k < o; ++k) {
    gb2[k] += dout[k];
    double* row = gw2 + k * h;
    for (std::size_t j = 0; j < h; ++j) row[j] += dout[k] * hidden[j];
  }
  // Hidden layer through tanh'.
  for (std::size_t j = 0; j < h; ++j) {
    double dh = 0.0;
    for (std::size_t k = 0; k < o; ++k) dh += dout[k] * w2[k * h + j];
    double da = dh * (1.0 - hidden[j] * hidden[j]);
    gb1[j] += da;
    double* row = gw1 + j * d;
    for (std::size_t i = 0; i < d; ++i) row[i] += da * input[i];
  }
}

Vec mlp_init_params(const MlpShape& shape, Rng& rng) {
  Vec theta(shape.param_count(), 0.0);
  const std::size_t d = shape.in_dim, h = shape.hidden, o = shape.out_dim;
  double s1 = 1.0 / std::sqrt(static_cast<double>(d));
  double s2 = 1.0 / std::sqrt(static_cast<double>(h));
  std::size_t idx = 0;
  for (std::size_t j = 0; j < h * d; ++j) theta[idx++] = rng.uniform(-s1, s1);
  for (std::size_t j = 0; j < h; ++j) theta[idx++] = rng.uniform(-s1, s1);
  for (std::size_t k = 0; k < o * h; ++k) theta[idx++] = rng.uniform(-s2, s2);
  for (std::size_t k = 0; k < o; ++k) theta[idx++] = rng.uniform(-s2, s2);
  return theta;
}

void sgd_momentum_step(Vec& theta, OptimizerState& opt, const Vec& grad,
                       double lr, double beta) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd: lr must be positive");
  if (beta < 0.0 || beta >= 1.0)
    throw std::invalid_argument("sgd: momentum must be in [0,1)");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    opt.momentum[i] = beta * opt.momentum[i] + grad[i];
    theta[i] -= lr * opt.momentum[i];
  }
  ++opt.step;
}

void adam_step(Vec& theta, OptimizerState& opt, const Vec& grad, double lr,
               double beta1, double beta2, double eps) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam: lr must be positive");
  ++opt.step;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(opt.step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    opt.adam_m[i] = beta1 * opt.adam_m[i] + (1.0 - beta1) * grad[i];
    opt.adam_v[i] = beta2 * opt.adam_v[i] + (1.0 - beta2) * grad[i] * grad[i];
    double m_hat = opt.adam_m[i] / bc1;
    double v_hat = opt.adam_v[i] / bc2;
    theta[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

void optimizer_step(Vec& theta, OptimizerState& opt, const Vec& grad,
                    const OptimizerConfig& cfg) {
  if (cfg.kind == OptimizerKind::kSgdMomentum)
    sgd_momentum_step(theta, opt, grad, cfg.lr, cfg.momentum);
  else
    adam_step(theta, opt, grad, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
}

uint64_t MlpState::content_hash() const {
  uint64_t h = fnv1a("mlp");
  for (double v : theta) h = hash_double(h, v);
  for (double v : opt.momentum) h = hash_double(h, v);
  for (double v : opt.adam_m) h = hash_double(h, v);
  for (double v : opt.adam_v) h = hash_double(h, v);
  h = hash_combine(h, static_cast<uint64_t>(opt.step));
  for (const auto& row : pending_inputs)
    for (double v : row) h = hash_double(h, v);
  h = hash_double(h, predictive_variance);
  return h;
}

bool MlpState::finite() const {
  for (double v : theta)
    if (!std::isfinite(v)) return false;
  for (double v : opt.momentum)
    if (!std::isfinite(v)) return false;
  for (double v : opt.adam_m)
    if (!std::isfinite(v)) return false;
  for (double v : opt.adam_v)
    if (!std::isfinite(v)) return false;
  return true;
}

std::vector<double> softmax(const Vec& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

std::pair<double, Vec> mlp_loss_and_gradient(const MlpState& state,
                                             const Batch& inputs,
                                             const Batch& targets,
                                             LossKind loss) {
  if (inputs.empty() || inputs.size() != targets.size())
    throw std::invalid_argument("mlp_loss_and_gradient: bad batch");
  const double inv_b = 1.0 / static_cast<double>(inputs.size());
  Vec grad(state.theta.size(), 0.0);
  double total_loss = 0.0;
  Vec hidden, out, dout;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    mlp_forward_raw(state.theta, state.shape, inputs[b], hidden, out);
    dout.assign(out.size(), 0.0);
    if (loss == LossKind::kSquaredError) {
      for (std::size_t k = 0; k < out.size(); ++k) {
        double r = out[k] - targets[b][k];
        total_loss += 0.5 * r * r * inv_b;
        dout[k] = r * inv_b;
      }
    } else {
      auto probs = softmax(out);
      auto cls = static_cast<std::size_t>(targets[b][0]);
      if (cls >= probs.size())
        throw std::invalid_argument("mlp_loss_and_gradient: class out of range");
      total_loss += -std::log(std::max(probs[cls], 1e-300)) * inv_b;
      for (std::size_t k = 0; k < out.size(); ++k)
        dout[k] = (probs[k] - (k == cls ? 1.0 : 0.0)) * inv_b;
    }
    mlp_backward_raw(state.theta, state.shape, inputs[b], hidden, dout, grad);
  }
  if (!std::isfinite(total_loss))
    throw NumericalError("mlp loss non-finite", -1);
  return {total_loss, std::move(grad)};
}

std::unique_ptr<LearnerState> MlpLearner::initial_state(Rng& rng) const {
  auto state = std::make_unique<MlpState>();
  state->shape = cfg_.shape;
  state->theta = mlp_init_params(cfg_.shape, rng);
  state->opt.init(state->theta.size());
  return state;
}

Vec MlpLearner::forward(const MlpState& state, const Vec& input) const {
  Vec hidden, out;
  mlp_forward_raw(state.theta, state.shape, input, hidden, out);
  return out;
}

PredictiveDistribution MlpLearner::predict(const LearnerState& state,
                                           const Observation& obs,
                                           Rng& rng) const {
  (void)rng;
  const auto& s = state_as<MlpState>(state);
  const auto& sp = obs.supervised();
  if (sp.inputs.empty())
    throw InterfaceError("MlpLearner::predict: probe has no input");
  Vec out = forward(s, sp.inputs.front());
  if (cfg_.loss == LossKind::kCrossEntropy)
    return Categorical{softmax(out)};
  if (out.size() == 1) return Gaussian{out[0], s.predictive_variance};
  DiagGaussianVec d;
  d.means = out;
  d.variances.assign(out.size(), s.predictive_variance);
  return d;
}

Output MlpLearner::act(const LearnerState& state, const Observation& obs,
                       Rng& rng) const {
  const auto& s = state_as<MlpState>(state);
  const auto& sp = obs.supervised();
  Batch values;
  values.reserve(sp.inputs.size());
  double sigma = std::sqrt(s.predictive_variance);
  for (const auto& x : sp.inputs) {
    Vec out = forward(s, x);
    if (cfg_.loss == LossKind::kCrossEntropy) {
      auto probs = softmax(out);
      values.push_back({static_cast<double>(rng.categorical(probs))});
    } else {
      for (double& v : out) v = rng.normal(v, sigma);
      values.push_back(std::move(out));
    }
  }
  return make_target_output(std::move(values));
}

std::unique_ptr<LearnerState> MlpLearner::learn_update(const LearnerState& state,
                                                       const Observation& obs,
                                                       const Output& out,
                                                       Rng& rng) const {
  (void)rng;
  (void)out;
  const auto& s = state_as<MlpState>(state);
  auto next = std::make_unique<MlpState>(s);
  const auto& sp = obs.supervised();

  if (!sp.prev_targets.empty() && !next->pending_inputs.empty()) {
    if (sp.prev_targets.size() != next->pending_inputs.size())
      throw InterfaceError("MlpLearner::learn_update: target/input batch mismatch");
    auto [loss, grad] = mlp_loss_and_gradient(*next, next->pending_inputs,
                                              sp.prev_targets, cfg_.loss);
    optimizer_step(next->theta, next->opt, grad, cfg_.opt);
    next->last_loss = loss;
  }
  next->pending_inputs = sp.inputs;
  return next;
}

std::unique_ptr<LearnerState> MlpLearner::observe_bootstrap(
    const LearnerState& state, const Observation& x0) const {
  auto next = std::make_unique<MlpState>(state_as<MlpState>(state));
  next->pending_inputs = x0.supervised().inputs;
  return next;
}

double MlpLearner::train_loss(const LearnerState& state) const {
  return state_as<MlpState>(state).last_loss;
}

}  // namespace fm
