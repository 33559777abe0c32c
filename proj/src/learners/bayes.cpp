#include "fm/learners/bayes.hpp"

#include <cmath>
#include <stdexcept>

namespace fm {

namespace {

// Shared supervised plumbing: one conjugate/gradient update per row of
// (pending inputs, arriving targets).
template <typename State, typename UpdateFn>
std::unique_ptr<State> supervised_update(const State& s, const Observation& obs,
                                         UpdateFn&& update_row) {
  auto next = std::make_unique<State>(s);
  const auto& sp = obs.supervised();
  if (!sp.prev_targets.empty() && !next->pending_inputs.empty()) {
    if (sp.prev_targets.size() != next->pending_inputs.size())
      throw InterfaceError("bayes update: target/input batch mismatch");
    for (std::size_t i = 0; i < next->pending_inputs.size(); ++i)
      update_row(*next, next->pending_inputs[i], sp.prev_targets[i][0]);
  }
  next->pending_inputs = sp.inputs;
  return next;
}

uint64_t hash_vec(uint64_t h, const Vec& v) {
  for (double x : v) h = hash_double(h, x);
  return h;
}

bool finite_vec(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

Vec apply_feature_map(const BayesLinRegSpec& spec, const Vec& x) {
  if (x.size() != spec.input_dim)
    throw InterfaceError("feature map: input dimension mismatch");
  if (spec.feature_map == FeatureMap::kIdentity) return x;
  Vec phi;
  phi.reserve(x.size() + 1);
  phi.push_back(1.0);
  phi.insert(phi.end(), x.begin(), x.end());
  return phi;
}

uint64_t BayesLinRegState::content_hash() const {
  uint64_t h = fnv1a("bayes");
  h = hash_vec(h, mean);
  for (const auto& row : cov) h = hash_vec(h, row);
  for (const auto& row : pending_inputs) h = hash_vec(h, row);
  return h;
}

bool BayesLinRegState::finite() const {
  if (!finite_vec(mean)) return false;
  for (const auto& row : cov)
    if (!finite_vec(row)) return false;
  return true;
}

BayesLinRegState make_bayes_prior(const BayesLinRegSpec& spec) {
  BayesLinRegState state;
  state.spec = spec;
  std::size_t d = spec.feature_dim();
  state.mean.assign(d, 0.0);
  state.cov.assign(d, Vec(d, 0.0));
  for (std::size_t i = 0; i < d; ++i) state.cov[i][i] = spec.prior_variance;
  return state;
}

BayesLinRegState bayes_update(const BayesLinRegState& state, const Vec& x,
                              double y) {
  Vec phi = apply_feature_map(state.spec, x);
  std::size_t d = phi.size();

  // s = Sigma phi, denom = sigma_n^2 + phi' Sigma phi
  Vec s(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) s[i] += state.cov[i][j] * phi[j];
  double phi_s = 0.0;
  for (std::size_t i = 0; i < d; ++i) phi_s += phi[i] * s[i];
  double denom = state.spec.noise_variance + phi_s;
  if (!(denom > 0.0))
    throw NumericalError("bayes_update: covariance lost positive definiteness", -1);

  double resid = y;
  for (std::size_t i = 0; i < d; ++i) resid -= phi[i] * state.mean[i];

  BayesLinRegState next = state;
  for (std::size_t i = 0; i < d; ++i)
    next.mean[i] = state.mean[i] + s[i] * resid / denom;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      next.cov[i][j] = state.cov[i][j] - s[i] * s[j] / denom;
  // Symmetrize against drift.
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      double avg = 0.5 * (next.cov[i][j] + next.cov[j][i]);
      next.cov[i][j] = avg;
      next.cov[j][i] = avg;
    }
  for (std::size_t i = 0; i < d; ++i)
    if (!(next.cov[i][i] > 0.0))
      throw NumericalError("bayes_update: covariance lost positive definiteness", -1);
  return next;
}

Gaussian bayes_predictive(const BayesLinRegState& state, const Vec& x) {
  Vec phi = apply_feature_map(state.spec, x);
  std::size_t d = phi.size();
  double m = 0.0;
  for (std::size_t i = 0; i < d; ++i) m += phi[i] * state.mean[i];
  double v = state.spec.noise_variance;
  for (std::size_t i = 0; i < d; ++i) {
    double si = 0.0;
    for (std::size_t j = 0; j < d; ++j) si += state.cov[i][j] * phi[j];
    v += phi[i] * si;
  }
  return Gaussian{m, v};
}

std::unique_ptr<LearnerState> BayesLinRegLearner::initial_state(Rng& rng) const {
  (void)rng;
  return std::make_unique<BayesLinRegState>(make_bayes_prior(spec_));
}

std::unique_ptr<LearnerState> BayesLinRegLearner::observe_bootstrap(
    const LearnerState& state, const Observation& x0) const {
  auto next = std::make_unique<BayesLinRegState>(
      state_as<BayesLinRegState>(state));
  next->pending_inputs = x0.supervised().inputs;
  return next;
}

PredictiveDistribution BayesLinRegLearner::predict(const LearnerState& state,
                                                   const Observation& obs,
                                                   Rng& rng) const {
  (void)rng;
  const auto& s = state_as<BayesLinRegState>(state);
  return bayes_predictive(s, obs.supervised().inputs.front());
}

std::unique_ptr<LearnerState> BayesLinRegLearner::learn_update(
    const LearnerState& state, const Observation& obs, const Output& out,
    Rng& rng) const {
  (void)out;
  (void)rng;
  const auto& s = state_as<BayesLinRegState>(state);
  return supervised_update(s, obs,
                           [](BayesLinRegState& st, const Vec& x, double y) {
                             st = bayes_update(st, x, y);
                           });
}

Output BayesLinRegLearner::act(const LearnerState& state,
                               const Observation& obs, Rng& rng) const {
  const auto& s = state_as<BayesLinRegState>(state);
  Batch values;
  for (const auto& x : obs.supervised().inputs) {
    Gaussian g = bayes_predictive(s, x);
    values.push_back({rng.normal(g.mean, std::sqrt(g.variance))});
  }
  return make_target_output(std::move(values));
}

// ---------------------------------------------------------------------------
// Variational
// ---------------------------------------------------------------------------

uint64_t VariationalDiagState::content_hash() const {
  uint64_t h = fnv1a("variational");
  h = hash_vec(h, mean);
  h = hash_vec(h, log_var);
  for (const auto& row : pending_inputs) h = hash_vec(h, row);
  return h;
}

bool VariationalDiagState::finite() const {
  return finite_vec(mean) && finite_vec(log_var);
}

double variational_loss(const VariationalDiagState& state, const Vec& x,
                        double y, const Vec& eps) {
  const auto& model = state.spec.model;
  double loss = 0.0;
  if (!x.empty()) {
    Vec phi = apply_feature_map(model, x);
    double pred = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
      double theta_i = state.mean[i] + std::exp(0.5 * state.log_var[i]) * eps[i];
      pred += phi[i] * theta_i;
    }
    double r = y - pred;
    loss += r * r / (2.0 * model.noise_variance);
  }
  // KL(q || prior), diagonal Gaussians.
  double pv = model.prior_variance;
  for (std::size_t i = 0; i < state.mean.size(); ++i) {
    double s2 = std::exp(state.log_var[i]);
    loss += (s2 + state.mean[i] * state.mean[i]) / (2.0 * pv) - 0.5 -
            0.5 * (state.log_var[i] - std::log(pv));
  }
  return loss;
}

std::pair<Vec, Vec> variational_gradient(const VariationalDiagState& state,
                                         const Vec& x, double y,
                                         const Vec& eps) {
  const auto& model = state.spec.model;
  std::size_t d = state.mean.size();
  Vec g_mean(d, 0.0), g_logvar(d, 0.0);

  if (!x.empty()) {
    Vec phi = apply_feature_map(model, x);
    double pred = 0.0;
    Vec sd(d);
    for (std::size_t i = 0; i < d; ++i) {
      sd[i] = std::exp(0.5 * state.log_var[i]);
      pred += phi[i] * (state.mean[i] + sd[i] * eps[i]);
    }
    double dpred = -(y - pred) / model.noise_variance;
    for (std::size_t i = 0; i < d; ++i) {
      g_mean[i] += dpred * phi[i];
      // d theta_i / d log_var_i = 0.5 * sd_i * eps_i
      g_logvar[i] += dpred * phi[i] * 0.5 * sd[i] * eps[i];
    }
  }
  double pv = model.prior_variance;
  for (std::size_t i = 0; i < d; ++i) {
    double s2 = std::exp(state.log_var[i]);
    g_mean[i] += state.mean[i] / pv;
    g_logvar[i] += s2 / (2.0 * pv) - 0.5;
  }
  return {std::move(g_mean), std::move(g_logvar)};
}

VariationalDiagState variational_step(const VariationalDiagState& state,
                                      const Vec& x, double y, Rng& rng) {
  std::size_t d = state.mean.size();
  Vec eps(d);
  for (double& e : eps) e = rng.normal();
  auto [g_mean, g_logvar] = variational_gradient(state, x, y, eps);
  VariationalDiagState next = state;
  double min_log_var = std::log(VariationalSpec::kMinVariance);
  for (std::size_t i = 0; i < d; ++i) {
    next.mean[i] -= state.spec.lr * g_mean[i];
    next.log_var[i] =
        std::max(next.log_var[i] - state.spec.lr * g_logvar[i], min_log_var);
  }
  return next;
}

std::unique_ptr<LearnerState> VariationalDiagLearner::initial_state(
    Rng& rng) const {
  (void)rng;
  auto state = std::make_unique<VariationalDiagState>();
  state->spec = spec_;
  std::size_t d = spec_.model.feature_dim();
  state->mean.assign(d, 0.0);
  state->log_var.assign(d, std::log(spec_.model.prior_variance));
  return state;
}

std::unique_ptr<LearnerState> VariationalDiagLearner::observe_bootstrap(
    const LearnerState& state, const Observation& x0) const {
  auto next = std::make_unique<VariationalDiagState>(
      state_as<VariationalDiagState>(state));
  next->pending_inputs = x0.supervised().inputs;
  return next;
}

PredictiveDistribution VariationalDiagLearner::predict(const LearnerState& state,
                                                       const Observation& obs,
                                                       Rng& rng) const {
  (void)rng;
  const auto& s = state_as<VariationalDiagState>(state);
  Vec phi = apply_feature_map(spec_.model, obs.supervised().inputs.front());
  double m = 0.0, v = spec_.model.noise_variance;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    m += phi[i] * s.mean[i];
    v += phi[i] * phi[i] * std::exp(s.log_var[i]);
  }
  return Gaussian{m, v};
}

std::unique_ptr<LearnerState> VariationalDiagLearner::learn_update(
    const LearnerState& state, const Observation& obs, const Output& out,
    Rng& rng) const {
  (void)out;
  const auto& s = state_as<VariationalDiagState>(state);
  return supervised_update(s, obs,
                           [&rng](VariationalDiagState& st, const Vec& x,
                                  double y) { st = variational_step(st, x, y, rng); });
}

// ---------------------------------------------------------------------------
// Point estimate
// ---------------------------------------------------------------------------

uint64_t PointEstimateState::content_hash() const {
  uint64_t h = fnv1a("point");
  h = hash_vec(h, theta);
  h = hash_double(h, predictive_variance);
  for (const auto& row : pending_inputs) h = hash_vec(h, row);
  return h;
}

bool PointEstimateState::finite() const { return finite_vec(theta); }

PointEstimateState point_step(const PointEstimateState& state, const Vec& x,
                              double y) {
  Vec phi = apply_feature_map(state.spec.model, x);
  double pred = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) pred += phi[i] * state.theta[i];
  PointEstimateState next = state;
  for (std::size_t i = 0; i < phi.size(); ++i)
    next.theta[i] -= state.spec.lr * (pred - y) * phi[i];
  return next;
}

std::unique_ptr<LearnerState> PointEstimateLearner::initial_state(
    Rng& rng) const {
  (void)rng;
  auto state = std::make_unique<PointEstimateState>();
  state->spec = spec_;
  state->theta.assign(spec_.model.feature_dim(), 0.0);
  state->predictive_variance = spec_.model.noise_variance;
  return state;
}

std::unique_ptr<LearnerState> PointEstimateLearner::observe_bootstrap(
    const LearnerState& state, const Observation& x0) const {
  auto next = std::make_unique<PointEstimateState>(
      state_as<PointEstimateState>(state));
  next->pending_inputs = x0.supervised().inputs;
  return next;
}

PredictiveDistribution PointEstimateLearner::predict(const LearnerState& state,
                                                     const Observation& obs,
                                                     Rng& rng) const {
  (void)rng;
  const auto& s = state_as<PointEstimateState>(state);
  Vec phi = apply_feature_map(spec_.model, obs.supervised().inputs.front());
  double m = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) m += phi[i] * s.theta[i];
  return Gaussian{m, s.predictive_variance};
}

std::unique_ptr<LearnerState> PointEstimateLearner::learn_update(
    const LearnerState& state, const Observation& obs, const Output& out,
    Rng& rng) const {
  (void)out;
  (void)rng;
  const auto& s = state_as<PointEstimateState>(state);
  return supervised_update(s, obs,
                           [](PointEstimateState& st, const Vec& x, double y) {
                             st = point_step(st, x, y);
                           });
}

}  // namespace fm
