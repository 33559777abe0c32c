#pragma once

#include <memory>

#include "fm/process.hpp"

namespace fm {

// ---------------------------------------------------------------------------
// Bayesian linear regression with conjugate Gaussian updates, plus the
// two constrained counterparts (diagonal variational, gradient point
// estimate) used to contrast exact and approximate belief updates.
// ---------------------------------------------------------------------------

enum class FeatureMap {
  kIdentity,  // phi(x) = x
  kAffine,    // phi(x) = (1, x...)
};

struct BayesLinRegSpec {
  FeatureMap feature_map = FeatureMap::kAffine;
  std::size_t input_dim = 1;
  double prior_variance = 1.0;
  double noise_variance = 0.1;

  std::size_t feature_dim() const {
    return feature_map == FeatureMap::kAffine ? input_dim + 1 : input_dim;
  }
};

Vec apply_feature_map(const BayesLinRegSpec& spec, const Vec& x);

class BayesLinRegState final : public LearnerState {
 public:
  BayesLinRegSpec spec;
  Vec mean;                    // posterior mean, feature_dim
  std::vector<Vec> cov;        // posterior covariance, feature_dim^2
  Batch pending_inputs;

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<BayesLinRegState>(*this);
  }
  uint64_t content_hash() const override;
  bool finite() const override;
};

BayesLinRegState make_bayes_prior(const BayesLinRegSpec& spec);

// Conjugate posterior update for one observation (rank-1 form, so no
// matrix inversion is needed).
BayesLinRegState bayes_update(const BayesLinRegState& state, const Vec& x,
                              double y);

// Posterior predictive N(phi' mu, phi' Sigma phi + noise_var).
Gaussian bayes_predictive(const BayesLinRegState& state, const Vec& x);

class BayesLinRegLearner : public LearnerRole {
 public:
  explicit BayesLinRegLearner(BayesLinRegSpec spec) : spec_(spec) {}

  std::unique_ptr<LearnerState> initial_state(Rng& rng) const override;
  std::unique_ptr<LearnerState> observe_bootstrap(
      const LearnerState& state, const Observation& x0) const override;
  PredictiveDistribution predict(const LearnerState& state,
                                 const Observation& obs,
                                 Rng& rng) const override;
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output& out,
                                             Rng& rng) const override;
  Output act(const LearnerState& state, const Observation& obs,
             Rng& rng) const override;
  std::size_t input_dim() const override { return spec_.input_dim; }

  const BayesLinRegSpec& spec() const { return spec_; }

 private:
  BayesLinRegSpec spec_;
};

// ---------------------------------------------------------------------------
// Diagonal-Gaussian variational learner (one reparameterized gradient
// step on the negative ELBO per observation).
// ---------------------------------------------------------------------------

struct VariationalSpec {
  BayesLinRegSpec model;
  double lr = 0.1;
  static constexpr double kMinVariance = 1e-8;
};

class VariationalDiagState final : public LearnerState {
 public:
  VariationalSpec spec;
  Vec mean;
  Vec log_var;
  Batch pending_inputs;

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<VariationalDiagState>(*this);
  }
  uint64_t content_hash() const override;
  bool finite() const override;
};

// Negative ELBO for a single observation at a fixed reparameterization
// noise vector, and its gradient w.r.t. (mean, log_var). Exposed so the
// gradient can be checked by finite differences. An empty x skips the
// likelihood term (prior-KL only).
double variational_loss(const VariationalDiagState& state, const Vec& x,
                        double y, const Vec& eps);
std::pair<Vec, Vec> variational_gradient(const VariationalDiagState& state,
                                         const Vec& x, double y,
                                         const Vec& eps);

VariationalDiagState variational_step(const VariationalDiagState& state,
                                      const Vec& x, double y, Rng& rng);

class VariationalDiagLearner : public LearnerRole {
 public:
  explicit VariationalDiagLearner(VariationalSpec spec) : spec_(spec) {}

  std::unique_ptr<LearnerState> initial_state(Rng& rng) const override;
  std::unique_ptr<LearnerState> observe_bootstrap(
      const LearnerState& state, const Observation& x0) const override;
  PredictiveDistribution predict(const LearnerState& state,
                                 const Observation& obs,
                                 Rng& rng) const override;
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output& out,
                                             Rng& rng) const override;
  std::size_t input_dim() const override { return spec_.model.input_dim; }

 private:
  VariationalSpec spec_;
};

// ---------------------------------------------------------------------------
// Point estimate updated by plain gradient descent on squared error.
// ---------------------------------------------------------------------------

struct PointEstimateSpec {
  BayesLinRegSpec model;
  double lr = 0.1;
};

class PointEstimateState final : public LearnerState {
 public:
  PointEstimateSpec spec;
  Vec theta;
  double predictive_variance = 0.1;
  Batch pending_inputs;

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<PointEstimateState>(*this);
  }
  uint64_t content_hash() const override;
  bool finite() const override;
};

PointEstimateState point_step(const PointEstimateState& state, const Vec& x,
                              double y);

class PointEstimateLearner : public LearnerRole {
 public:
  explicit PointEstimateLearner(PointEstimateSpec spec) : spec_(spec) {}

  std::unique_ptr<LearnerState> initial_state(Rng& rng) const override;
  std::unique_ptr<LearnerState> observe_bootstrap(
      const LearnerState& state, const Observation& x0) const override;
  PredictiveDistribution predict(const LearnerState& state,
                                 const Observation& obs,
                                 Rng& rng) const override;
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output& out,
                                             Rng& rng) const override;
  std::size_t input_dim() const override { return spec_.model.input_dim; }

 private:
  PointEstimateSpec spec_;
};

}  // namespace fm
