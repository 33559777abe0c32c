#pragma once

#include <functional>

#include "fm/futures.hpp"
#include "fm/predictive.hpp"
#include "fm/process.hpp"

namespace fm {

// ---------------------------------------------------------------------------
// Particle Monte Carlo estimator of the k-step propensity to forget.
// ---------------------------------------------------------------------------

enum class MixturePolicy {
  kMixtureDivergence,        // D(reference || particle mixture)
  kMeanPerParticleDivergence // mean_m D(reference || particle m), an upper bound
};

struct ForgettingConfig {
  long k = 40;
  std::size_t num_particles = 1000;
  DivergenceSpec divergence;
  EvalProbe probes;
  MixturePolicy mixture_policy = MixturePolicy::kMixtureDivergence;
  uint64_t rng_root = 0;
  long time_index = 0;  // t; particle streams are derived per (t, m)
  std::size_t bootstrap_resamples = 100;
  double max_dropped_fraction = 0.10;
  std::size_t num_threads = 1;
};

struct ForgettingEstimate {
  double gamma = 0.0;
  double std_error = 0.0;
  std::vector<double> per_probe;
  long k = 0;
  std::size_t num_particles = 0;
  long t = 0;
  bool infinite = false;  // divergence support violation somewhere
  std::vector<std::size_t> infinite_probes;
  std::size_t dropped_particles = 0;
  bool flagged = false;  // transitory-phase flag (set by the harness)
};

// Combines particle predictives of one homogeneous variant: Categorical
// by mean probabilities, Gaussians by moment matching, Empirical by
// pooling. Identical inputs return that distribution exactly.
PredictiveDistribution mixture_predictive(
    const std::vector<PredictiveDistribution>& particles);

// Monte Carlo estimate of Gamma_k(t) at a state snapshot. Clones the
// state into M particles, propagates each for k learning-mode update
// steps through the hybrid environment, and compares per-probe
// predictives against the reference per the mixture policy. The live
// state and history are never modified. Learners whose predictive is not
// frozen under u' get a simulated inference-mode reference driven by the
// same particle streams.
ForgettingEstimate estimate_gamma(const LearnerRole& learner,
                                  const LearnerState& state,
                                  const History& history,
                                  const EnvironmentRole& env,
                                  const ForgettingConfig& cfg);

// One estimate per k, sharing particle trajectories, the probe set and
// the reference predictives.
std::vector<ForgettingEstimate> sweep_k(const LearnerRole& learner,
                                        const LearnerState& state,
                                        const History& history,
                                        const EnvironmentRole& env,
                                        const ForgettingConfig& cfg,
                                        const std::vector<long>& k_values);

// The two distributions the divergence is computed between at cfg.k:
// per-probe reference predictives and the k-step particle mixture.
// Used for the decision-grid visualization.
std::pair<std::vector<PredictiveDistribution>, std::vector<PredictiveDistribution>>
reference_and_mixture(const LearnerRole& learner, const LearnerState& state,
                      const History& history, const EnvironmentRole& env,
                      const ForgettingConfig& cfg);

enum class ConsistencyVerdict { kConsistent, kForgetting };

ConsistencyVerdict check_consistency(const LearnerRole& learner,
                                     const LearnerState& state,
                                     const History& history,
                                     const EnvironmentRole& env,
                                     const ForgettingConfig& cfg,
                                     double threshold);

// Monte Carlo noise threshold: the q-quantile of gamma under a
// known-consistent learner across seed-resampled estimates.
double calibrate_tau_mc(const std::function<double(uint64_t)>& gamma_of_seed,
                        int num_seeds, double quantile = 0.99);

}  // namespace fm
