#pragma once

#include <string>
#include <variant>
#include <vector>

#include "fm/rng.hpp"

namespace fm {

class LearnerRole;
class LearnerState;

// ---------------------------------------------------------------------------
// Predictive distributions
// ---------------------------------------------------------------------------

struct Categorical {
  std::vector<double> probs;
};

struct Gaussian {
  double mean = 0.0;
  double variance = 1.0;
};

struct DiagGaussianVec {
  std::vector<double> means;
  std::vector<double> variances;
};

// Point mass. An empty value vector is the null prediction (e.g. an
// unassigned address in an associative store).
struct Dirac {
  std::vector<double> value;
};

struct Empirical {
  std::vector<std::vector<double>> samples;
};

using PredictiveDistribution =
    std::variant<Categorical, Gaussian, DiagGaussianVec, Dirac, Empirical>;

// Throws std::invalid_argument when a distribution violates its
// invariants (probabilities off the simplex, non-positive variance,
// empty sample set).
void validate(const PredictiveDistribution& dist);

std::vector<double> sample(const PredictiveDistribution& dist, Rng& rng);

// Mean of the distribution; for Categorical this is the index-weighted
// mean, mainly useful for the scalar variants.
std::vector<double> mean_of(const PredictiveDistribution& dist);

bool equal_dist(const PredictiveDistribution& a,
                const PredictiveDistribution& b, double tol = 0.0);

// ---------------------------------------------------------------------------
// Divergences
// ---------------------------------------------------------------------------

enum class BandwidthPolicy { kFixed, kMedianHeuristic };

struct DivergenceSpec {
  enum class Kind { kAuto, kKLCategorical, kKLGaussian, kMMDRbf };
  Kind kind = Kind::kAuto;
  BandwidthPolicy bandwidth_policy = BandwidthPolicy::kMedianHeuristic;
  double bandwidth = 1.0;     // used when policy is kFixed
  double smoothing_eps = 0.0; // optional categorical smoothing; 0 = report inf
  bool reverse = false;       // evaluate D(candidate || reference) instead
};

DivergenceSpec divergence_spec_from_name(const std::string& name);
std::string divergence_name(const DivergenceSpec& spec);

// KL(p || q) = sum p_i ln(p_i / q_i). A support violation (p_i > 0 with
// q_i = 0) is reported as +infinity, never clamped.
double kl_categorical(const std::vector<double>& p,
                      const std::vector<double>& q);

double kl_gaussian(const Gaussian& p, const Gaussian& q);

// Biased (V-statistic) squared MMD with kernel exp(-|x-y|^2 / (2 sigma^2)).
double mmd2_rbf(const std::vector<std::vector<double>>& a,
                const std::vector<std::vector<double>>& b, double bandwidth);

// Median of pairwise Euclidean distances. Throws when fewer than two
// samples or when all samples coincide.
double median_heuristic_bandwidth(const std::vector<std::vector<double>>& samples);

// Divergence between two predictive distributions of the same variant,
// dispatched per the spec (Categorical/Gaussian -> KL, Empirical -> MMD^2,
// Dirac -> discrete point-mass KL).
double divergence(const PredictiveDistribution& reference,
                  const PredictiveDistribution& candidate,
                  const DivergenceSpec& spec);

// Mean squared residual of the learner's mean prediction over a held-out
// validation set, floored at kVarianceFloor so Gaussian predictives built
// from it keep finite KL.
inline constexpr double kVarianceFloor = 1e-6;

double fit_residual_variance(
    const LearnerState& state, const LearnerRole& learner,
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>&
        validation_set);

}  // namespace fm
