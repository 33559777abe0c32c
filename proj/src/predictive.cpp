#include "fm/predictive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fm/process.hpp"
#include "fm/types.hpp"

namespace fm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sq_dist(const Vec& x, const Vec& y) {
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double diff = x[i] - y[i];
    d += diff * diff;
  }
  return d;
}

}  // namespace

void validate(const PredictiveDistribution& dist) {
  if (const auto* c = std::get_if<Categorical>(&dist)) {
    if (c->probs.empty())
      throw std::invalid_argument("Categorical: empty probability vector");
    double total = 0.0;
    for (double p : c->probs) {
      if (p < 0.0 || !std::isfinite(p))
        throw std::invalid_argument("Categorical: negative probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("Categorical: probabilities must sum to 1");
  } else if (const auto* g = std::get_if<Gaussian>(&dist)) {
    if (!(g->variance > 0.0) || !std::isfinite(g->variance) ||
        !std::isfinite(g->mean))
      throw std::invalid_argument("Gaussian: variance must be positive");
  } else if (const auto* d = std::get_if<DiagGaussianVec>(&dist)) {
    if (d->means.size() != d->variances.size())
      throw std::invalid_argument("DiagGaussianVec: size mismatch");
    for (double v : d->variances)
      if (!(v > 0.0))
        throw std::invalid_argument("DiagGaussianVec: variance must be positive");
  } else if (const auto* e = std::get_if<Empirical>(&dist)) {
    if (e->samples.empty())
      throw std::invalid_argument("Empirical: no samples");
  }
  // Dirac: any value, empty = null prediction.
}

std::vector<double> sample(const PredictiveDistribution& dist, Rng& rng) {
  if (const auto* c = std::get_if<Categorical>(&dist)) {
    return {static_cast<double>(rng.categorical(c->probs))};
  }
  if (const auto* g = std::get_if<Gaussian>(&dist)) {
    return {rng.normal(g->mean, std::sqrt(g->variance))};
  }
  if (const auto* d = std::get_if<DiagGaussianVec>(&dist)) {
    Vec out(d->means.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = rng.normal(d->means[i], std::sqrt(d->variances[i]));
    return out;
  }
  if (const auto* p = std::get_if<Dirac>(&dist)) {
    return p->value;
  }
  const auto& e = std::get<Empirical>(dist);
  return e.samples[rng.uniform_int(e.samples.size())];
}

std::vector<double> mean_of(const PredictiveDistribution& dist) {
  if (const auto* c = std::get_if<Categorical>(&dist)) {
    double m = 0.0;
    for (std::size_t i = 0; i < c->probs.size(); ++i)
      m += static_cast<double>(i) * c->probs[i];
    return {m};
  }
  if (const auto* g = std::get_if<Gaussian>(&dist)) return {g->mean};
  if (const auto* d = std::get_if<DiagGaussianVec>(&dist)) return d->means;
  if (const auto* p = std::get_if<Dirac>(&dist)) return p->value;
  const auto& e = std::get<Empirical>(dist);
  Vec m(e.samples.front().size(), 0.0);
  for (const auto& s : e.samples)
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += s[i];
  for (double& v : m) v /= static_cast<double>(e.samples.size());
  return m;
}

bool equal_dist(const PredictiveDistribution& a, const PredictiveDistribution& b,
                double tol) {
  if (a.index() != b.index()) return false;
  auto close = [tol](double x, double y) { return std::abs(x - y) <= tol; };
  auto vec_close = [&](const Vec& x, const Vec& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!close(x[i], y[i])) return false;
    return true;
  };
  if (const auto* c = std::get_if<Categorical>(&a))
    return vec_close(c->probs, std::get<Categorical>(b).probs);
  if (const auto* g = std::get_if<Gaussian>(&a)) {
    const auto& h = std::get<Gaussian>(b);
    return close(g->mean, h.mean) && close(g->variance, h.variance);
  }
  if (const auto* d = std::get_if<DiagGaussianVec>(&a)) {
    const auto& e = std::get<DiagGaussianVec>(b);
    return vec_close(d->means, e.means) && vec_close(d->variances, e.variances);
  }
  if (const auto* p = std::get_if<Dirac>(&a))
    return vec_close(p->value, std::get<Dirac>(b).value);
  const auto& x = std::get<Empirical>(a);
  const auto& y = std::get<Empirical>(b);
  if (x.samples.size() != y.samples.size()) return false;
  for (std::size_t i = 0; i < x.samples.size(); ++i)
    if (!vec_close(x.samples[i], y.samples[i])) return false;
  return true;
}

DivergenceSpec divergence_spec_from_name(const std::string& name) {
  DivergenceSpec spec;
  if (name == "auto") {
    spec.kind = DivergenceSpec::Kind::kAuto;
  } else if (name == "kl_categorical") {
    spec.kind = DivergenceSpec::Kind::kKLCategorical;
  } else if (name == "kl_gaussian") {
    spec.kind = DivergenceSpec::Kind::kKLGaussian;
  } else if (name == "mmd_rbf") {
    spec.kind = DivergenceSpec::Kind::kMMDRbf;
  } else {
    throw ConfigError("unknown divergence: " + name);
  }
  return spec;
}

std::string divergence_name(const DivergenceSpec& spec) {
  switch (spec.kind) {
    case DivergenceSpec::Kind::kAuto: return "auto";
    case DivergenceSpec::Kind::kKLCategorical: return "kl_categorical";
    case DivergenceSpec::Kind::kKLGaussian: return "kl_gaussian";
    case DivergenceSpec::Kind::kMMDRbf: return "mmd_rbf";
  }
  return "auto";
}

double kl_categorical(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("kl_categorical: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;  // 0 * ln(0/q) = 0
    if (q[i] == 0.0) return kInf;
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(kl, 0.0);
}

double kl_gaussian(const Gaussian& p, const Gaussian& q) {
  if (!(p.variance > 0.0) || !(q.variance > 0.0))
    throw std::invalid_argument("kl_gaussian: non-positive variance");
  double mean_diff = p.mean - q.mean;
  double kl = 0.5 * std::log(q.variance / p.variance) +
              (p.variance + mean_diff * mean_diff) / (2.0 * q.variance) - 0.5;
  return std::max(kl, 0.0);
}

double mmd2_rbf(const std::vector<std::vector<double>>& a,
                const std::vector<std::vector<double>>& b, double bandwidth) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("mmd2_rbf: empty sample set");
  if (!(bandwidth > 0.0))
    throw std::invalid_argument("mmd2_rbf: bandwidth must be positive");
  // Canonicalize the argument order so mmd2(a, b) and mmd2(b, a) run the
  // exact same floating-point computation.
  if (b < a) return mmd2_rbf(b, a, bandwidth);
  double inv_two_sigma2 = 1.0 / (2.0 * bandwidth * bandwidth);
  auto kernel_mean = [&](const std::vector<std::vector<double>>& x,
                         const std::vector<std::vector<double>>& y) {
    double total = 0.0;
    for (const auto& xi : x)
      for (const auto& yj : y) total += std::exp(-sq_dist(xi, yj) * inv_two_sigma2);
    return total / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
  };
  double mmd2 = kernel_mean(a, a) - 2.0 * kernel_mean(a, b) + kernel_mean(b, b);
  return std::max(mmd2, 0.0);
}

double median_heuristic_bandwidth(const std::vector<std::vector<double>>& samples) {
  if (samples.size() < 2)
    throw std::invalid_argument("median_heuristic_bandwidth: need >= 2 samples");
  std::vector<double> dists;
  dists.reserve(samples.size() * (samples.size() - 1) / 2);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j)
      dists.push_back(std::sqrt(sq_dist(samples[i], samples[j])));
  std::sort(dists.begin(), dists.end());
  double median = dists.size() % 2 == 1
                      ? dists[dists.size() / 2]
                      : 0.5 * (dists[dists.size() / 2 - 1] + dists[dists.size() / 2]);
  if (!(median > 0.0))
    throw std::invalid_argument(
        "median_heuristic_bandwidth: degenerate (all samples identical)");
  return median;
}

namespace {

std::vector<double> maybe_smooth(const std::vector<double>& p, double eps) {
  if (eps <= 0.0) return p;
  std::vector<double> out(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = p[i] + eps;
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

// Discrete point-mass KL between a Dirac reference and a Dirac or pooled
// Dirac (Empirical) candidate: -ln of the candidate mass at exactly the
// reference value.
double dirac_divergence(const Dirac& ref, const PredictiveDistribution& cand) {
  auto same = [](const Vec& a, const Vec& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] != b[i]) return false;
    return true;
  };
  if (const auto* d = std::get_if<Dirac>(&cand))
    return same(ref.value, d->value) ? 0.0 : kInf;
  if (const auto* e = std::get_if<Empirical>(&cand)) {
    std::size_t hits = 0;
    for (const auto& s : e->samples)
      if (same(ref.value, s)) ++hits;
    if (hits == 0) return kInf;
    return -std::log(static_cast<double>(hits) /
                     static_cast<double>(e->samples.size()));
  }
  throw std::invalid_argument("divergence: Dirac reference needs Dirac/Empirical candidate");
}

}  // namespace

double divergence(const PredictiveDistribution& reference,
                  const PredictiveDistribution& candidate,
                  const DivergenceSpec& spec) {
  const PredictiveDistribution& p = spec.reverse ? candidate : reference;
  const PredictiveDistribution& q = spec.reverse ? reference : candidate;

  if (const auto* pc = std::get_if<Categorical>(&p)) {
    const auto* qc = std::get_if<Categorical>(&q);
    if (!qc) throw std::invalid_argument("divergence: variant mismatch");
    return kl_categorical(maybe_smooth(pc->probs, spec.smoothing_eps),
                          maybe_smooth(qc->probs, spec.smoothing_eps));
  }
  if (const auto* pg = std::get_if<Gaussian>(&p)) {
    const auto* qg = std::get_if<Gaussian>(&q);
    if (!qg) throw std::invalid_argument("divergence: variant mismatch");
    return kl_gaussian(*pg, *qg);
  }
  if (const auto* pd = std::get_if<DiagGaussianVec>(&p)) {
    const auto* qd = std::get_if<DiagGaussianVec>(&q);
    if (!qd || pd->means.size() != qd->means.size())
      throw std::invalid_argument("divergence: variant mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < pd->means.size(); ++i)
      total += kl_gaussian({pd->means[i], pd->variances[i]},
                           {qd->means[i], qd->variances[i]});
    return total;
  }
  if (const auto* pp = std::get_if<Dirac>(&p)) {
    return dirac_divergence(*pp, q);
  }
  const auto& pe = std::get<Empirical>(p);
  const auto* qe = std::get_if<Empirical>(&q);
  if (!qe) throw std::invalid_argument("divergence: variant mismatch");
  double bw = spec.bandwidth;
  if (spec.bandwidth_policy == BandwidthPolicy::kMedianHeuristic)
    bw = median_heuristic_bandwidth(pe.samples);
  return mmd2_rbf(pe.samples, qe->samples, bw);
}

double fit_residual_variance(
    const LearnerState& state, const LearnerRole& learner,
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>&
        validation_set) {
  if (validation_set.empty())
    throw std::invalid_argument("fit_residual_variance: empty validation set");
  Rng unused(0);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& [input, target] : validation_set) {
    Vec pred = mean_of(learner.predict(state, make_probe(input), unused));
    for (std::size_t i = 0; i < target.size(); ++i) {
      double r = target[i] - (i < pred.size() ? pred[i] : 0.0);
      total += r * r;
      ++count;
    }
  }
  return std::max(total / static_cast<double>(count), kVarianceFloor);
}

}  // namespace fm
