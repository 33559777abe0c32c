#include "fm/meter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace fm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool all_equal(const std::vector<PredictiveDistribution>& parts) {
  for (std::size_t i = 1; i < parts.size(); ++i)
    if (!equal_dist(parts[0], parts[i])) return false;
  return true;
}

void run_indexed(std::size_t n, std::size_t threads,
                 const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t workers = std::min(threads, n);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct ParticleResult {
  // outer: k index, inner: probe index
  std::vector<std::vector<PredictiveDistribution>> dists;
  bool dropped = false;
};

// Rolls one particle through k_max learning (or inference) update steps
// of the hybrid process, collecting probe predictives after each k in
// k_values (ascending).
ParticleResult run_particle(const LearnerRole& learner,
                            const LearnerState& state,
                            const HybridEnvironment& hybrid,
                            const Observation& seed_obs,
                            const std::vector<long>& k_values,
                            const EvalProbe& probes, RolloutMode mode,
                            long at_step, Rng rng) {
  ParticleResult result;
  result.dists.reserve(k_values.size());
  try {
    std::unique_ptr<LearnerState> current = state.clone();
    Observation last = seed_obs;
    long done_updates = 0;
    const long counted_start = learner.update_count(*current);

    auto one_interaction = [&] {
      auto [out, obs] = hybrid.next(*current, last, at_step, rng);
      current = mode == RolloutMode::kLearning
                    ? learner.learn_update(*current, obs, out, rng)
                    : learner.infer_update(*current, obs, out, rng);
      if (!current->finite())
        throw NumericalError("particle state diverged", done_updates + 1);
      last = std::move(obs);
    };

    for (long target_k : k_values) {
      while (done_updates < target_k) {
        if (counted_start < 0) {
          one_interaction();
        } else {
          long before = learner.update_count(*current);
          long guard = learner.interactions_per_update() * 4 + 8;
          do {
            one_interaction();
          } while (learner.update_count(*current) == before && --guard > 0);
        }
        ++done_updates;
      }
      std::vector<PredictiveDistribution> per_probe;
      per_probe.reserve(probes.points.size());
      for (const auto& p : probes.points)
        per_probe.push_back(learner.predict(*current, p, rng));
      result.dists.push_back(std::move(per_probe));
    }
  } catch (const NumericalError&) {
    result.dropped = true;
    result.dists.clear();
  }
  return result;
}

struct Aggregated {
  std::vector<double> per_probe;
  double gamma = 0.0;
  bool infinite = false;
  std::vector<std::size_t> infinite_probes;
};

Aggregated aggregate(const std::vector<const std::vector<PredictiveDistribution>*>&
                         particle_dists,  // one entry per surviving particle
                     const std::vector<PredictiveDistribution>& reference,
                     const DivergenceSpec& spec, MixturePolicy policy) {
  Aggregated out;
  std::size_t num_probes = reference.size();
  out.per_probe.resize(num_probes, 0.0);
  for (std::size_t p = 0; p < num_probes; ++p) {
    double d;
    if (policy == MixturePolicy::kMixtureDivergence) {
      std::vector<PredictiveDistribution> parts;
      parts.reserve(particle_dists.size());
      for (const auto* pd : particle_dists) parts.push_back((*pd)[p]);
      d = divergence(reference[p], mixture_predictive(parts), spec);
    } else {
      d = 0.0;
      for (const auto* pd : particle_dists)
        d += divergence(reference[p], (*pd)[p], spec);
      d /= static_cast<double>(particle_dists.size());
    }
    out.per_probe[p] = d;
    if (std::isinf(d)) {
      out.infinite = true;
      out.infinite_probes.push_back(p);
    }
  }
  if (out.infinite) {
    out.gamma = kInf;
  } else {
    double total = 0.0;
    for (double d : out.per_probe) total += d;
    out.gamma = total / static_cast<double>(num_probes);
  }
  return out;
}

}  // namespace

PredictiveDistribution mixture_predictive(
    const std::vector<PredictiveDistribution>& particles) {
  if (particles.empty())
    throw std::invalid_argument("mixture_predictive: empty");
  for (std::size_t i = 1; i < particles.size(); ++i)
    if (particles[i].index() != particles[0].index())
      throw std::invalid_argument("mixture_predictive: mixed variants");
  if (all_equal(particles)) return particles[0];

  double inv_m = 1.0 / static_cast<double>(particles.size());
  if (std::holds_alternative<Categorical>(particles[0])) {
    std::size_t n = std::get<Categorical>(particles[0]).probs.size();
    std::vector<double> probs(n, 0.0);
    for (const auto& d : particles) {
      const auto& c = std::get<Categorical>(d);
      if (c.probs.size() != n)
        throw std::invalid_argument("mixture_predictive: categorical size mismatch");
      for (std::size_t i = 0; i < n; ++i) probs[i] += c.probs[i] * inv_m;
    }
    return Categorical{std::move(probs)};
  }
  if (std::holds_alternative<Gaussian>(particles[0])) {
    // Moment-matched Gaussian: mean of means; variance is the mixture
    // second moment minus the squared mixture mean.
    double mean = 0.0, second = 0.0;
    for (const auto& d : particles) {
      const auto& g = std::get<Gaussian>(d);
      mean += g.mean * inv_m;
      second += (g.variance + g.mean * g.mean) * inv_m;
    }
    return Gaussian{mean, std::max(second - mean * mean, 1e-300)};
  }
  if (std::holds_alternative<DiagGaussianVec>(particles[0])) {
    std::size_t n = std::get<DiagGaussianVec>(particles[0]).means.size();
    DiagGaussianVec out;
    out.means.assign(n, 0.0);
    out.variances.assign(n, 0.0);
    for (const auto& d : particles) {
      const auto& g = std::get<DiagGaussianVec>(d);
      for (std::size_t i = 0; i < n; ++i) {
        out.means[i] += g.means[i] * inv_m;
        out.variances[i] += (g.variances[i] + g.means[i] * g.means[i]) * inv_m;
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      out.variances[i] =
          std::max(out.variances[i] - out.means[i] * out.means[i], 1e-300);
    return out;
  }
  if (std::holds_alternative<Dirac>(particles[0])) {
    // Non-identical point masses pool into a discrete empirical measure.
    Empirical pooled;
    for (const auto& d : particles)
      pooled.samples.push_back(std::get<Dirac>(d).value);
    return pooled;
  }
  Empirical pooled;
  for (const auto& d : particles) {
    const auto& e = std::get<Empirical>(d);
    pooled.samples.insert(pooled.samples.end(), e.samples.begin(),
                          e.samples.end());
  }
  return pooled;
}

std::vector<ForgettingEstimate> sweep_k(const LearnerRole& learner,
                                        const LearnerState& state,
                                        const History& history,
                                        const EnvironmentRole& env,
                                        const ForgettingConfig& cfg,
                                        const std::vector<long>& k_values) {
  if (k_values.empty())
    throw std::invalid_argument("sweep_k: empty k list");
  for (long k : k_values)
    if (k < 1) throw std::invalid_argument("sweep_k: k must be >= 1");
  std::vector<long> ks = k_values;
  std::sort(ks.begin(), ks.end());
  if (cfg.num_particles < 1 || cfg.probes.points.empty())
    throw std::invalid_argument("sweep_k: invalid config");

  const uint64_t state_hash_before = state.content_hash();
  HybridEnvironment hybrid(env, learner);
  const Observation& seed_obs = history.back().first;
  const std::size_t M = cfg.num_particles;
  const bool frozen = learner.inference_frozen_predictive();

  // Learning-mode particles.
  std::vector<ParticleResult> particles(M);
  run_indexed(M, cfg.num_threads, [&](std::size_t m) {
    particles[m] = run_particle(
        learner, state, hybrid, seed_obs, ks, cfg.probes,
        RolloutMode::kLearning, cfg.time_index,
        make_stream(cfg.rng_root, "gamma-particle",
                    static_cast<uint64_t>(cfg.time_index), m));
  });

  // Reference: exact predictives of the snapshot when the learner's
  // predictive is frozen under u'; otherwise an inference-mode particle
  // mixture driven by the same streams (common random numbers).
  std::vector<std::vector<PredictiveDistribution>> reference_per_k(ks.size());
  if (frozen) {
    Rng ref_rng = make_stream(cfg.rng_root, "gamma-ref",
                              static_cast<uint64_t>(cfg.time_index));
    auto ref = probe_predictives(learner, state, cfg.probes, ref_rng);
    for (auto& r : reference_per_k) r = ref;
  } else {
    std::vector<ParticleResult> ref_particles(M);
    run_indexed(M, cfg.num_threads, [&](std::size_t m) {
      ref_particles[m] = run_particle(
          learner, state, hybrid, seed_obs, ks, cfg.probes,
          RolloutMode::kInference, cfg.time_index,
          make_stream(cfg.rng_root, "gamma-particle",
                      static_cast<uint64_t>(cfg.time_index), m));
    });
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      std::vector<PredictiveDistribution> mix;
      for (std::size_t p = 0; p < cfg.probes.points.size(); ++p) {
        std::vector<PredictiveDistribution> parts;
        for (const auto& rp : ref_particles)
          if (!rp.dropped) parts.push_back(rp.dists[ki][p]);
        if (parts.empty())
          throw NumericalError("all reference particles dropped", cfg.time_index);
        mix.push_back(mixture_predictive(parts));
      }
      reference_per_k[ki] = std::move(mix);
    }
  }

  std::size_t dropped = 0;
  for (const auto& pr : particles)
    if (pr.dropped) ++dropped;
  if (static_cast<double>(dropped) >
      cfg.max_dropped_fraction * static_cast<double>(M))
    throw NumericalError("estimate_gamma: more than " +
                             std::to_string(static_cast<int>(
                                 cfg.max_dropped_fraction * 100)) +
                             "% of particles diverged",
                         cfg.time_index);

  std::vector<ForgettingEstimate> estimates;
  estimates.reserve(ks.size());
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    std::vector<const std::vector<PredictiveDistribution>*> surviving;
    surviving.reserve(M - dropped);
    for (const auto& pr : particles)
      if (!pr.dropped) surviving.push_back(&pr.dists[ki]);

    Aggregated agg = aggregate(surviving, reference_per_k[ki], cfg.divergence,
                               cfg.mixture_policy);

    ForgettingEstimate est;
    est.gamma = agg.gamma;
    est.per_probe = std::move(agg.per_probe);
    est.infinite = agg.infinite;
    est.infinite_probes = std::move(agg.infinite_probes);
    est.k = ks[ki];
    est.num_particles = M;
    est.t = cfg.time_index;
    est.dropped_particles = dropped;

    // Bootstrap standard error over particles.
    if (!est.infinite && surviving.size() > 1 && cfg.bootstrap_resamples > 0) {
      Rng boot_rng = make_stream(cfg.rng_root, "gamma-bootstrap",
                                 static_cast<uint64_t>(cfg.time_index),
                                 static_cast<uint64_t>(ks[ki]));
      double sum = 0.0, sum_sq = 0.0;
      std::size_t B = cfg.bootstrap_resamples;
      std::vector<const std::vector<PredictiveDistribution>*> resampled(
          surviving.size());
      for (std::size_t b = 0; b < B; ++b) {
        for (auto& slot : resampled)
          slot = surviving[boot_rng.uniform_int(surviving.size())];
        Aggregated boot = aggregate(resampled, reference_per_k[ki],
                                    cfg.divergence, cfg.mixture_policy);
        double g = std::isinf(boot.gamma) ? est.gamma : boot.gamma;
        sum += g;
        sum_sq += g * g;
      }
      double mean = sum / static_cast<double>(B);
      double var = std::max(sum_sq / static_cast<double>(B) - mean * mean, 0.0);
      est.std_error = std::sqrt(var);
    }
    estimates.push_back(std::move(est));
  }

  if (state.content_hash() != state_hash_before)
    throw std::logic_error("estimate_gamma mutated the live state");
  return estimates;
}

ForgettingEstimate estimate_gamma(const LearnerRole& learner,
                                  const LearnerState& state,
                                  const History& history,
                                  const EnvironmentRole& env,
                                  const ForgettingConfig& cfg) {
  return sweep_k(learner, state, history, env, cfg, {cfg.k}).front();
}

ConsistencyVerdict check_consistency(const LearnerRole& learner,
                                     const LearnerState& state,
                                     const History& history,
                                     const EnvironmentRole& env,
                                     const ForgettingConfig& cfg,
                                     double threshold) {
  ForgettingEstimate est = estimate_gamma(learner, state, history, env, cfg);
  return est.gamma <= threshold ? ConsistencyVerdict::kConsistent
                                : ConsistencyVerdict::kForgetting;
}

double calibrate_tau_mc(const std::function<double(uint64_t)>& gamma_of_seed,
                        int num_seeds, double quantile) {
  if (num_seeds < 1)
    throw std::invalid_argument("calibrate_tau_mc: need at least one seed");
  std::vector<double> gammas(static_cast<std::size_t>(num_seeds));
  for (int i = 0; i < num_seeds; ++i)
    gammas[static_cast<std::size_t>(i)] = gamma_of_seed(static_cast<uint64_t>(i));
  std::sort(gammas.begin(), gammas.end());
  auto idx = static_cast<std::size_t>(
      std::ceil(quantile * static_cast<double>(num_seeds))) - 1;
  idx = std::min(idx, gammas.size() - 1);
  return gammas[idx];
}

}  // namespace fm
