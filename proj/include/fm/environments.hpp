#pragma once

#include <cmath>
#include <tuple>

#include "fm/futures.hpp"
#include "fm/process.hpp"

namespace fm {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct Dataset {
  Batch inputs;
  Batch targets;           // regression vector or 1-element class index
  std::vector<int> task;   // task id per sample; empty when single-task
};

using ValidationSet = std::vector<std::pair<Vec, Vec>>;

// x ~ U(lo, hi), y = sin(x) + N(0, noise^2).
Dataset make_sinusoid_dataset(std::size_t n, double lo, double hi, double noise,
                              Rng& rng);

// Two interleaved unit half-circles: class 0 on the upper moon centered
// at the origin, class 1 on the same template offset by (1, -0.5).
// Labels are balanced to within one point.
std::vector<std::pair<Vec, int>> gen_two_moons(std::size_t n, double noise,
                                               Rng& rng);

// Single-moon sampler (for per-task class-incremental data).
Vec sample_moon_point(int moon, double noise, Rng& rng);

Dataset two_moons_dataset(std::size_t n, double noise, Rng& rng);

// ---------------------------------------------------------------------------
// Supervised dataset environment (sinusoid regression, two-moons
// classification, class-incremental two-moons)
// ---------------------------------------------------------------------------

class SupervisedDatasetEnv : public EnvironmentRole,
                             public SupervisedInputProcess {
 public:
  struct Config {
    std::size_t batch_size = 10;
    long epochs = 30;
    bool class_incremental = false;
    uint64_t shuffle_seed = 0;
  };

  SupervisedDatasetEnv(Dataset train, ValidationSet validation, Config cfg);

  long batches_per_epoch() const { return batches_per_epoch_; }
  long total_steps() const { return cfg_.epochs * batches_per_epoch_; }
  // First interaction step that trains on task-1 data (class-incremental).
  long boundary_step() const;

  // Ordered batches (sample indices) for one epoch: a seed-derived
  // permutation partitioned into batches; class-incremental epochs draw
  // from the active task's pool only.
  std::vector<std::vector<std::size_t>> epoch_batches(long epoch) const;

  Batch serve_inputs(long serve_index) const;
  Batch serve_targets(long serve_index) const;

  Observation initial_observation(Rng& rng) const override;
  Observation next(const History& history, const Output& output,
                   Rng& rng) const override;
  std::size_t interface_dim() const override {
    return train_.inputs.empty() ? 0 : train_.inputs.front().size();
  }

  Batch sample_input_batch(long at_step, Rng& rng) const override;

  const Dataset& train() const { return train_; }
  const ValidationSet& validation() const { return validation_; }
  const Config& config() const { return cfg_; }

 private:
  const std::vector<std::size_t>& task_pool(long epoch) const;

  Dataset train_;
  ValidationSet validation_;
  Config cfg_;
  long batches_per_epoch_ = 0;
  std::vector<std::size_t> all_indices_;
  std::vector<std::size_t> task0_indices_;
  std::vector<std::size_t> task1_indices_;
};

// ---------------------------------------------------------------------------
// Generative data environment (two-moons sample stream)
// ---------------------------------------------------------------------------

class GenerativeDataEnv : public EnvironmentRole {
 public:
  struct Config {
    std::size_t batch_size = 2500;
    long epochs = 250;
    uint64_t shuffle_seed = 0;
  };

  GenerativeDataEnv(Batch train, Batch validation, Config cfg);

  long batches_per_epoch() const { return batches_per_epoch_; }
  long total_steps() const { return cfg_.epochs * batches_per_epoch_; }

  Batch serve_batch(long serve_index) const;

  Observation initial_observation(Rng& rng) const override;
  Observation next(const History& history, const Output& output,
                   Rng& rng) const override;

  const Batch& train() const { return train_; }
  const Batch& validation() const { return validation_; }

 private:
  Batch train_;
  Batch validation_;
  Config cfg_;
  long batches_per_epoch_ = 0;
};

// ---------------------------------------------------------------------------
// Cartpole
// ---------------------------------------------------------------------------

struct CartpoleParams {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
  double force_mag = 10.0;
  double dt = 0.02;
  double theta_threshold = 12.0 * M_PI / 180.0;
  double x_threshold = 2.4;
  long max_episode_steps = 500;
};

// Semi-implicit Euler update of the pole-on-cart equations. Terminal on
// the angle/position thresholds (the episode step cap is enforced by the
// environment, not here). Reward is 1 per step.
std::tuple<Vec, double, bool> cartpole_step(const Vec& state, int action,
                                            const CartpoleParams& params = {});

// Total mechanical energy of the cart-pole system (diagnostic).
double cartpole_energy(const Vec& state, const CartpoleParams& params = {});

class CartpoleEnv : public EnvironmentRole, public MarkovDynamics {
 public:
  explicit CartpoleEnv(CartpoleParams params = {}) : params_(params) {}

  Observation initial_observation(Rng& rng) const override;
  Observation next(const History& history, const Output& output,
                   Rng& rng) const override;
  std::size_t interface_dim() const override { return 4; }

  Vec sample_initial_state(Rng& rng) const override;
  std::tuple<Vec, double, bool> dynamics(const Vec& state,
                                         int action) const override;

  const CartpoleParams& params() const { return params_; }

 private:
  CartpoleParams params_;
};

// Writes a dataset as CSV (columns x..., y or label, split, task).
std::string dataset_to_csv(const Dataset& train, const ValidationSet& validation);

}  // namespace fm
