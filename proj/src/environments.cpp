#include "fm/environments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fm {

Dataset make_sinusoid_dataset(std::size_t n, double lo, double hi, double noise,
                              Rng& rng) {
  Dataset ds;
  ds.inputs.reserve(n);
  ds.targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = rng.uniform(lo, hi);
    ds.inputs.push_back({x});
    ds.targets.push_back({std::sin(x) + rng.normal(0.0, noise)});
  }
  return ds;
}

Vec sample_moon_point(int moon, double noise, Rng& rng) {
  double t = rng.uniform(0.0, M_PI);
  Vec p(2);
  if (moon == 0) {
    p[0] = std::cos(t);
    p[1] = std::sin(t);
  } else {
    p[0] = 1.0 + std::cos(t);
    p[1] = -0.5 + std::sin(t);
  }
  if (noise > 0.0) {
    p[0] += rng.normal(0.0, noise);
    p[1] += rng.normal(0.0, noise);
  }
  return p;
}

std::vector<std::pair<Vec, int>> gen_two_moons(std::size_t n, double noise,
                                               Rng& rng) {
  if (n < 1) throw std::invalid_argument("gen_two_moons: n must be >= 1");
  std::vector<std::pair<Vec, int>> points;
  points.reserve(n);
  std::size_t n0 = (n + 1) / 2;  // balanced within one point
  for (std::size_t i = 0; i < n; ++i) {
    int moon = i < n0 ? 0 : 1;
    points.emplace_back(sample_moon_point(moon, noise, rng), moon);
  }
  return points;
}

Dataset two_moons_dataset(std::size_t n, double noise, Rng& rng) {
  Dataset ds;
  for (auto& [p, label] : gen_two_moons(n, noise, rng)) {
    ds.inputs.push_back(p);
    ds.targets.push_back({static_cast<double>(label)});
    ds.task.push_back(label);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// SupervisedDatasetEnv
// ---------------------------------------------------------------------------

SupervisedDatasetEnv::SupervisedDatasetEnv(Dataset train,
                                           ValidationSet validation, Config cfg)
    : train_(std::move(train)), validation_(std::move(validation)), cfg_(cfg) {
  if (train_.inputs.empty()) throw ConfigError("dataset env: empty train set");
  all_indices_.resize(train_.inputs.size());
  std::iota(all_indices_.begin(), all_indices_.end(), 0);
  if (cfg_.class_incremental) {
    if (train_.task.empty())
      throw ConfigError("dataset env: class-incremental needs task labels");
    for (std::size_t i = 0; i < train_.task.size(); ++i)
      (train_.task[i] == 0 ? task0_indices_ : task1_indices_).push_back(i);
    if (task0_indices_.size() != task1_indices_.size())
      throw ConfigError("dataset env: tasks must be equally sized");
    batches_per_epoch_ = static_cast<long>(
        (task0_indices_.size() + cfg_.batch_size - 1) / cfg_.batch_size);
  } else {
    batches_per_epoch_ = static_cast<long>(
        (train_.inputs.size() + cfg_.batch_size - 1) / cfg_.batch_size);
  }
}

const std::vector<std::size_t>& SupervisedDatasetEnv::task_pool(
    long epoch) const {
  if (!cfg_.class_incremental) return all_indices_;
  return epoch < cfg_.epochs / 2 ? task0_indices_ : task1_indices_;
}

long SupervisedDatasetEnv::boundary_step() const {
  if (!cfg_.class_incremental) return -1;
  // Serve index of the first task-1 batch; it is trained one step later.
  return (cfg_.epochs / 2) * batches_per_epoch_ + 1;
}

std::vector<std::vector<std::size_t>> SupervisedDatasetEnv::epoch_batches(
    long epoch) const {
  const auto& pool = task_pool(epoch);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_stream(cfg_.shuffle_seed, "epoch-shuffle",
                        static_cast<uint64_t>(epoch));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    std::vector<std::size_t> batch;
    for (std::size_t i = start; i < std::min(order.size(), start + cfg_.batch_size);
         ++i)
      batch.push_back(pool[order[i]]);
    batches.push_back(std::move(batch));
  }
  return batches;
}

Batch SupervisedDatasetEnv::serve_inputs(long serve_index) const {
  long epoch = serve_index / batches_per_epoch_;
  long b = serve_index % batches_per_epoch_;
  auto batches = epoch_batches(epoch);
  Batch out;
  for (std::size_t idx : batches[static_cast<std::size_t>(b)])
    out.push_back(train_.inputs[idx]);
  return out;
}

Batch SupervisedDatasetEnv::serve_targets(long serve_index) const {
  long epoch = serve_index / batches_per_epoch_;
  long b = serve_index % batches_per_epoch_;
  auto batches = epoch_batches(epoch);
  Batch out;
  for (std::size_t idx : batches[static_cast<std::size_t>(b)])
    out.push_back(train_.targets[idx]);
  return out;
}

Observation SupervisedDatasetEnv::initial_observation(Rng&) const {
  return make_supervised_obs(serve_inputs(0));
}

Observation SupervisedDatasetEnv::next(const History& history, const Output&,
                                       Rng&) const {
  long serve_index = static_cast<long>(history.size());
  return make_supervised_obs(serve_inputs(serve_index),
                             serve_targets(serve_index - 1));
}

Batch SupervisedDatasetEnv::sample_input_batch(long at_step, Rng& rng) const {
  long epoch = std::max<long>(at_step - 1, 0) / batches_per_epoch_;
  const auto& pool = task_pool(epoch);
  std::size_t n = std::min(cfg_.batch_size, pool.size());
  // Partial Fisher-Yates: n distinct indices from the pool.
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Batch out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + rng.uniform_int(order.size() - i);
    std::swap(order[i], order[j]);
    out.push_back(train_.inputs[pool[order[i]]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// GenerativeDataEnv
// ---------------------------------------------------------------------------

GenerativeDataEnv::GenerativeDataEnv(Batch train, Batch validation, Config cfg)
    : train_(std::move(train)), validation_(std::move(validation)), cfg_(cfg) {
  if (train_.empty()) throw ConfigError("generative env: empty train set");
  batches_per_epoch_ =
      static_cast<long>((train_.size() + cfg_.batch_size - 1) / cfg_.batch_size);
}

Batch GenerativeDataEnv::serve_batch(long serve_index) const {
  long epoch = serve_index / batches_per_epoch_;
  long b = serve_index % batches_per_epoch_;
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_stream(cfg_.shuffle_seed, "epoch-shuffle",
                        static_cast<uint64_t>(epoch));
  rng.shuffle(order);
  Batch out;
  std::size_t start = static_cast<std::size_t>(b) * cfg_.batch_size;
  for (std::size_t i = start; i < std::min(train_.size(), start + cfg_.batch_size);
       ++i)
    out.push_back(train_[order[i]]);
  return out;
}

Observation GenerativeDataEnv::initial_observation(Rng&) const {
  return make_gen_obs(serve_batch(0));
}

Observation GenerativeDataEnv::next(const History& history, const Output&,
                                    Rng&) const {
  return make_gen_obs(serve_batch(static_cast<long>(history.size())));
}

// ---------------------------------------------------------------------------
// Cartpole
// ---------------------------------------------------------------------------

std::tuple<Vec, double, bool> cartpole_step(const Vec& state, int action,
                                            const CartpoleParams& p) {
  if (action != 0 && action != 1)
    throw std::invalid_argument("cartpole_step: action must be 0 or 1");
  double x = state[0], x_dot = state[1], theta = state[2], theta_dot = state[3];
  double force = action == 1 ? p.force_mag : -p.force_mag;
  double total_mass = p.cart_mass + p.pole_mass;
  double pole_ml = p.pole_mass * p.half_length;

  double cos_t = std::cos(theta);
  double sin_t = std::sin(theta);
  double temp = (force + pole_ml * theta_dot * theta_dot * sin_t) / total_mass;
  double theta_acc = (p.gravity * sin_t - cos_t * temp) /
                     (p.half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t /
                                                       total_mass));
  double x_acc = temp - pole_ml * theta_acc * cos_t / total_mass;

  // Semi-implicit Euler: velocities first, then positions.
  x_dot += p.dt * x_acc;
  x += p.dt * x_dot;
  theta_dot += p.dt * theta_acc;
  theta += p.dt * theta_dot;

  Vec next = {x, x_dot, theta, theta_dot};
  for (double v : next)
    if (!std::isfinite(v)) throw NumericalError("cartpole state diverged", -1);
  bool terminal =
      std::abs(x) > p.x_threshold || std::abs(theta) > p.theta_threshold;
  return {std::move(next), 1.0, terminal};
}

double cartpole_energy(const Vec& state, const CartpoleParams& p) {
  double x_dot = state[1], theta = state[2], theta_dot = state[3];
  double l = p.half_length;
  double kinetic = 0.5 * (p.cart_mass + p.pole_mass) * x_dot * x_dot +
                   p.pole_mass * l * theta_dot * x_dot * std::cos(theta) +
                   0.5 * (4.0 / 3.0) * p.pole_mass * l * l * theta_dot * theta_dot;
  double potential = p.pole_mass * p.gravity * l * std::cos(theta);
  return kinetic + potential;
}

Observation CartpoleEnv::initial_observation(Rng& rng) const {
  return make_rl_obs(sample_initial_state(rng), 0.0, false);
}

Vec CartpoleEnv::sample_initial_state(Rng& rng) const {
  Vec s(4);
  for (double& v : s) v = rng.uniform(-0.05, 0.05);
  return s;
}

std::tuple<Vec, double, bool> CartpoleEnv::dynamics(const Vec& state,
                                                    int action) const {
  return cartpole_step(state, action, params_);
}

Observation CartpoleEnv::next(const History& history, const Output& output,
                              Rng& rng) const {
  const auto& prev = history.back().first.rl();
  if (prev.terminal) return make_rl_obs(sample_initial_state(rng), 0.0, false);

  auto [s_next, reward, terminal] = dynamics(prev.state, output.action().index);
  if (!terminal) {
    // Episode step cap: count completed steps since the last reset.
    long steps = 1;
    for (std::size_t i = history.size(); i-- > 1;) {
      const auto& obs = history.at_index(i).first;
      if (!obs.is_rl() || obs.rl().terminal) break;
      const auto& before = history.at_index(i - 1).first;
      if (before.is_rl() && before.rl().terminal) break;
      ++steps;
    }
    if (steps >= params_.max_episode_steps) terminal = true;
  }
  return make_rl_obs(std::move(s_next), reward, terminal);
}

std::string dataset_to_csv(const Dataset& train, const ValidationSet& validation) {
  std::ostringstream out;
  std::size_t dim = train.inputs.empty() ? 0 : train.inputs.front().size();
  for (std::size_t d = 0; d < dim; ++d) out << "x" << d << ",";
  out << "y,split,task\n";
  auto row = [&](const Vec& x, const Vec& y, const char* split, int task) {
    for (double v : x) out << v << ",";
    out << (y.empty() ? 0.0 : y[0]) << "," << split << "," << task << "\n";
  };
  for (std::size_t i = 0; i < train.inputs.size(); ++i)
    row(train.inputs[i], train.targets[i], "train",
        train.task.empty() ? 0 : train.task[i]);
  for (const auto& [x, y] : validation) row(x, y, "val", 0);
  return out.str();
}

}  // namespace fm
