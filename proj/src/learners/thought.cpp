#include "fm/learners/thought.hpp"

#include <cmath>
#include <numeric>

namespace fm {

// ---------------------------------------------------------------------------
// FIFO stack
// ---------------------------------------------------------------------------

uint64_t FifoStackState::content_hash() const {
  uint64_t h = hash_combine(fnv1a("fifostack"), capacity);
  for (int b : bits) h = hash_combine(h, static_cast<uint64_t>(b + 1));
  return h;
}

std::unique_ptr<LearnerState> FifoStackLearner::initial_state(Rng&) const {
  auto s = std::make_unique<FifoStackState>();
  s->capacity = capacity_;
  return s;
}

std::unique_ptr<FifoStackState> FifoStackLearner::with_bits(
    std::size_t capacity, std::vector<int> bits) {
  auto s = std::make_unique<FifoStackState>();
  s->capacity = capacity;
  if (bits.size() > capacity)
    throw std::invalid_argument("FifoStack: occupancy above capacity");
  s->bits = std::move(bits);
  return s;
}

PredictiveDistribution FifoStackLearner::predict(const LearnerState& state,
                                                 const Observation& obs,
                                                 Rng&) const {
  const auto& s = state_as<FifoStackState>(state);
  const auto& sp = obs.supervised();
  if (sp.inputs.empty() || sp.inputs.front().empty()) return Dirac{{}};
  auto slot = static_cast<std::size_t>(sp.inputs.front()[0]);
  if (slot >= s.bits.size()) return Dirac{{}};  // unassigned: null prediction
  return Dirac{{static_cast<double>(s.bits[slot])}};
}

std::unique_ptr<LearnerState> FifoStackLearner::learn_update(
    const LearnerState& state, const Observation& obs, const Output&,
    Rng&) const {
  auto next = std::make_unique<FifoStackState>(state_as<FifoStackState>(state));
  const auto& sp = obs.supervised();
  if (!sp.prev_targets.empty() && !sp.prev_targets.front().empty() &&
      next->capacity > 0) {
    int bit = sp.prev_targets.front()[0] >= 0.5 ? 1 : 0;
    next->bits.insert(next->bits.begin(), bit);
    if (next->bits.size() > next->capacity) next->bits.pop_back();
  }
  return next;
}

// ---------------------------------------------------------------------------
// Hash map
// ---------------------------------------------------------------------------

uint64_t HashMapState::content_hash() const {
  uint64_t h = hash_combine(fnv1a("hashmap"), static_cast<uint64_t>(pending_key));
  for (const auto& [k, v] : table) {
    h = hash_combine(h, static_cast<uint64_t>(k));
    h = hash_double(h, v);
  }
  return h;
}

std::unique_ptr<LearnerState> HashMapLearner::observe_bootstrap(
    const LearnerState& state, const Observation& x0) const {
  auto next = std::make_unique<HashMapState>(state_as<HashMapState>(state));
  const auto& sp = x0.supervised();
  if (!sp.inputs.empty() && !sp.inputs.front().empty())
    next->pending_key = static_cast<long>(sp.inputs.front()[0]);
  return next;
}

PredictiveDistribution HashMapLearner::predict(const LearnerState& state,
                                               const Observation& obs,
                                               Rng&) const {
  const auto& s = state_as<HashMapState>(state);
  const auto& sp = obs.supervised();
  if (sp.inputs.empty() || sp.inputs.front().empty()) return Dirac{{}};
  auto key = static_cast<long>(sp.inputs.front()[0]);
  auto it = s.table.find(key);
  if (it == s.table.end()) return Dirac{{}};  // null if unassigned
  return Dirac{{it->second}};
}

std::unique_ptr<LearnerState> HashMapLearner::learn_update(
    const LearnerState& state, const Observation& obs, const Output&,
    Rng&) const {
  auto next = std::make_unique<HashMapState>(state_as<HashMapState>(state));
  const auto& sp = obs.supervised();
  if (!sp.prev_targets.empty() && !sp.prev_targets.front().empty() &&
      next->pending_key >= 0) {
    // Never overwrite an existing entry.
    next->table.emplace(next->pending_key, sp.prev_targets.front()[0]);
  }
  if (!sp.inputs.empty() && !sp.inputs.front().empty())
    next->pending_key = static_cast<long>(sp.inputs.front()[0]);
  return next;
}

// ---------------------------------------------------------------------------
// Clock
// ---------------------------------------------------------------------------

std::unique_ptr<LearnerState> ClockLearner::learn_update(
    const LearnerState& state, const Observation& obs, const Output&,
    Rng&) const {
  auto next = std::make_unique<ClockState>(state_as<ClockState>(state));
  const auto& sp = obs.supervised();
  if (!sp.prev_targets.empty() && !sp.prev_targets.front().empty())
    next->time = sp.prev_targets.front()[0];
  return next;
}

// ---------------------------------------------------------------------------
// Moody
// ---------------------------------------------------------------------------

std::unique_ptr<LearnerState> MoodyLearner::initial_state(Rng& rng) const {
  auto s = std::make_unique<MoodyState>();
  s->inner = inner_->initial_state(rng);
  return s;
}

std::unique_ptr<LearnerState> MoodyLearner::observe_bootstrap(
    const LearnerState& state, const Observation& x0) const {
  const auto& s = state_as<MoodyState>(state);
  auto next = std::make_unique<MoodyState>();
  next->inner = inner_->observe_bootstrap(*s.inner, x0);
  next->step = s.step;
  return next;
}

PredictiveDistribution MoodyLearner::predict(const LearnerState& state,
                                             const Observation& obs,
                                             Rng& rng) const {
  return inner_->predict(*state_as<MoodyState>(state).inner, obs, rng);
}

Output MoodyLearner::act(const LearnerState& state, const Observation& obs,
                         Rng& rng) const {
  return inner_->act(*state_as<MoodyState>(state).inner, obs, rng);
}

std::unique_ptr<LearnerState> MoodyLearner::learn_update(
    const LearnerState& state, const Observation& obs, const Output& out,
    Rng& rng) const {
  const auto& s = state_as<MoodyState>(state);
  auto next = std::make_unique<MoodyState>();
  next->step = s.step + 1;
  next->inner = s.step % 2 == 0 ? inner_->learn_update(*s.inner, obs, out, rng)
                                : s.inner->clone();
  return next;
}

// ---------------------------------------------------------------------------
// Function picker
// ---------------------------------------------------------------------------

FunctionPickerLearner::FunctionPickerLearner(std::vector<double> heads_probs)
    : heads_probs_(std::move(heads_probs)) {
  if (heads_probs_.empty())
    throw std::invalid_argument("FunctionPicker: need at least one function");
  mixture_heads_ =
      std::accumulate(heads_probs_.begin(), heads_probs_.end(), 0.0) /
      static_cast<double>(heads_probs_.size());
}

std::unique_ptr<LearnerState> FunctionPickerLearner::initial_state(
    Rng& rng) const {
  auto s = std::make_unique<FunctionPickerState>();
  s->index = rng.uniform_int(heads_probs_.size());
  return s;
}

std::unique_ptr<LearnerState> FunctionPickerLearner::learn_update(
    const LearnerState&, const Observation&, const Output&, Rng& rng) const {
  auto s = std::make_unique<FunctionPickerState>();
  s->index = rng.uniform_int(heads_probs_.size());
  return s;
}

Output FunctionPickerLearner::act(const LearnerState& state, const Observation&,
                                  Rng& rng) const {
  double p = heads_probs_[state_as<FunctionPickerState>(state).index];
  Batch values;
  values.push_back({rng.bernoulli(p) ? 1.0 : 0.0});
  return make_target_output(std::move(values));
}

// ---------------------------------------------------------------------------
// Binary flipper
// ---------------------------------------------------------------------------

PredictiveDistribution BinaryFlipperLearner::predict(const LearnerState& state,
                                                     const Observation& obs,
                                                     Rng&) const {
  const auto& s = state_as<FlipperState>(state);
  const auto& sp = obs.supervised();
  if (sp.inputs.empty() || sp.inputs.front().empty())
    return Dirac{{s.time}};  // time query, clock-style belief
  const Vec& x = sp.inputs.front();
  double score = bias_;
  for (std::size_t i = 0; i < weights_.size() && i < x.size(); ++i)
    score += weights_[i] * x[i];
  int cls = score > 0.0 ? 1 : 0;
  if (s.parity != 0) cls = 1 - cls;
  return Categorical{{cls == 0 ? 1.0 : 0.0, cls == 1 ? 1.0 : 0.0}};
}

std::unique_ptr<LearnerState> BinaryFlipperLearner::learn_update(
    const LearnerState& state, const Observation& obs, const Output&,
    Rng&) const {
  auto next = std::make_unique<FlipperState>(state_as<FlipperState>(state));
  const auto& sp = obs.supervised();
  if (!sp.prev_targets.empty() && !sp.prev_targets.front().empty()) {
    double observed = sp.prev_targets.front()[0];
    long delta = static_cast<long>(observed - next->time);
    if (delta > 0) {
      next->parity ^= static_cast<int>(delta & 1);
      next->time = observed;
    }
  }
  return next;
}

// ---------------------------------------------------------------------------
// Label permutation
// ---------------------------------------------------------------------------

uint64_t LabelPermutedState::content_hash() const {
  uint64_t h = fnv1a("label-permuted");
  for (std::size_t p : permutation) h = hash_combine(h, p);
  return hash_double(h, time);
}

std::unique_ptr<LearnerState> LabelPermutedLearner::initial_state(Rng&) const {
  auto s = std::make_unique<LabelPermutedState>();
  s->permutation.resize(permutation_.size());
  std::iota(s->permutation.begin(), s->permutation.end(), 0);
  return s;
}

PredictiveDistribution LabelPermutedLearner::predict(const LearnerState& state,
                                                     const Observation& obs,
                                                     Rng& rng) const {
  const auto& s = state_as<LabelPermutedState>(state);
  const auto& sp = obs.supervised();
  if (sp.inputs.empty() || sp.inputs.front().empty())
    return Dirac{{s.time}};  // time query
  auto inner = inner_->predict(*inner_state_, obs, rng);
  const auto& cat = std::get<Categorical>(inner);
  std::vector<double> permuted(cat.probs.size());
  for (std::size_t i = 0; i < cat.probs.size(); ++i)
    permuted[s.permutation[i]] = cat.probs[i];
  return Categorical{std::move(permuted)};
}

std::unique_ptr<LearnerState> LabelPermutedLearner::learn_update(
    const LearnerState& state, const Observation& obs, const Output&,
    Rng&) const {
  auto next = std::make_unique<LabelPermutedState>(
      state_as<LabelPermutedState>(state));
  const auto& sp = obs.supervised();
  if (!sp.prev_targets.empty() && !sp.prev_targets.front().empty()) {
    double observed = sp.prev_targets.front()[0];
    if (observed > next->time) {
      if (next->time < permute_at_ && observed >= permute_at_) {
        std::vector<std::size_t> composed(next->permutation.size());
        for (std::size_t i = 0; i < composed.size(); ++i)
          composed[i] = permutation_[next->permutation[i]];
        next->permutation = std::move(composed);
      }
      next->time = observed;
    }
  }
  return next;
}

// ---------------------------------------------------------------------------
// Parity
// ---------------------------------------------------------------------------

std::unique_ptr<LearnerState> ParityLearner::learn_update(
    const LearnerState& state, const Observation& obs, const Output&,
    Rng&) const {
  auto next = std::make_unique<ParityState>(state_as<ParityState>(state));
  const auto& sp = obs.supervised();
  if (!sp.inputs.empty() && !sp.inputs.front().empty() &&
      sp.inputs.front()[0] >= 0.5)
    next->ones_parity ^= 1;
  return next;
}

// ---------------------------------------------------------------------------
// Coin flip
// ---------------------------------------------------------------------------

std::unique_ptr<LearnerState> CoinFlipBayesLearner::learn_update(
    const LearnerState& state, const Observation& obs, const Output&,
    Rng&) const {
  auto next = std::make_unique<CoinFlipBayesState>(
      state_as<CoinFlipBayesState>(state));
  const auto& sp = obs.supervised();
  if (!sp.prev_targets.empty() && !sp.prev_targets.front().empty()) {
    next->total += 1;
    if (sp.prev_targets.front()[0] >= 0.5) next->heads += 1;
  }
  return next;
}

// ---------------------------------------------------------------------------
// Environments
// ---------------------------------------------------------------------------

Observation StackEnv::initial_observation(Rng& rng) const {
  return make_supervised_obs(sample_input_batch(0, rng));
}

Observation StackEnv::next(const History&, const Output&, Rng& rng) const {
  Batch slot = sample_input_batch(0, rng);
  double bit = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return make_supervised_obs(std::move(slot), {{bit}});
}

Batch StackEnv::sample_input_batch(long, Rng& rng) const {
  double slot = capacity_ == 0
                    ? 0.0
                    : static_cast<double>(rng.uniform_int(capacity_));
  return {{slot}};
}

Observation KeyValueEnv::initial_observation(Rng& rng) const {
  return make_supervised_obs(sample_input_batch(0, rng));
}

Observation KeyValueEnv::next(const History&, const Output&, Rng& rng) const {
  Batch key = sample_input_batch(0, rng);
  double value = rng.uniform(0.0, 1.0);
  return make_supervised_obs(std::move(key), {{value}});
}

Batch KeyValueEnv::sample_input_batch(long, Rng& rng) const {
  return {{static_cast<double>(rng.uniform_int(static_cast<uint64_t>(num_keys_)))}};
}

Observation TickEnv::initial_observation(Rng&) const {
  return make_supervised_obs({}, {{0.0}});
}

Observation TickEnv::next(const History& history, const Output&, Rng&) const {
  return make_supervised_obs({}, {{static_cast<double>(history.size())}});
}

Batch TickEnv::sample_input_batch(long, Rng&) const { return {}; }

Observation BitStreamEnv::initial_observation(Rng& rng) const {
  return make_supervised_obs(sample_input_batch(0, rng));
}

Observation BitStreamEnv::next(const History&, const Output&, Rng& rng) const {
  return make_supervised_obs(sample_input_batch(0, rng));
}

Batch BitStreamEnv::sample_input_batch(long, Rng& rng) const {
  return {{rng.bernoulli(p_one_) ? 1.0 : 0.0}};
}

Observation CoinFlipEnv::initial_observation(Rng&) const {
  return make_supervised_obs({});
}

Observation CoinFlipEnv::next(const History&, const Output&, Rng& rng) const {
  return make_supervised_obs({}, {{rng.bernoulli(heads_prob_) ? 1.0 : 0.0}});
}

Batch CoinFlipEnv::sample_input_batch(long, Rng&) const { return {}; }

}  // namespace fm
