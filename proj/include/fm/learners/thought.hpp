#pragma once

#include <cmath>
#include <map>
#include <memory>

#include "fm/futures.hpp"
#include "fm/learners/mlp.hpp"
#include "fm/process.hpp"

namespace fm {

// Executable versions of the thought-experiment learners. Observations
// are encoded as supervised pairs: inputs carry what is queried or fed
// (address, key, bit, tick), prev_targets carry the value component the
// hybrid replaces with the learner's own prediction.

// ---------------------------------------------------------------------------
// 1. Degenerate learner: the state never changes.
// ---------------------------------------------------------------------------

class DegenerateState final : public LearnerState {
 public:
  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<DegenerateState>(*this);
  }
  uint64_t content_hash() const override { return fnv1a("degenerate"); }
  bool finite() const override { return true; }
};

class DegenerateLearner : public LearnerRole {
 public:
  explicit DegenerateLearner(PredictiveDistribution dist) : dist_(std::move(dist)) {}

  std::unique_ptr<LearnerState> initial_state(Rng&) const override {
    return std::make_unique<DegenerateState>();
  }
  PredictiveDistribution predict(const LearnerState&, const Observation&,
                                 Rng&) const override {
    return dist_;
  }
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation&, const Output&,
                                             Rng&) const override {
    return state.clone();
  }

 private:
  PredictiveDistribution dist_;
};

// ---------------------------------------------------------------------------
// 2. FIFO bit stack. Reads answer with the bit stored at the queried
// slot (slot 0 = newest), a Dirac; unassigned slots answer the null
// prediction. A push drops the oldest bit once at capacity.
// ---------------------------------------------------------------------------

class FifoStackState final : public LearnerState {
 public:
  std::size_t capacity = 0;
  std::vector<int> bits;  // index 0 = newest

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<FifoStackState>(*this);
  }
  uint64_t content_hash() const override;
  bool finite() const override { return true; }
};

class FifoStackLearner : public LearnerRole {
 public:
  explicit FifoStackLearner(std::size_t capacity) : capacity_(capacity) {}

  std::unique_ptr<LearnerState> initial_state(Rng&) const override;
  PredictiveDistribution predict(const LearnerState& state,
                                 const Observation& obs, Rng&) const override;
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output& out,
                                             Rng&) const override;

  // Full stack with the given contents, for controlled scenarios.
  static std::unique_ptr<FifoStackState> with_bits(std::size_t capacity,
                                                   std::vector<int> bits);

 private:
  std::size_t capacity_;
};

// ---------------------------------------------------------------------------
// 3. Hash map with unbounded associative memory; never overwrites.
// ---------------------------------------------------------------------------

class HashMapState final : public LearnerState {
 public:
  std::map<long, double> table;
  long pending_key = -1;

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<HashMapState>(*this);
  }
  uint64_t content_hash() const override;
  bool finite() const override { return true; }
};

class HashMapLearner : public LearnerRole {
 public:
  std::unique_ptr<LearnerState> initial_state(Rng&) const override {
    return std::make_unique<HashMapState>();
  }
  std::unique_ptr<LearnerState> observe_bootstrap(
      const LearnerState& state, const Observation& x0) const override;
  PredictiveDistribution predict(const LearnerState& state,
                                 const Observation& obs, Rng&) const override;
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output& out,
                                             Rng&) const override;
};

// ---------------------------------------------------------------------------
// 4. Clock. Believes time stays at its last known value; absorbs the
// observed time under learning updates.
// ---------------------------------------------------------------------------

class ClockState final : public LearnerState {
 public:
  double time = 0.0;

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<ClockState>(*this);
  }
  uint64_t content_hash() const override {
    return hash_double(fnv1a("clock"), time);
  }
  bool finite() const override { return std::isfinite(time); }
};

class ClockLearner : public LearnerRole {
 public:
  std::unique_ptr<LearnerState> initial_state(Rng&) const override {
    return std::make_unique<ClockState>();
  }
  PredictiveDistribution predict(const LearnerState& state, const Observation&,
                                 Rng&) const override {
    return Dirac{{state_as<ClockState>(state).time}};
  }
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output&, Rng&) const override;
};

// ---------------------------------------------------------------------------
// 5. Moody learner: applies the inner update only on even steps.
// ---------------------------------------------------------------------------

class MoodyState final : public LearnerState {
 public:
  std::unique_ptr<LearnerState> inner;
  long step = 0;

  MoodyState() = default;
  MoodyState(const MoodyState& other)
      : inner(other.inner->clone()), step(other.step) {}

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<MoodyState>(*this);
  }
  uint64_t content_hash() const override {
    return hash_combine(inner->content_hash(), static_cast<uint64_t>(step));
  }
  bool finite() const override { return inner->finite(); }
};

class MoodyLearner : public LearnerRole {
 public:
  explicit MoodyLearner(std::shared_ptr<const LearnerRole> inner)
      : inner_(std::move(inner)) {}

  std::unique_ptr<LearnerState> initial_state(Rng& rng) const override;
  std::unique_ptr<LearnerState> observe_bootstrap(
      const LearnerState& state, const Observation& x0) const override;
  PredictiveDistribution predict(const LearnerState& state,
                                 const Observation& obs, Rng& rng) const override;
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output& out,
                                             Rng& rng) const override;
  Output act(const LearnerState& state, const Observation& obs,
             Rng& rng) const override;
  bool inference_frozen_predictive() const override {
    return inner_->inference_frozen_predictive();
  }

 private:
  std::shared_ptr<const LearnerRole> inner_;
};

// ---------------------------------------------------------------------------
// 6. Function picker: one of L fixed Bernoulli predictors, re-picked
// uniformly at every step independent of time and data. Its futures
// marginal is the uniform mixture over the L functions, which is
// state-independent.
// ---------------------------------------------------------------------------

class FunctionPickerState final : public LearnerState {
 public:
  std::size_t index = 0;

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<FunctionPickerState>(*this);
  }
  uint64_t content_hash() const override {
    return hash_combine(fnv1a("picker"), index);
  }
  bool finite() const override { return true; }
};

class FunctionPickerLearner : public LearnerRole {
 public:
  explicit FunctionPickerLearner(std::vector<double> heads_probs);

  std::unique_ptr<LearnerState> initial_state(Rng& rng) const override;
  PredictiveDistribution predict(const LearnerState&, const Observation&,
                                 Rng&) const override {
    return Categorical{{1.0 - mixture_heads_, mixture_heads_}};
  }
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output& out,
                                             Rng& rng) const override;
  std::unique_ptr<LearnerState> infer_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output& out,
                                             Rng& rng) const override {
    return learn_update(state, obs, out, rng);
  }
  Output act(const LearnerState& state, const Observation& obs,
             Rng& rng) const override;

  std::size_t num_functions() const { return heads_probs_.size(); }

 private:
  std::vector<double> heads_probs_;
  double mixture_heads_ = 0.5;
};

// ---------------------------------------------------------------------------
// 7. Binary flipper: a fixed binary rule whose outputs flip on every
// environment tick. Time queries are answered clock-style, so
// self-consistent updates never advance the flip.
// ---------------------------------------------------------------------------

class FlipperState final : public LearnerState {
 public:
  int parity = 0;
  double time = 0.0;

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<FlipperState>(*this);
  }
  uint64_t content_hash() const override {
    return hash_double(hash_combine(fnv1a("flipper"), parity), time);
  }
  bool finite() const override { return std::isfinite(time); }
};

class BinaryFlipperLearner : public LearnerRole {
 public:
  // rule: class 1 iff w . x + b > 0.
  BinaryFlipperLearner(Vec weights, double bias)
      : weights_(std::move(weights)), bias_(bias) {}

  std::unique_ptr<LearnerState> initial_state(Rng&) const override {
    return std::make_unique<FlipperState>();
  }
  PredictiveDistribution predict(const LearnerState& state,
                                 const Observation& obs, Rng&) const override;
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output&, Rng&) const override;

 private:
  Vec weights_;
  double bias_ = 0.0;
};

// ---------------------------------------------------------------------------
// 8. Label permutation: a frozen trained classifier whose logit-to-label
// mapping is permuted by an environment event at a scheduled tick.
// Parameters never change.
// ---------------------------------------------------------------------------

class LabelPermutedState final : public LearnerState {
 public:
  std::vector<std::size_t> permutation;
  double time = 0.0;

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<LabelPermutedState>(*this);
  }
  uint64_t content_hash() const override;
  bool finite() const override { return std::isfinite(time); }
};

class LabelPermutedLearner : public LearnerRole {
 public:
  LabelPermutedLearner(std::shared_ptr<const MlpLearner> inner,
                       std::shared_ptr<const MlpState> inner_state,
                       std::vector<std::size_t> permutation,
                       double permute_at_time)
      : inner_(std::move(inner)),
        inner_state_(std::move(inner_state)),
        permutation_(std::move(permutation)),
        permute_at_(permute_at_time) {}

  std::unique_ptr<LearnerState> initial_state(Rng&) const override;
  PredictiveDistribution predict(const LearnerState& state,
                                 const Observation& obs, Rng& rng) const override;
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output&, Rng&) const override;

 private:
  std::shared_ptr<const MlpLearner> inner_;
  std::shared_ptr<const MlpState> inner_state_;
  std::vector<std::size_t> permutation_;
  double permute_at_;
};

// ---------------------------------------------------------------------------
// 10. Even-parity checker: predicts 1 iff it has seen an even number of
// ones. The counter keeps evolving in inference mode (it is auxiliary
// state, not a belief parameter), so the predictive is not frozen.
// ---------------------------------------------------------------------------

class ParityState final : public LearnerState {
 public:
  int ones_parity = 0;  // 0 = even count seen

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<ParityState>(*this);
  }
  uint64_t content_hash() const override {
    return hash_combine(fnv1a("parity"), ones_parity);
  }
  bool finite() const override { return true; }
};

class ParityLearner : public LearnerRole {
 public:
  std::unique_ptr<LearnerState> initial_state(Rng&) const override {
    return std::make_unique<ParityState>();
  }
  PredictiveDistribution predict(const LearnerState& state, const Observation&,
                                 Rng&) const override {
    int predicts_one = state_as<ParityState>(state).ones_parity == 0 ? 1 : 0;
    return Categorical{{predicts_one == 0 ? 1.0 : 0.0,
                        predicts_one == 1 ? 1.0 : 0.0}};
  }
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output&, Rng&) const override;
  std::unique_ptr<LearnerState> infer_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output& out,
                                             Rng& rng) const override {
    return learn_update(state, obs, out, rng);
  }
  bool inference_frozen_predictive() const override { return false; }
};

// ---------------------------------------------------------------------------
// 11. Beta-Bernoulli coin-flip learner (uniform prior, exact counting).
// ---------------------------------------------------------------------------

class CoinFlipBayesState final : public LearnerState {
 public:
  long heads = 0;
  long total = 0;

  double predictive_heads() const {
    return (static_cast<double>(heads) + 1.0) /
           (static_cast<double>(total) + 2.0);
  }

  std::unique_ptr<LearnerState> clone() const override {
    return std::make_unique<CoinFlipBayesState>(*this);
  }
  uint64_t content_hash() const override {
    return hash_combine(hash_combine(fnv1a("coinflip"), heads), total);
  }
  bool finite() const override { return true; }
};

class CoinFlipBayesLearner : public LearnerRole {
 public:
  std::unique_ptr<LearnerState> initial_state(Rng&) const override {
    return std::make_unique<CoinFlipBayesState>();
  }
  PredictiveDistribution predict(const LearnerState& state, const Observation&,
                                 Rng&) const override {
    double p = state_as<CoinFlipBayesState>(state).predictive_heads();
    return Categorical{{1.0 - p, p}};
  }
  std::unique_ptr<LearnerState> learn_update(const LearnerState& state,
                                             const Observation& obs,
                                             const Output&, Rng&) const override;
};

// ---------------------------------------------------------------------------
// Companion environments for the scenarios above.
// ---------------------------------------------------------------------------

// Serves (slot to read, random bit to push).
class StackEnv : public EnvironmentRole, public SupervisedInputProcess {
 public:
  explicit StackEnv(std::size_t capacity) : capacity_(capacity) {}
  Observation initial_observation(Rng& rng) const override;
  Observation next(const History&, const Output&, Rng& rng) const override;
  Batch sample_input_batch(long, Rng& rng) const override;

 private:
  std::size_t capacity_;
};

// Serves (key to read, value assigned to the previously read key).
class KeyValueEnv : public EnvironmentRole, public SupervisedInputProcess {
 public:
  explicit KeyValueEnv(long num_keys) : num_keys_(num_keys) {}
  Observation initial_observation(Rng& rng) const override;
  Observation next(const History&, const Output&, Rng& rng) const override;
  Batch sample_input_batch(long, Rng& rng) const override;

 private:
  long num_keys_;
};

// Ticks: observation carries the current time as the target component.
class TickEnv : public EnvironmentRole, public SupervisedInputProcess {
 public:
  Observation initial_observation(Rng&) const override;
  Observation next(const History& history, const Output&, Rng&) const override;
  Batch sample_input_batch(long, Rng&) const override;
};

// I.i.d. Bernoulli bits served as inputs (nothing to supervise).
class BitStreamEnv : public EnvironmentRole, public SupervisedInputProcess {
 public:
  explicit BitStreamEnv(double p_one = 0.5) : p_one_(p_one) {}
  Observation initial_observation(Rng& rng) const override;
  Observation next(const History&, const Output&, Rng& rng) const override;
  Batch sample_input_batch(long, Rng& rng) const override;

 private:
  double p_one_;
};

// I.i.d. Bernoulli stream served as the target component.
class CoinFlipEnv : public EnvironmentRole, public SupervisedInputProcess {
 public:
  explicit CoinFlipEnv(double heads_prob = 0.5) : heads_prob_(heads_prob) {}
  Observation initial_observation(Rng&) const override;
  Observation next(const History&, const Output&, Rng& rng) const override;
  Batch sample_input_batch(long, Rng&) const override;

  double heads_prob() const { return heads_prob_; }

 private:
  double heads_prob_;
};

}  // namespace fm
