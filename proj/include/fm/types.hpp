#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace fm {

using Vec = std::vector<double>;
using Batch = std::vector<Vec>;  // batch of row vectors

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InterfaceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  NumericalError(const std::string& what, long step_index)
      : std::runtime_error(what + " (step " + std::to_string(step_index) + ")"),
        step(step_index) {}
  long step;
};

// ---------------------------------------------------------------------------
// Observations and outputs
// ---------------------------------------------------------------------------

// Current inputs paired with the targets for the inputs presented one
// step earlier. prev_targets is empty at the time-zero bootstrap.
struct SupervisedPair {
  Batch inputs;
  Batch prev_targets;
};

struct RlSignal {
  Vec state;
  double reward = 0.0;
  bool terminal = false;
};

struct GenSample {
  Batch data;
};

struct Observation {
  std::variant<SupervisedPair, RlSignal, GenSample> payload;

  bool is_supervised() const {
    return std::holds_alternative<SupervisedPair>(payload);
  }
  bool is_rl() const { return std::holds_alternative<RlSignal>(payload); }
  bool is_gen() const { return std::holds_alternative<GenSample>(payload); }
  const SupervisedPair& supervised() const {
    return std::get<SupervisedPair>(payload);
  }
  const RlSignal& rl() const { return std::get<RlSignal>(payload); }
  const GenSample& gen() const { return std::get<GenSample>(payload); }
};

Observation make_supervised_obs(Batch inputs, Batch prev_targets = {});
Observation make_rl_obs(Vec state, double reward, bool terminal);
Observation make_gen_obs(Batch data);
// Single-point probe helper: one input row, no targets.
Observation make_probe(Vec input);

bool observation_finite(const Observation& obs);
std::size_t observation_dim(const Observation& obs);

struct NullOutput {};

struct PredictedTarget {
  Batch values;  // one row per input row; class index as a 1-element row
};

struct ActionOutput {
  int index = 0;
};

struct GeneratedSample {
  Batch data;
};

struct Output {
  std::variant<NullOutput, PredictedTarget, ActionOutput, GeneratedSample>
      payload;

  bool is_null() const { return std::holds_alternative<NullOutput>(payload); }
  const PredictedTarget& predicted() const {
    return std::get<PredictedTarget>(payload);
  }
  const ActionOutput& action() const {
    return std::get<ActionOutput>(payload);
  }
  const GeneratedSample& generated() const {
    return std::get<GeneratedSample>(payload);
  }
};

Output make_null_output();
Output make_target_output(Batch values);
Output make_action_output(int index);
Output make_gen_output(Batch data);

// ---------------------------------------------------------------------------
// History
// ---------------------------------------------------------------------------

// Append-only sequence of (observation, output) pairs. Time zero holds
// (X_0, NullOutput); length = current_time - origin_time + 1.
class History {
 public:
  explicit History(long origin_time = 0) : origin_time_(origin_time) {}

  void append(Observation obs, Output out) {
    steps_.emplace_back(std::move(obs), std::move(out));
  }

  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }
  long origin_time() const { return origin_time_; }
  long current_time() const {
    return origin_time_ + static_cast<long>(steps_.size()) - 1;
  }

  const std::pair<Observation, Output>& back() const { return steps_.back(); }
  const std::pair<Observation, Output>& at_index(std::size_t i) const {
    return steps_[i];
  }
  const std::pair<Observation, Output>& at_time(long t) const {
    return steps_.at(static_cast<std::size_t>(t - origin_time_));
  }

 private:
  long origin_time_;
  std::vector<std::pair<Observation, Output>> steps_;
};

}  // namespace fm
