#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "fm/environments.hpp"
#include "fm/learners/dqn.hpp"
#include "fm/learners/flow.hpp"
#include "fm/learners/mlp.hpp"
#include "fm/meter.hpp"

namespace fm {

// ---------------------------------------------------------------------------
// Experiment configuration (one JSON document per experiment)
// ---------------------------------------------------------------------------

enum class Setting {
  kRegression,
  kClassification,
  kClassIncremental,
  kGenerative,
  kDqn,
};

std::string setting_name(Setting s);
Setting setting_from_name(const std::string& name);

struct ForgettingSettings {
  bool enabled = true;
  long k = 40;
  std::vector<long> k_list;  // measured ks; defaults to {k}
  std::size_t num_particles = 1000;
  std::string divergence = "auto";
  std::string mixture_policy = "mixture";
  double schedule_fraction = 0.05;  // measure every 5% of update steps
  std::string probe = "validation";  // validation | grid | states
  long grid_size = 20;
  std::size_t num_probe_states = 32;
  std::size_t probe_limit = 0;  // 0 = use every probe point
  std::size_t bootstrap_resamples = 100;
};

struct ExperimentConfig {
  Setting setting = Setting::kRegression;

  // environment
  std::size_t num_samples = 40;
  std::size_t num_val_samples = 100;
  double noise = 0.1;
  double input_lo = -4.0;
  double input_hi = 4.0;

  // learner
  std::size_t hidden_dim = 5;
  long num_integration_steps = 100;  // generative
  std::size_t gen_probe_samples = 256;
  std::size_t gen_rollout_batch = 256;

  OptimizerConfig opt;

  // training schedule (supervised/generative)
  long epochs = 30;
  std::size_t batch_size = 10;

  // RL
  DqnConfig dqn;
  long num_eval_steps = 1000;

  ForgettingSettings gamma;

  std::vector<uint64_t> seeds = {1};
  std::string out_dir = "out";
  std::size_t num_threads = 1;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  uint64_t hash() const;
};

// Table-default configurations per setting.
ExperimentConfig default_config(Setting setting);

// ---------------------------------------------------------------------------
// Run records
// ---------------------------------------------------------------------------

struct MetricPoint {
  long step = 0;
  std::string metric;
  double value = 0.0;
};

struct GammaPoint {
  long t = 0;
  long k = 0;
  double gamma = 0.0;
  double se = 0.0;
  bool infinite = false;
  bool flagged = false;
};

// Decision-grid panel for the two-moons visual comparison: class-1
// probability of the reference predictive vs the k-step particle mixture.
struct MoonsPanel {
  long t = 0;
  long k = 0;
  long grid = 0;
  std::vector<double> xs, ys;        // grid cell centers
  std::vector<double> ref_p1, mix_p1;
  Batch data_points;
  std::vector<int> data_labels;
};

struct RunRecord {
  std::string run_id;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  std::vector<MetricPoint> metrics;  // long-format rows, one per CSV line
  std::vector<GammaPoint> gammas;
  double efficiency = std::numeric_limits<double>::quiet_NaN();
  bool complete = false;
  std::optional<MoonsPanel> panel;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Inverse of the normalized area under the training loss curve: steps
// normalized to [0,1], losses by the initial loss, trapezoidal AUC.
double training_efficiency(const std::vector<std::pair<double, double>>& loss_curve);

RunRecord run_experiment(const ExperimentConfig& config, uint64_t seed);

struct SweepCell {
  double value = 0.0;
  uint64_t seed = 0;
  bool ok = false;
  std::string error;
  RunRecord record;
};

struct SweepResult {
  std::string axis;
  std::vector<double> values;
  std::vector<SweepCell> cells;
  // per-value aggregates across seeds
  std::vector<double> mean_gamma;  // mean over time of gamma at the primary k
  std::vector<double> std_gamma;
  std::vector<double> mean_efficiency;
  std::vector<double> std_efficiency;
};

// axis is a dotted path into the config JSON (e.g. "optimizer.momentum",
// "learner.hidden_dim"); each cell runs the base config with that field
// overridden. Failed cells are marked and the sweep continues.
SweepResult run_sweep(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<double>& values,
                      const std::vector<uint64_t>& seeds);

struct DqnReport {
  std::vector<RunRecord> records;
  std::vector<double> gamma_cv;            // per seed, coefficient of variation
  std::vector<double> final_eval_return;   // per seed
};

DqnReport run_dqn(const ExperimentConfig& config,
                  const std::vector<uint64_t>& seeds);

// ---------------------------------------------------------------------------
// Thought-experiment verdict suite
// ---------------------------------------------------------------------------

struct VerdictRow {
  int scenario = 0;
  std::string name;
  long k = 0;
  double gamma = 0.0;
  double threshold = 0.0;
  bool consistent = false;
  bool expected_consistent = false;
  bool pass = false;
};

struct VerdictSuiteOptions {
  std::vector<long> k_values = {1, 10, 40};
  std::size_t num_particles = 1000;
  std::size_t num_threads = 1;
  int calibration_seeds = 20;
};

std::vector<VerdictRow> run_verdict_suite(uint64_t seed,
                                          const VerdictSuiteOptions& options);

// ---------------------------------------------------------------------------
// Output emission
// ---------------------------------------------------------------------------

// Writes metrics.csv, summary.json and the SVG plots for a batch of runs.
void emit_outputs(const std::vector<RunRecord>& records,
                  const ExperimentConfig& config, const std::string& out_dir);

void emit_sweep_outputs(const SweepResult& sweep, const ExperimentConfig& base,
                        const std::string& out_dir);

void emit_verdict_outputs(const std::vector<VerdictRow>& rows,
                          const std::string& out_dir);

// Re-emits plots from a previously written metrics.csv.
void emit_plots_from_dir(const std::string& dir);

}  // namespace fm
