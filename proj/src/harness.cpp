#include "fm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fm {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& where,
                  const std::vector<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace

std::string setting_name(Setting s) {
  switch (s) {
    case Setting::kRegression: return "regression";
    case Setting::kClassification: return "classification";
    case Setting::kClassIncremental: return "class_incremental";
    case Setting::kGenerative: return "generative";
    case Setting::kDqn: return "dqn";
  }
  return "regression";
}

Setting setting_from_name(const std::string& name) {
  if (name == "regression") return Setting::kRegression;
  if (name == "classification") return Setting::kClassification;
  if (name == "class_incremental") return Setting::kClassIncremental;
  if (name == "generative") return Setting::kGenerative;
  if (name == "dqn") return Setting::kDqn;
  throw ConfigError("unknown setting: " + name);
}

json ExperimentConfig::to_json() const {
  json j;
  j["setting"] = setting_name(setting);
  j["environment"] = {{"num_samples", num_samples},
                      {"num_val_samples", num_val_samples},
                      {"noise", noise},
                      {"input_lo", input_lo},
                      {"input_hi", input_hi}};
  j["learner"] = {{"hidden_dim", hidden_dim},
                  {"num_integration_steps", num_integration_steps},
                  {"probe_samples", gen_probe_samples},
                  {"rollout_batch", gen_rollout_batch}};
  j["optimizer"] = {
      {"kind", opt.kind == OptimizerKind::kAdam ? "adam" : "sgd_momentum"},
      {"lr", opt.lr},
      {"momentum", opt.momentum}};
  j["training"] = {{"epochs", epochs}, {"batch_size", batch_size}};
  j["dqn"] = {{"lr", dqn.lr},
              {"gamma", dqn.discount},
              {"start_e", dqn.start_e},
              {"end_e", dqn.end_e},
              {"exploration_fraction", dqn.exploration_fraction},
              {"total_timesteps", dqn.total_timesteps},
              {"learning_starts", dqn.learning_starts},
              {"train_frequency", dqn.train_frequency},
              {"target_network_frequency", dqn.target_network_frequency},
              {"batch_size", dqn.batch_size},
              {"buffer_size", dqn.buffer_capacity},
              {"softmax_temperature", dqn.softmax_temperature},
              {"num_eval_steps", num_eval_steps}};
  j["forgetting"] = {{"enabled", gamma.enabled},
                     {"k", gamma.k},
                     {"k_list", gamma.k_list.empty() ? std::vector<long>{gamma.k}
                                                     : gamma.k_list},
                     {"num_particles", gamma.num_particles},
                     {"divergence", gamma.divergence},
                     {"mixture_policy", gamma.mixture_policy},
                     {"schedule_fraction", gamma.schedule_fraction},
                     {"probe", gamma.probe},
                     {"grid_size", gamma.grid_size},
                     {"num_probe_states", gamma.num_probe_states},
                     {"probe_limit", gamma.probe_limit},
                     {"bootstrap_resamples", gamma.bootstrap_resamples}};
  j["seeds"] = seeds;
  j["out_dir"] = out_dir;
  j["num_threads"] = num_threads;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  require_keys(j, "config",
               {"setting", "environment", "learner", "optimizer", "training",
                "dqn", "forgetting", "seeds", "out_dir", "num_threads"});
  if (!j.contains("setting")) throw ConfigError("config requires 'setting'");

  ExperimentConfig cfg;
  cfg.setting = setting_from_name(j.at("setting").get<std::string>());

  if (j.contains("environment")) {
    const auto& e = j.at("environment");
    require_keys(e, "environment",
                 {"num_samples", "num_val_samples", "noise", "input_lo",
                  "input_hi"});
    read_field(e, "num_samples", cfg.num_samples);
    read_field(e, "num_val_samples", cfg.num_val_samples);
    read_field(e, "noise", cfg.noise);
    read_field(e, "input_lo", cfg.input_lo);
    read_field(e, "input_hi", cfg.input_hi);
  }
  if (j.contains("learner")) {
    const auto& l = j.at("learner");
    require_keys(l, "learner",
                 {"hidden_dim", "num_integration_steps", "probe_samples",
                  "rollout_batch"});
    read_field(l, "hidden_dim", cfg.hidden_dim);
    read_field(l, "num_integration_steps", cfg.num_integration_steps);
    read_field(l, "probe_samples", cfg.gen_probe_samples);
    read_field(l, "rollout_batch", cfg.gen_rollout_batch);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    require_keys(o, "optimizer", {"kind", "lr", "momentum"});
    std::string kind = "adam";
    read_field(o, "kind", kind);
    if (kind == "adam")
      cfg.opt.kind = OptimizerKind::kAdam;
    else if (kind == "sgd_momentum")
      cfg.opt.kind = OptimizerKind::kSgdMomentum;
    else
      throw ConfigError("unknown optimizer kind: " + kind);
    read_field(o, "lr", cfg.opt.lr);
    read_field(o, "momentum", cfg.opt.momentum);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    require_keys(t, "training", {"epochs", "batch_size"});
    read_field(t, "epochs", cfg.epochs);
    read_field(t, "batch_size", cfg.batch_size);
  }
  if (j.contains("dqn")) {
    const auto& d = j.at("dqn");
    require_keys(d, "dqn",
                 {"lr", "gamma", "start_e", "end_e", "exploration_fraction",
                  "total_timesteps", "learning_starts", "train_frequency",
                  "target_network_frequency", "batch_size", "buffer_size",
                  "softmax_temperature", "num_eval_steps"});
    read_field(d, "lr", cfg.dqn.lr);
    read_field(d, "gamma", cfg.dqn.discount);
    read_field(d, "start_e", cfg.dqn.start_e);
    read_field(d, "end_e", cfg.dqn.end_e);
    read_field(d, "exploration_fraction", cfg.dqn.exploration_fraction);
    read_field(d, "total_timesteps", cfg.dqn.total_timesteps);
    read_field(d, "learning_starts", cfg.dqn.learning_starts);
    read_field(d, "train_frequency", cfg.dqn.train_frequency);
    read_field(d, "target_network_frequency", cfg.dqn.target_network_frequency);
    read_field(d, "batch_size", cfg.dqn.batch_size);
    read_field(d, "buffer_size", cfg.dqn.buffer_capacity);
    read_field(d, "softmax_temperature", cfg.dqn.softmax_temperature);
    read_field(d, "num_eval_steps", cfg.num_eval_steps);
  }
  if (j.contains("forgetting")) {
    const auto& f = j.at("forgetting");
    require_keys(f, "forgetting",
                 {"enabled", "k", "k_list", "num_particles", "divergence",
                  "mixture_policy", "schedule_fraction", "probe", "grid_size",
                  "num_probe_states", "probe_limit", "bootstrap_resamples"});
    read_field(f, "enabled", cfg.gamma.enabled);
    read_field(f, "k", cfg.gamma.k);
    read_field(f, "k_list", cfg.gamma.k_list);
    read_field(f, "num_particles", cfg.gamma.num_particles);
    read_field(f, "divergence", cfg.gamma.divergence);
    read_field(f, "mixture_policy", cfg.gamma.mixture_policy);
    read_field(f, "schedule_fraction", cfg.gamma.schedule_fraction);
    read_field(f, "probe", cfg.gamma.probe);
    read_field(f, "grid_size", cfg.gamma.grid_size);
    read_field(f, "num_probe_states", cfg.gamma.num_probe_states);
    read_field(f, "probe_limit", cfg.gamma.probe_limit);
    read_field(f, "bootstrap_resamples", cfg.gamma.bootstrap_resamples);
  }
  read_field(j, "seeds", cfg.seeds);
  read_field(j, "out_dir", cfg.out_dir);
  read_field(j, "num_threads", cfg.num_threads);

  // Range validation.
  if (cfg.seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (cfg.gamma.k < 1) throw ConfigError("forgetting.k must be >= 1");
  if (cfg.gamma.num_particles < 1)
    throw ConfigError("forgetting.num_particles must be >= 1");
  if (!(cfg.gamma.schedule_fraction > 0.0) || cfg.gamma.schedule_fraction > 1.0)
    throw ConfigError("forgetting.schedule_fraction must be in (0, 1]");
  if (cfg.gamma.k_list.empty()) cfg.gamma.k_list = {cfg.gamma.k};
  for (long k : cfg.gamma.k_list)
    if (k < 1) throw ConfigError("forgetting.k_list entries must be >= 1");
  if (!(cfg.opt.lr > 0.0)) throw ConfigError("optimizer.lr must be positive");
  if (cfg.opt.momentum < 0.0 || cfg.opt.momentum >= 1.0)
    throw ConfigError("optimizer.momentum must be in [0, 1)");
  if (cfg.num_samples < 1 || cfg.num_val_samples < 1)
    throw ConfigError("environment sample counts must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
  if (cfg.epochs < 1) throw ConfigError("training.epochs must be >= 1");
  if (cfg.gamma.probe != "validation" && cfg.gamma.probe != "grid" &&
      cfg.gamma.probe != "states")
    throw ConfigError("forgetting.probe must be validation|grid|states");
  divergence_spec_from_name(cfg.gamma.divergence);
  if (cfg.gamma.mixture_policy != "mixture" &&
      cfg.gamma.mixture_policy != "mean_per_particle")
    throw ConfigError("forgetting.mixture_policy must be mixture|mean_per_particle");
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  return from_json(j);
}

uint64_t ExperimentConfig::hash() const {
  return fnv1a(to_json().dump());
}

ExperimentConfig default_config(Setting setting) {
  ExperimentConfig cfg;
  cfg.setting = setting;
  switch (setting) {
    case Setting::kRegression:
      cfg.num_samples = 40;
      cfg.num_val_samples = 100;
      cfg.noise = 0.1;
      cfg.hidden_dim = 5;
      cfg.epochs = 30;
      cfg.batch_size = 10;
      cfg.opt.kind = OptimizerKind::kAdam;
      cfg.opt.lr = 0.1;
      break;
    case Setting::kClassification:
      cfg.num_samples = 100;
      cfg.num_val_samples = 100;
      cfg.noise = 0.1;
      cfg.hidden_dim = 10;
      cfg.epochs = 30;
      cfg.batch_size = 25;
      cfg.opt.kind = OptimizerKind::kAdam;
      cfg.opt.lr = 0.1;
      break;
    case Setting::kClassIncremental:
      cfg.num_samples = 100;  // per task
      cfg.num_val_samples = 100;
      cfg.noise = 0.1;
      cfg.hidden_dim = 10;
      cfg.epochs = 30;
      cfg.batch_size = 25;
      cfg.opt.kind = OptimizerKind::kAdam;
      cfg.opt.lr = 0.1;
      break;
    case Setting::kGenerative:
      cfg.num_samples = 10000;
      cfg.num_val_samples = 1000;
      cfg.noise = 0.05;
      cfg.hidden_dim = 64;
      cfg.num_integration_steps = 100;
      cfg.epochs = 250;
      cfg.batch_size = 2500;
      cfg.opt.kind = OptimizerKind::kAdam;
      cfg.opt.lr = 0.01;
      cfg.gamma.num_particles = 50;  // desk-scale default for sample-set probes
      cfg.gamma.divergence = "mmd_rbf";
      break;
    case Setting::kDqn:
      cfg.hidden_dim = 5;
      cfg.opt.kind = OptimizerKind::kAdam;
      cfg.opt.lr = 2.5e-4;
      cfg.gamma.probe = "states";
      cfg.gamma.num_particles = 200;  // desk-scale default
      break;
  }
  return cfg;
}

double training_efficiency(
    const std::vector<std::pair<double, double>>& loss_curve) {
  if (loss_curve.size() < 2)
    throw std::invalid_argument("training_efficiency: need >= 2 points");
  double l0 = loss_curve.front().second;
  double total = 0.0;
  for (const auto& [s, l] : loss_curve) {
    if (l < 0.0)
      throw std::invalid_argument("training_efficiency: negative loss");
    total += l;
  }
  if (total == 0.0)
    throw std::invalid_argument("training_efficiency: all losses zero");
  if (!(l0 > 0.0))
    throw std::invalid_argument("training_efficiency: initial loss must be positive");

  double x0 = loss_curve.front().first;
  double x1 = loss_curve.back().first;
  double span = x1 - x0;
  if (!(span > 0.0))
    throw std::invalid_argument("training_efficiency: steps must increase");
  double auc = 0.0;
  for (std::size_t i = 1; i < loss_curve.size(); ++i) {
    double w = (loss_curve[i].first - loss_curve[i - 1].first) / span;
    auc += 0.5 * (loss_curve[i].second + loss_curve[i - 1].second) / l0 * w;
  }
  if (auc == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / auc;
}

// ---------------------------------------------------------------------------
// Experiment assembly
// ---------------------------------------------------------------------------

namespace {

struct Built {
  std::unique_ptr<EnvironmentRole> env;
  std::unique_ptr<LearnerRole> learner;
  ValidationSet validation;  // supervised settings
  Batch gen_validation;      // generative setting
  long total_steps = 0;
};

ValidationSet moons_validation(std::size_t n, double noise, Rng& rng) {
  ValidationSet val;
  for (auto& [p, label] : gen_two_moons(n, noise, rng))
    val.emplace_back(p, Vec{static_cast<double>(label)});
  return val;
}

Built build_experiment(const ExperimentConfig& cfg, uint64_t seed) {
  Built built;
  Rng data_rng = make_stream(seed, "dataset");
  switch (cfg.setting) {
    case Setting::kRegression: {
      Dataset train = make_sinusoid_dataset(cfg.num_samples, cfg.input_lo,
                                            cfg.input_hi, cfg.noise, data_rng);
      Dataset vd = make_sinusoid_dataset(cfg.num_val_samples, cfg.input_lo,
                                         cfg.input_hi, cfg.noise, data_rng);
      for (std::size_t i = 0; i < vd.inputs.size(); ++i)
        built.validation.emplace_back(vd.inputs[i], vd.targets[i]);
      SupervisedDatasetEnv::Config ecfg;
      ecfg.batch_size = cfg.batch_size;
      ecfg.epochs = cfg.epochs;
      ecfg.shuffle_seed = seed;
      auto env = std::make_unique<SupervisedDatasetEnv>(
          std::move(train), built.validation, ecfg);
      built.total_steps = env->total_steps();
      built.env = std::move(env);
      MlpLearnerConfig lcfg;
      lcfg.shape = MlpShape{1, cfg.hidden_dim, 1};
      lcfg.loss = LossKind::kSquaredError;
      lcfg.opt = cfg.opt;
      built.learner = std::make_unique<MlpLearner>(lcfg);
      break;
    }
    case Setting::kClassification:
    case Setting::kClassIncremental: {
      bool cil = cfg.setting == Setting::kClassIncremental;
      std::size_t n = cil ? cfg.num_samples * 2 : cfg.num_samples;
      Dataset train = two_moons_dataset(n, cfg.noise, data_rng);
      if (!cil) train.task.clear();
      built.validation =
          moons_validation(cfg.num_val_samples, cfg.noise, data_rng);
      SupervisedDatasetEnv::Config ecfg;
      ecfg.batch_size = cfg.batch_size;
      ecfg.epochs = cfg.epochs;
      ecfg.class_incremental = cil;
      ecfg.shuffle_seed = seed;
      auto env = std::make_unique<SupervisedDatasetEnv>(
          std::move(train), built.validation, ecfg);
      built.total_steps = env->total_steps();
      built.env = std::move(env);
      MlpLearnerConfig lcfg;
      lcfg.shape = MlpShape{2, cfg.hidden_dim, 2};
      lcfg.loss = LossKind::kCrossEntropy;
      lcfg.opt = cfg.opt;
      built.learner = std::make_unique<MlpLearner>(lcfg);
      break;
    }
    case Setting::kGenerative: {
      Batch train, val;
      for (auto& [p, l] : gen_two_moons(cfg.num_samples, cfg.noise, data_rng))
        train.push_back(p);
      for (auto& [p, l] :
           gen_two_moons(cfg.num_val_samples, cfg.noise, data_rng))
        val.push_back(p);
      built.gen_validation = val;
      GenerativeDataEnv::Config ecfg;
      ecfg.batch_size = cfg.batch_size;
      ecfg.epochs = cfg.epochs;
      ecfg.shuffle_seed = seed;
      auto env = std::make_unique<GenerativeDataEnv>(std::move(train),
                                                     std::move(val), ecfg);
      built.total_steps = env->total_steps();
      built.env = std::move(env);
      FlowConfig fcfg;
      fcfg.data_dim = 2;
      fcfg.hidden = cfg.hidden_dim;
      fcfg.integration_steps = cfg.num_integration_steps;
      fcfg.lr = cfg.opt.lr;
      fcfg.probe_samples = cfg.gen_probe_samples;
      fcfg.rollout_batch = cfg.gen_rollout_batch;
      built.learner = std::make_unique<FlowGenLearner>(fcfg);
      break;
    }
    case Setting::kDqn: {
      built.env = std::make_unique<CartpoleEnv>();
      DqnConfig dcfg = cfg.dqn;
      dcfg.hidden = cfg.hidden_dim;
      built.total_steps = dcfg.total_timesteps;
      built.learner = std::make_unique<DqnLearner>(dcfg);
      break;
    }
  }
  return built;
}

EvalProbe resolve_probes(const ExperimentConfig& cfg, const Built& built,
                         uint64_t seed) {
  EvalProbe probes;
  if (cfg.setting == Setting::kGenerative) {
    probes.points.push_back(make_gen_obs({}));
    return probes;
  }
  if (cfg.setting == Setting::kDqn) {
    // Fixed probe states from a random-policy characterization rollout.
    const auto& env = dynamic_cast<const CartpoleEnv&>(*built.env);
    Rng rng = make_stream(seed, "probe-states");
    Vec s = env.sample_initial_state(rng);
    std::size_t collected = 0;
    while (collected < cfg.gamma.num_probe_states) {
      auto [next, reward, done] =
          env.dynamics(s, static_cast<int>(rng.uniform_int(2)));
      s = done ? env.sample_initial_state(rng) : next;
      // Thin the stream to decorrelate probe states.
      if (rng.uniform01() < 0.25) {
        probes.points.push_back(make_rl_obs(s, 0.0, false));
        ++collected;
      }
    }
    return probes;
  }
  if (cfg.gamma.probe == "grid") {
    long g = cfg.gamma.grid_size;
    for (long iy = 0; iy < g; ++iy)
      for (long ix = 0; ix < g; ++ix) {
        double x = -1.8 + (2.8 - (-1.8)) * (ix + 0.5) / g;
        double y = -1.55 + (1.75 - (-1.55)) * (iy + 0.5) / g;
        probes.points.push_back(make_probe({x, y}));
      }
    return probes;
  }
  std::size_t limit = cfg.gamma.probe_limit == 0
                          ? built.validation.size()
                          : std::min(cfg.gamma.probe_limit,
                                     built.validation.size());
  for (std::size_t i = 0; i < limit; ++i)
    probes.points.push_back(make_probe(built.validation[i].first));
  return probes;
}

double validation_metric(const ExperimentConfig& cfg, const Built& built,
                         const LearnerRole& learner, const LearnerState& state,
                         uint64_t seed, long t) {
  Rng rng = make_stream(seed, "val-metric", static_cast<uint64_t>(t));
  switch (cfg.setting) {
    case Setting::kRegression: {
      double mse = 0.0;
      for (const auto& [x, y] : built.validation) {
        Vec pred = mean_of(learner.predict(state, make_probe(x), rng));
        double r = pred[0] - y[0];
        mse += r * r;
      }
      return mse / static_cast<double>(built.validation.size());
    }
    case Setting::kClassification:
    case Setting::kClassIncremental: {
      double correct = 0.0;
      for (const auto& [x, y] : built.validation) {
        auto probs =
            std::get<Categorical>(learner.predict(state, make_probe(x), rng))
                .probs;
        std::size_t argmax = 0;
        for (std::size_t c = 1; c < probs.size(); ++c)
          if (probs[c] > probs[argmax]) argmax = c;
        if (argmax == static_cast<std::size_t>(y[0])) correct += 1.0;
      }
      return correct / static_cast<double>(built.validation.size());
    }
    case Setting::kGenerative: {
      const auto& flow = dynamic_cast<const FlowGenLearner&>(learner);
      auto samples = flow_generate(state_as<FlowGenState>(state), 256,
                                   flow.config().integration_steps, rng);
      double bw = median_heuristic_bandwidth(built.gen_validation);
      return mmd2_rbf(samples, built.gen_validation, bw);
    }
    case Setting::kDqn: {
      // Greedy-policy evaluation return, averaged over episodes within
      // the evaluation step budget.
      const auto& env = dynamic_cast<const CartpoleEnv&>(*built.env);
      const auto& dqn = dynamic_cast<const DqnLearner&>(learner);
      const auto& ds = state_as<DqnState>(state);
      long steps_left = cfg.num_eval_steps;
      double total_return = 0.0;
      long episodes = 0;
      while (steps_left > 0) {
        Vec s = env.sample_initial_state(rng);
        double ep_return = 0.0;
        for (long ep_steps = 0; ep_steps < env.params().max_episode_steps;
             ++ep_steps) {
          Vec q = dqn.q_values(ds, s);
          int a = q[0] >= q[1] ? 0 : 1;
          auto [next, reward, done] = env.dynamics(s, a);
          ep_return += reward;
          s = next;
          --steps_left;
          if (done || steps_left <= 0) break;
        }
        total_return += ep_return;
        ++episodes;
      }
      return total_return / static_cast<double>(episodes);
    }
  }
  return 0.0;
}

std::string metric_name(const char* base, long k) {
  return std::string(base) + "_k" + std::to_string(k);
}

}  // namespace

RunRecord run_experiment(const ExperimentConfig& cfg, uint64_t seed) {
  RunRecord record;
  record.seed = seed;
  record.config_hash = cfg.hash();
  record.run_id = setting_name(cfg.setting) + "-" + std::to_string(seed);

  Built built = build_experiment(cfg, seed);
  const EnvironmentRole& env = *built.env;
  const LearnerRole& learner = *built.learner;

  Rng init_rng = make_stream(seed, "init");
  Rng act_rng = make_stream(seed, "act");
  Rng env_rng = make_stream(seed, "env");
  Rng update_rng = make_stream(seed, "update");
  uint64_t gamma_root = hash_combine(seed, fnv1a("gamma-root"));

  EvalProbe probes = resolve_probes(cfg, built, seed);

  // Measurement schedule in update steps.
  long total_updates = built.total_steps;
  if (cfg.setting == Setting::kDqn)
    total_updates = std::max<long>(
        (cfg.dqn.total_timesteps - cfg.dqn.learning_starts) /
            cfg.dqn.train_frequency,
        1);
  long stride = std::max<long>(
      1, std::lround(cfg.gamma.schedule_fraction *
                     static_cast<double>(total_updates)));
  std::vector<long> schedule;
  for (long u = stride; u <= total_updates; u += stride) schedule.push_back(u);

  History history;
  std::unique_ptr<LearnerState> state = learner.initial_state(init_rng);
  Observation x0 = env.initial_observation(env_rng);
  state = learner.observe_bootstrap(*state, x0);
  history.append(std::move(x0), make_null_output());

  std::vector<std::pair<double, double>> loss_curve;
  std::size_t next_sched = 0;

  try {
    for (long t = 1; t <= built.total_steps; ++t) {
      StepResult step = step_interaction(env, learner, *state, history,
                                         act_rng, env_rng, update_rng);
      state = std::move(step.state);

      double loss = learner.train_loss(*state);
      if (std::isfinite(loss)) {
        record.metrics.push_back({t, "train_loss", loss});
        loss_curve.emplace_back(static_cast<double>(t), loss);
      }
      if (step.obs.is_rl())
        record.metrics.push_back({t, "reward", step.obs.rl().reward});

      long uc = learner.update_count(*state);
      if (uc < 0) uc = t;
      if (cfg.gamma.enabled && next_sched < schedule.size() &&
          uc >= schedule[next_sched]) {
        ++next_sched;
        auto snapshot = state->clone();
        if (cfg.setting == Setting::kRegression)
          state_as<MlpState>(*snapshot).predictive_variance =
              fit_residual_variance(*snapshot, learner, built.validation);

        ForgettingConfig fc;
        fc.k = cfg.gamma.k;
        fc.num_particles = cfg.gamma.num_particles;
        fc.divergence = divergence_spec_from_name(cfg.gamma.divergence);
        fc.probes = probes;
        fc.mixture_policy = cfg.gamma.mixture_policy == "mixture"
                                ? MixturePolicy::kMixtureDivergence
                                : MixturePolicy::kMeanPerParticleDivergence;
        fc.rng_root = gamma_root;
        fc.time_index = uc;
        fc.bootstrap_resamples = cfg.gamma.bootstrap_resamples;
        fc.num_threads = cfg.num_threads;

        auto estimates = sweep_k(learner, *snapshot, history, env, fc,
                                 cfg.gamma.k_list);
        bool flagged = false;
        if (cfg.setting == Setting::kDqn) {
          const auto& ds = state_as<DqnState>(*state);
          long window = cfg.gamma.k * cfg.dqn.train_frequency;
          long since = ds.global_step - ds.last_sync_step;
          long until = cfg.dqn.target_network_frequency -
                       (since % cfg.dqn.target_network_frequency);
          flagged = since < window || until < window;
        }
        for (const auto& est : estimates) {
          GammaPoint gp;
          gp.t = t;
          gp.k = est.k;
          gp.gamma = est.gamma;
          gp.se = est.std_error;
          gp.infinite = est.infinite;
          gp.flagged = flagged;
          record.gammas.push_back(gp);
          record.metrics.push_back({t, metric_name("gamma", est.k), est.gamma});
          record.metrics.push_back(
              {t, metric_name("gamma_se", est.k), est.std_error});
          record.metrics.push_back(
              {t, metric_name("gamma_inf", est.k), est.infinite ? 1.0 : 0.0});
          if (cfg.setting == Setting::kDqn)
            record.metrics.push_back(
                {t, metric_name("gamma_flag", est.k), flagged ? 1.0 : 0.0});
        }
        record.metrics.push_back(
            {t, "val_metric",
             validation_metric(cfg, built, learner, *state, seed, t)});

        // Decision-grid panel at the final measurement of two-moons runs.
        bool last_measurement = next_sched == schedule.size();
        bool moons_setting = cfg.setting == Setting::kClassification ||
                             cfg.setting == Setting::kClassIncremental;
        if (last_measurement && moons_setting) {
          ExperimentConfig grid_cfg = cfg;
          grid_cfg.gamma.probe = "grid";
          EvalProbe grid = resolve_probes(grid_cfg, built, seed);
          ForgettingConfig pc = fc;
          pc.probes = grid;
          pc.bootstrap_resamples = 0;
          auto [ref, mix] =
              reference_and_mixture(learner, *snapshot, history, env, pc);
          MoonsPanel panel;
          panel.t = t;
          panel.k = cfg.gamma.k;
          panel.grid = cfg.gamma.grid_size;
          for (std::size_t i = 0; i < grid.points.size(); ++i) {
            const auto& p = grid.points[i].supervised().inputs[0];
            panel.xs.push_back(p[0]);
            panel.ys.push_back(p[1]);
            panel.ref_p1.push_back(std::get<Categorical>(ref[i]).probs[1]);
            panel.mix_p1.push_back(std::get<Categorical>(mix[i]).probs[1]);
          }
          for (const auto& [x, y] : built.validation) {
            panel.data_points.push_back(x);
            panel.data_labels.push_back(static_cast<int>(y[0]));
          }
          record.panel = std::move(panel);
        }
      }
    }
    if (loss_curve.size() >= 2) {
      double l0 = loss_curve.front().second;
      if (l0 > 0.0) record.efficiency = training_efficiency(loss_curve);
    }
    record.metrics.push_back(
        {built.total_steps, "efficiency", record.efficiency});
    record.complete = true;
  } catch (const std::exception& e) {
    record.metrics.push_back(
        {static_cast<long>(history.size()), "aborted", 1.0});
    record.complete = false;
  }
  return record;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

namespace {

double mean_gamma_at_primary_k(const RunRecord& record, long k) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& g : record.gammas) {
    if (g.k != k || g.infinite) continue;
    total += g.gamma;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN()
                : total / static_cast<double>(n);
}

void set_json_path(nlohmann::json& j, const std::string& path, double value) {
  nlohmann::json* node = &j;
  std::size_t start = 0;
  std::vector<std::string> parts;
  while (true) {
    std::size_t dot = path.find('.', start);
    parts.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]))
      throw ConfigError("sweep axis not found: " + path);
    node = &(*node)[parts[i]];
  }
  const std::string& leaf = parts.back();
  if (!node->contains(leaf))
    throw ConfigError("sweep axis not found: " + path);
  nlohmann::json& field = (*node)[leaf];
  if (field.is_number_integer() || field.is_number_unsigned())
    field = static_cast<long>(std::llround(value));
  else if (field.is_number_float())
    field = value;
  else
    throw ConfigError("sweep axis is not numeric: " + path);
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& base, const std::string& axis,
                      const std::vector<double>& values,
                      const std::vector<uint64_t>& seeds) {
  if (values.empty()) throw ConfigError("sweep: values must be non-empty");
  if (seeds.empty()) throw ConfigError("sweep: seeds must be non-empty");

  SweepResult result;
  result.axis = axis;
  result.values = values;

  for (double value : values) {
    nlohmann::json j = base.to_json();
    set_json_path(j, axis, value);
    std::vector<double> cell_gammas, cell_effs;
    for (uint64_t seed : seeds) {
      SweepCell cell;
      cell.value = value;
      cell.seed = seed;
      try {
        ExperimentConfig cfg = ExperimentConfig::from_json(j);
        cell.record = run_experiment(cfg, seed);
        cell.ok = cell.record.complete;
        if (!cell.ok) cell.error = "run aborted";
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
      if (cell.ok) {
        cell_gammas.push_back(mean_gamma_at_primary_k(cell.record, base.gamma.k));
        cell_effs.push_back(cell.record.efficiency);
      }
      result.cells.push_back(std::move(cell));
    }
    auto mean_sd = [](const std::vector<double>& xs) {
      if (xs.empty())
        return std::pair<double, double>{
            std::numeric_limits<double>::quiet_NaN(),
            std::numeric_limits<double>::quiet_NaN()};
      double mean = 0.0;
      for (double x : xs) mean += x;
      mean /= static_cast<double>(xs.size());
      double var = 0.0;
      for (double x : xs) var += (x - mean) * (x - mean);
      var /= static_cast<double>(xs.size());
      return std::pair<double, double>{mean, std::sqrt(var)};
    };
    auto [gm, gs] = mean_sd(cell_gammas);
    auto [em, es] = mean_sd(cell_effs);
    result.mean_gamma.push_back(gm);
    result.std_gamma.push_back(gs);
    result.mean_efficiency.push_back(em);
    result.std_efficiency.push_back(es);
  }
  return result;
}

DqnReport run_dqn(const ExperimentConfig& cfg,
                  const std::vector<uint64_t>& seeds) {
  if (cfg.setting != Setting::kDqn)
    throw ConfigError("run_dqn requires a dqn config");
  DqnReport report;
  for (uint64_t seed : seeds) {
    RunRecord record = run_experiment(cfg, seed);
    // Instability: coefficient of variation of the finite gamma trace.
    std::vector<double> trace;
    for (const auto& g : record.gammas)
      if (g.k == cfg.gamma.k && !g.infinite) trace.push_back(g.gamma);
    double cv = std::numeric_limits<double>::quiet_NaN();
    if (trace.size() >= 2) {
      double mean = 0.0;
      for (double g : trace) mean += g;
      mean /= static_cast<double>(trace.size());
      double var = 0.0;
      for (double g : trace) var += (g - mean) * (g - mean);
      var /= static_cast<double>(trace.size());
      if (mean > 0.0) cv = std::sqrt(var) / mean;
    }
    report.gamma_cv.push_back(cv);
    double final_return = std::numeric_limits<double>::quiet_NaN();
    for (const auto& m : record.metrics)
      if (m.metric == "val_metric") final_return = m.value;
    report.final_eval_return.push_back(final_return);
    report.records.push_back(std::move(record));
  }
  return report;
}

}  // namespace fm
