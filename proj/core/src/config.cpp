#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nimc/harness.hpp"
#include "nimc/hash.hpp"

namespace nimc {

using nlohmann::json;

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; })) {
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
  }
}

template <class T>
void read(const json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class E, class Parse>
void read_enum_list(const json& j, const std::string& where, const char* key, std::vector<E>& out,
                    Parse parse) {
  std::vector<std::string> names;
  if (!j.contains(key)) return;
  read(j, where, key, names);
  out.clear();
  for (const auto& n : names) {
    try {
      out.push_back(parse(n));
    } catch (const std::exception& e) {
      throw ConfigError(where + "." + key + ": " + e.what());
    }
  }
}

template <class E, class Parse>
void read_enum(const json& j, const std::string& where, const char* key, E& out, Parse parse) {
  if (!j.contains(key)) return;
  std::string name;
  read(j, where, key, name);
  try {
    out = parse(name);
  } catch (const std::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class E>
std::vector<std::string> names_of(const std::vector<E>& v) {
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(to_string(e));
  return out;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::neural_imc: return "neural_imc";
    case Method::ppo_plain: return "ppo_plain";
    case Method::l1_pid: return "l1_pid";
    case Method::l1_mppi: return "l1_mppi";
    case Method::neural_imc_full_model: return "neural_imc_full_model";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::neural_imc, Method::ppo_plain, Method::l1_pid, Method::l1_mppi,
                   Method::neural_imc_full_model}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown method '" + s + "'");
}

bool is_learned(Method m) { return m != Method::l1_pid && m != Method::l1_mppi; }

void ExperimentConfig::validate() const {
  try {
    ppo.validate();
    network.validate();
    env.validate();
    mppi.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds: duplicates");
  }
  if (eval.n_trials < 1 || eval.mppi_trials < 1) throw ConfigError("eval: trial counts must be >= 1");
  if (methods.empty() || trajectories.empty() || presets.empty()) {
    throw ConfigError("methods, trajectories and presets must be non-empty");
  }
  for (double s : noise_sigmas) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("noise_ablation.sigmas must be finite and >= 0");
  }
  for (int s : short_lengths) {
    if (s < 0) throw ConfigError("history_ablation.short_lengths must be >= 0");
  }
  for (int l : long_lengths) {
    if (l < 7) throw ConfigError("history_ablation.long_lengths must be >= 7");
  }
  for (const auto& v : train_variants) {
    try {
      Variant::parse(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("train_variants: ") + e.what());
    }
  }
  if (trace.trial < 0) throw ConfigError("trace.trial must be >= 0");
  if (checkpoint_dir.empty()) throw ConfigError("checkpoint_dir must be non-empty");
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config",
             {"schema_version", "name", "seeds", "ppo", "network", "env", "eval", "mppi", "pid",
              "methods", "trajectories", "presets", "noise_ablation", "history_ablation",
              "checkpoint_dir", "train_variants", "train_missing", "trace"});
  if (!j.contains("schema_version")) throw ConfigError("config: schema_version is required");
  int version = 0;
  read(j, "config", "schema_version", version);
  if (version != ExperimentConfig::kSchemaVersion) {
    throw ConfigError("config: unsupported schema_version " + std::to_string(version));
  }

  ExperimentConfig c;
  read(j, "config", "name", c.name);
  read(j, "config", "seeds", c.seeds);
  read(j, "config", "checkpoint_dir", c.checkpoint_dir);
  read(j, "config", "train_variants", c.train_variants);
  read(j, "config", "train_missing", c.train_missing);
  read_enum_list(j, "config", "methods", c.methods, method_from_string);
  read_enum_list(j, "config", "trajectories", c.trajectories, trajectory_kind_from_string);
  read_enum_list(j, "config", "presets", c.presets, preset_from_string);

  if (j.contains("ppo")) {
    const auto& p = j["ppo"];
    check_keys(p, "ppo", {"n_envs", "n_steps", "epochs", "minibatches", "clip", "gamma",
                          "gae_lambda", "learning_rate", "value_coef", "entropy_coef",
                          "max_grad_norm", "total_steps", "n_threads"});
    read(p, "ppo", "n_envs", c.ppo.n_envs);
    read(p, "ppo", "n_steps", c.ppo.n_steps);
    read(p, "ppo", "epochs", c.ppo.epochs);
    read(p, "ppo", "minibatches", c.ppo.minibatches);
    read(p, "ppo", "clip", c.ppo.clip);
    read(p, "ppo", "gamma", c.ppo.gamma);
    read(p, "ppo", "gae_lambda", c.ppo.gae_lambda);
    read(p, "ppo", "learning_rate", c.ppo.learning_rate);
    read(p, "ppo", "value_coef", c.ppo.value_coef);
    read(p, "ppo", "entropy_coef", c.ppo.entropy_coef);
    read(p, "ppo", "max_grad_norm", c.ppo.max_grad_norm);
    read(p, "ppo", "total_steps", c.ppo.total_steps);
    read(p, "ppo", "n_threads", c.ppo.n_threads);
  }
  if (j.contains("network")) {
    const auto& n = j["network"];
    check_keys(n, "network", {"hidden", "layers", "tcn_channels", "latent", "init_log_std"});
    read(n, "network", "hidden", c.network.hidden);
    read(n, "network", "layers", c.network.layers);
    read(n, "network", "tcn_channels", c.network.tcn_channels);
    read(n, "network", "latent", c.network.latent);
    read(n, "network", "init_log_std", c.network.init_log_std);
  }
  if (j.contains("env")) {
    const auto& e = j["env"];
    check_keys(e, "env", {"horizon", "waypoint_dt", "max_episode_steps", "disturbance_prob",
                          "disturbance_bound", "disturbance_step_std", "control_dt", "substeps",
                          "crash_max_position_error", "crash_max_tilt_deg"});
    read(e, "env", "horizon", c.env.obs.horizon);
    read(e, "env", "waypoint_dt", c.env.obs.waypoint_dt);
    read(e, "env", "max_episode_steps", c.env.max_episode_steps);
    read(e, "env", "disturbance_prob", c.env.disturbance_prob);
    read(e, "env", "disturbance_bound", c.env.disturbance.bound);
    read(e, "env", "disturbance_step_std", c.env.disturbance.step_std);
    read(e, "env", "control_dt", c.env.sim.control_dt);
    read(e, "env", "substeps", c.env.sim.substeps);
    read(e, "env", "crash_max_position_error", c.env.crash.max_position_error);
    double tilt_deg = c.env.crash.max_tilt * kRadToDeg;
    read(e, "env", "crash_max_tilt_deg", tilt_deg);
    c.env.crash.max_tilt = tilt_deg / kRadToDeg;
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_keys(e, "eval", {"n_trials", "mppi_trials"});
    read(e, "eval", "n_trials", c.eval.n_trials);
    read(e, "eval", "mppi_trials", c.eval.mppi_trials);
  }
  if (j.contains("mppi")) {
    const auto& m = j["mppi"];
    check_keys(m, "mppi", {"n_samples", "horizon", "temperature", "noise_thrust", "noise_rate",
                           "w_position", "w_velocity", "w_action_rate", "w_bodyrate"});
    read(m, "mppi", "n_samples", c.mppi.n_samples);
    read(m, "mppi", "horizon", c.mppi.horizon);
    read(m, "mppi", "temperature", c.mppi.temperature);
    read(m, "mppi", "noise_thrust", c.mppi.noise_thrust);
    read(m, "mppi", "noise_rate", c.mppi.noise_rate);
    read(m, "mppi", "w_position", c.mppi.w_position);
    read(m, "mppi", "w_velocity", c.mppi.w_velocity);
    read(m, "mppi", "w_action_rate", c.mppi.w_action_rate);
    read(m, "mppi", "w_bodyrate", c.mppi.w_bodyrate);
  }
  if (j.contains("pid")) {
    const auto& p = j["pid"];
    check_keys(p, "pid", {"kp_pos", "kd_pos", "k_att"});
    read(p, "pid", "kp_pos", c.pid.kp_pos);
    read(p, "pid", "kd_pos", c.pid.kd_pos);
    read(p, "pid", "k_att", c.pid.k_att);
  }
  if (j.contains("noise_ablation")) {
    const auto& n = j["noise_ablation"];
    check_keys(n, "noise_ablation", {"sigmas", "targets"});
    read(n, "noise_ablation", "sigmas", c.noise_sigmas);
    read_enum_list(n, "noise_ablation", "targets", c.noise_targets, noise_target_from_string);
  }
  if (j.contains("history_ablation")) {
    const auto& h = j["history_ablation"];
    check_keys(h, "history_ablation", {"short_lengths", "long_lengths"});
    read(h, "history_ablation", "short_lengths", c.short_lengths);
    read(h, "history_ablation", "long_lengths", c.long_lengths);
  }
  if (j.contains("trace")) {
    const auto& t = j["trace"];
    check_keys(t, "trace", {"method", "trajectory", "preset", "disturbed", "trial"});
    read_enum(t, "trace", "method", c.trace.method, method_from_string);
    read_enum(t, "trace", "trajectory", c.trace.trajectory, trajectory_kind_from_string);
    read_enum(t, "trace", "preset", c.trace.preset, preset_from_string);
    read(t, "trace", "disturbed", c.trace.disturbed);
    read(t, "trace", "trial", c.trace.trial);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = ExperimentConfig::kSchemaVersion;
  j["name"] = c.name;
  j["seeds"] = c.seeds;
  j["ppo"] = {{"n_envs", c.ppo.n_envs},
              {"n_steps", c.ppo.n_steps},
              {"epochs", c.ppo.epochs},
              {"minibatches", c.ppo.minibatches},
              {"clip", c.ppo.clip},
              {"gamma", c.ppo.gamma},
              {"gae_lambda", c.ppo.gae_lambda},
              {"learning_rate", c.ppo.learning_rate},
              {"value_coef", c.ppo.value_coef},
              {"entropy_coef", c.ppo.entropy_coef},
              {"max_grad_norm", c.ppo.max_grad_norm},
              {"total_steps", c.ppo.total_steps},
              {"n_threads", c.ppo.n_threads}};
  j["network"] = {{"hidden", c.network.hidden},
                  {"layers", c.network.layers},
                  {"tcn_channels", c.network.tcn_channels},
                  {"latent", c.network.latent},
                  {"init_log_std", c.network.init_log_std}};
  j["env"] = {{"horizon", c.env.obs.horizon},
              {"waypoint_dt", c.env.obs.waypoint_dt},
              {"max_episode_steps", c.env.max_episode_steps},
              {"disturbance_prob", c.env.disturbance_prob},
              {"disturbance_bound", c.env.disturbance.bound},
              {"disturbance_step_std", c.env.disturbance.step_std},
              {"control_dt", c.env.sim.control_dt},
              {"substeps", c.env.sim.substeps},
              {"crash_max_position_error", c.env.crash.max_position_error},
              {"crash_max_tilt_deg", c.env.crash.max_tilt * kRadToDeg}};
  j["eval"] = {{"n_trials", c.eval.n_trials}, {"mppi_trials", c.eval.mppi_trials}};
  j["mppi"] = {{"n_samples", c.mppi.n_samples},
               {"horizon", c.mppi.horizon},
               {"temperature", c.mppi.temperature},
               {"noise_thrust", c.mppi.noise_thrust},
               {"noise_rate", c.mppi.noise_rate},
               {"w_position", c.mppi.w_position},
               {"w_velocity", c.mppi.w_velocity},
               {"w_action_rate", c.mppi.w_action_rate},
               {"w_bodyrate", c.mppi.w_bodyrate}};
  j["pid"] = {{"kp_pos", c.pid.kp_pos}, {"kd_pos", c.pid.kd_pos}, {"k_att", c.pid.k_att}};
  j["methods"] = names_of(c.methods);
  j["trajectories"] = names_of(c.trajectories);
  j["presets"] = names_of(c.presets);
  j["noise_ablation"] = {{"sigmas", c.noise_sigmas}, {"targets", names_of(c.noise_targets)}};
  j["history_ablation"] = {{"short_lengths", c.short_lengths}, {"long_lengths", c.long_lengths}};
  j["checkpoint_dir"] = c.checkpoint_dir;
  j["train_variants"] = c.train_variants;
  j["train_missing"] = c.train_missing;
  j["trace"] = {{"method", to_string(c.trace.method)},
                {"trajectory", to_string(c.trace.trajectory)},
                {"preset", to_string(c.trace.preset)},
                {"disturbed", c.trace.disturbed},
                {"trial", c.trace.trial}};
  return j.dump();
}

std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a64(config_to_json(cfg))); }

}  // namespace nimc
