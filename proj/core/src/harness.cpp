#include "nimc/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nimc/hash.hpp"

namespace nimc {

namespace fs = std::filesystem;

namespace {

// Stream ids for evaluation; disjoint from the training ranges.
constexpr std::uint64_t kTrialStreamBase = 1ull << 44;
constexpr std::uint64_t kEvalEnvBase = 1ull << 24;

std::string fmt_g(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%g", v);
  return b;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double round_to(double v, double scale) { return std::round(v * scale) / scale; }

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string to_string(Feasibility f) { return f == Feasibility::smooth ? "smooth" : "infeasible"; }

Feasibility feasibility_of(TrajectoryKind k) {
  return (k == TrajectoryKind::circle || k == TrajectoryKind::chained_poly) ? Feasibility::smooth
                                                                             : Feasibility::infeasible;
}

// ---------------------------------------------------------------------------
// Variants
// ---------------------------------------------------------------------------

std::string Variant::id() const {
  std::string s = to_string(method) + "+" + to_string(family);
  if (noise.target != NoiseTarget::none && noise.sigma > 0.0) {
    s += "+noise-" + to_string(noise.target) + "-" + fmt_g(noise.sigma);
  }
  if (history.long_history) {
    s += "+long" + std::to_string(history.long_len);
  } else if (history.short_len != 1) {
    s += "+S" + std::to_string(history.short_len);
  }
  return s;
}

Variant Variant::parse(const std::string& id) {
  const auto parts = split(id, '+');
  if (parts.size() < 2) throw std::invalid_argument("variant '" + id + "' needs method+family");
  Variant v;
  v.method = method_from_string(parts[0]);
  if (!is_learned(v.method)) throw std::invalid_argument("variant '" + id + "' is not a learned method");
  if (parts[1] == "smooth") {
    v.family = Feasibility::smooth;
  } else if (parts[1] == "infeasible") {
    v.family = Feasibility::infeasible;
  } else {
    throw std::invalid_argument("variant '" + id + "': unknown family '" + parts[1] + "'");
  }
  for (std::size_t i = 2; i < parts.size(); ++i) {
    const std::string& p = parts[i];
    try {
      if (p.rfind("noise-", 0) == 0) {
        const auto f = split(p, '-');
        if (f.size() != 3) throw std::invalid_argument("bad noise token");
        v.noise.target = noise_target_from_string(f[1]);
        v.noise.sigma = std::stod(f[2]);
      } else if (p.rfind("long", 0) == 0) {
        v.history.long_history = true;
        v.history.long_len = std::stoi(p.substr(4));
      } else if (p.rfind("S", 0) == 0) {
        v.history.short_len = std::stoi(p.substr(1));
      } else {
        throw std::invalid_argument("unknown token");
      }
    } catch (const std::exception&) {
      throw std::invalid_argument("variant '" + id + "': cannot parse '" + p + "'");
    }
  }
  v.noise.validate();
  if (v.history.short_len < 1) throw std::invalid_argument("variant '" + id + "': S must be >= 1");
  if (v.id() != id) throw std::invalid_argument("variant '" + id + "' is not canonical (" + v.id() + ")");
  return v;
}

ObservationConfig Variant::observation(const ObservationConfig& base) const {
  ObservationConfig o = base;
  o.feedback = method != Method::ppo_plain;
  o.history = history;
  return o;
}

InternalModelKind Variant::model_kind() const {
  return method == Method::neural_imc_full_model ? InternalModelKind::full
                                                 : InternalModelKind::simplified;
}

std::vector<TrajectoryKind> Variant::training_kinds() const {
  return family == Feasibility::smooth ? std::vector{TrajectoryKind::chained_poly}
                                       : std::vector{TrajectoryKind::zigzag};
}

TrainConfig make_train_config(const ExperimentConfig& cfg, const Variant& v, std::uint64_t seed) {
  TrainConfig t;
  t.ppo = cfg.ppo;
  t.ppo.seed = seed;
  t.env = cfg.env;
  t.env.obs = v.observation(cfg.env.obs);
  t.env.kinds = v.training_kinds();
  t.env.model_kind = v.model_kind();
  t.env.noise = v.noise;
  t.env.preset = Preset::train;
  t.net = cfg.network;
  t.tag = v.id() + "@seed" + std::to_string(seed);
  return t;
}

std::string checkpoint_path(const ExperimentConfig& cfg, const Variant& v, std::uint64_t seed) {
  return (fs::path(cfg.checkpoint_dir) / v.id() / ("seed" + std::to_string(seed)) / "policy.json")
      .string();
}

void train_variant(const ExperimentConfig& cfg, const Variant& v,
                   const std::vector<std::uint64_t>& seeds, bool skip_existing,
                   const Progress& progress) {
  for (std::uint64_t seed : seeds) {
    const fs::path path = checkpoint_path(cfg, v, seed);
    if (skip_existing && fs::exists(path)) {
      if (progress) progress("skip " + v.id() + " seed " + std::to_string(seed) + " (checkpoint exists)");
      continue;
    }
    const TrainConfig tc = make_train_config(cfg, v, seed);
    if (progress) progress("train " + v.id() + " seed " + std::to_string(seed));
    train(tc, path.parent_path().string(), [&](const IterationLog& log) {
      if (progress && (log.iteration % 10 == 0)) {
        char b[160];
        std::snprintf(b, sizeof b, "  iter %d steps %lld reward %.4f return %.2f kl %.4f",
                      log.iteration, static_cast<long long>(log.env_steps), log.reward_mean,
                      log.episode_return_mean, log.update.approx_kl);
        progress(b);
      }
    });
  }
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

std::optional<double> tracking_error(const std::vector<double>& step_errors, bool crashed) {
  if (crashed) return std::nullopt;
  if (step_errors.empty()) return 0.0;
  return std::accumulate(step_errors.begin(), step_errors.end(), 0.0) /
         static_cast<double>(step_errors.size());
}

EpisodeSetup trial_setup(std::uint64_t seed, Preset preset, TrajectoryKind kind, bool disturbed,
                         int trial) {
  const std::uint64_t stream = kTrialStreamBase + (static_cast<std::uint64_t>(preset) << 32) +
                               (static_cast<std::uint64_t>(kind) << 28) +
                               static_cast<std::uint64_t>(trial);
  Rng rng = make_stream(seed, stream);
  EpisodeSetup s;
  s.params = sample_params(ranges_for(preset), rng);
  s.trajectory = sample_trajectory_spec(kind, rng);
  s.disturbed = disturbed;
  return s;
}

std::vector<TrialResult> run_episodes(Method method, const std::vector<EpisodeSetup>& setups,
                                      const EnvConfig& env, const ExperimentConfig& cfg,
                                      const PolicyCheckpoint* policy, std::uint64_t seed,
                                      const StepObserver& observer) {
  const int n = static_cast<int>(setups.size());
  std::vector<TrialResult> out(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> errors(static_cast<std::size_t>(n));
  std::vector<TrackingEnv> envs;
  envs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    envs.emplace_back(env, seed, kEvalEnvBase + static_cast<std::uint64_t>(i));
    envs.back().reset(setups[static_cast<std::size_t>(i)]);
  }
  auto record = [&](int i, const StepResult& r) {
    auto& res = out[static_cast<std::size_t>(i)];
    errors[static_cast<std::size_t>(i)].push_back((r.next_state.p - r.ref_p).norm());
    res.steps += 1;
    res.crashed = r.terminated;
    if (observer) observer(i, envs[static_cast<std::size_t>(i)], r);
  };

  if (is_learned(method)) {
    if (!policy) throw std::invalid_argument("run_episodes: learned method needs a checkpoint");
    if (policy->obs_cfg.hash() != env.obs.hash()) {
      throw std::invalid_argument("run_episodes: checkpoint observation config differs from env");
    }
    const PolicyNetwork net(policy->obs_cfg, policy->net_cfg);
    std::vector<int> active(static_cast<std::size_t>(n));
    std::iota(active.begin(), active.end(), 0);
    while (!active.empty()) {
      Eigen::MatrixXd x(net.obs_dim(), static_cast<Eigen::Index>(active.size()));
      for (std::size_t j = 0; j < active.size(); ++j) {
        const auto o = envs[static_cast<std::size_t>(active[j])].observe();
        x.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(o.values.data(), net.obs_dim());
      }
      if (policy->normalizer.count() > 0.0) x = policy->normalizer.normalize(x);
      const auto y = net.forward(policy->params, x);
      std::vector<int> still;
      for (std::size_t j = 0; j < active.size(); ++j) {
        std::array<double, kActionDim> s{};
        for (int c = 0; c < kActionDim; ++c) s[c] = std::tanh(y.mean(c, static_cast<Eigen::Index>(j)));
        const int i = active[j];
        const StepResult r = envs[static_cast<std::size_t>(i)].step(squashed_to_action(s));
        record(i, r);
        if (!r.done) still.push_back(i);
      }
      active.swap(still);
    }
  } else {
    const QuadrotorParams model = nominal_params();
    for (int i = 0; i < n; ++i) {
      TrackingEnv& e = envs[static_cast<std::size_t>(i)];
      if (method == Method::l1_pid) {
        L1PidController ctl(model, cfg.pid, env.sim.control_dt, true);
        for (;;) {
          const RefSample ref = e.trajectory().sample(e.time());
          const StepResult r = e.step(ctl.act(e.sim().body, ref.p, ref.v));
          record(i, r);
          if (r.done) break;
        }
      } else {
        L1MppiController ctl(model, cfg.mppi, seed * 1000003ull + static_cast<std::uint64_t>(i),
                             env.sim.control_dt, true);
        for (;;) {
          // The planner works in its own model's units: express the plant's
          // rotor state as fractions of the nominal rotor limit.
          SimState s = e.sim();
          const auto frac = e.motor_fraction();
          for (int k = 0; k < 4; ++k) s.motor_thrusts[k] = frac[k] * model.max_rotor_thrust();
          const StepResult r = e.step(ctl.act(s, e.trajectory(), e.time()));
          record(i, r);
          if (r.done) break;
        }
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    auto& res = out[static_cast<std::size_t>(i)];
    const auto err = tracking_error(errors[static_cast<std::size_t>(i)], res.crashed);
    res.error = err.value_or(0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation and IO
// ---------------------------------------------------------------------------

ResultRow aggregate(const std::vector<std::vector<TrialResult>>& per_seed) {
  ResultRow row;
  std::vector<double> seed_means;
  double sum = 0.0;
  int valid = 0;
  for (const auto& trials : per_seed) {
    double s = 0.0;
    int k = 0;
    for (const auto& t : trials) {
      ++row.n_trials;
      if (t.crashed) {
        ++row.n_crashed;
        continue;
      }
      s += t.error;
      ++k;
    }
    if (k > 0) seed_means.push_back(s / k);
    sum += s;
    valid += k;
  }
  row.crash_rate = row.n_trials > 0 ? static_cast<double>(row.n_crashed) / row.n_trials : 0.0;
  if (valid == 0) {
    row.status = "all_crashed";
    return row;
  }
  row.mean_error = sum / valid;
  if (seed_means.size() > 1) {
    const double m = std::accumulate(seed_means.begin(), seed_means.end(), 0.0) / seed_means.size();
    double v = 0.0;
    for (double x : seed_means) v += (x - m) * (x - m);
    row.std_error = std::sqrt(v / static_cast<double>(seed_means.size() - 1));
  }
  return row;
}

void finalize_rows(std::vector<ResultRow>& rows) {
  for (auto& r : rows) {
    r.mean_error = round_to(r.mean_error, 1e3);
    r.std_error = round_to(r.std_error, 1e3);
    r.crash_rate = round_to(r.crash_rate, 1e4);
    r.rel_change_pct.reset();
  }
  for (auto& d : rows) {
    if (!d.disturbed || !d.has_value()) continue;
    for (const auto& s : rows) {
      if (s.disturbed || !s.has_value() || s.method != d.method || s.variant != d.variant ||
          s.knob != d.knob || s.knob_value != d.knob_value || s.trajectory != d.trajectory ||
          s.preset != d.preset) {
        continue;
      }
      if (s.mean_error > 0.0) {
        d.rel_change_pct = round_to((d.mean_error - s.mean_error) / s.mean_error * 100.0, 1e2);
      }
      break;
    }
  }
}

namespace {

const char* kCsvHeader =
    "method,variant,knob,knob_value,trajectory,preset,disturbance,mean_error_m,std_error_m,"
    "crash_rate,n_trials,n_crashed,rel_change_pct,status";

}  // namespace

std::string rows_to_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << kCsvHeader << "\n";
  for (const auto& r : rows) {
    char err[64] = ",";
    if (r.has_value()) std::snprintf(err, sizeof err, "%.3f,%.3f", r.mean_error, r.std_error);
    char counts[64];
    std::snprintf(counts, sizeof counts, "%.4f,%d,%d", r.crash_rate, r.n_trials, r.n_crashed);
    std::string rel;
    if (r.rel_change_pct) {
      char b[32];
      std::snprintf(b, sizeof b, "%+.2f", *r.rel_change_pct);
      rel = b;
    }
    os << r.method << "," << r.variant << "," << r.knob << "," << fmt_g(r.knob_value) << ","
       << r.trajectory << "," << r.preset << "," << (r.disturbed ? "disturbed" : "static") << ","
       << err << "," << counts
       << "," << rel << "," << r.status << "\n";
  }
  return os.str();
}

std::string write_table(const ResultTable& table, const ExperimentConfig& cfg,
                        const std::string& dir) {
  fs::create_directories(dir);
  const std::string body = rows_to_csv(table.rows);
  const std::string content_hash = hex64(fnv1a64(body));
  const std::string cfg_json = config_to_json(cfg);
  const std::string cfg_hash = config_hash(cfg);

  std::ostringstream csv;
  csv << "# table: " << table.name << "\n"
      << "# config_hash: " << cfg_hash << "\n"
      << "# content_hash: " << content_hash << "\n"
      << "# config: " << cfg_json << "\n"
      << body;
  const fs::path csv_path = fs::path(dir) / (table.name + ".csv");
  write_atomic(csv_path, csv.str());

  nlohmann::json j;
  j["table"] = table.name;
  j["config"] = nlohmann::json::parse(cfg_json);
  j["config_hash"] = cfg_hash;
  j["content_hash"] = content_hash;
  j["columns"] = split(kCsvHeader, ',');
  j["rows"] = nlohmann::json::array();
  for (const auto& r : table.rows) {
    nlohmann::json o = {{"method", r.method},
                        {"variant", r.variant},
                        {"knob", r.knob},
                        {"knob_value", r.knob_value},
                        {"trajectory", r.trajectory},
                        {"preset", r.preset},
                        {"disturbance", r.disturbed ? "disturbed" : "static"},
                        {"crash_rate", r.crash_rate},
                        {"n_trials", r.n_trials},
                        {"n_crashed", r.n_crashed},
                        {"status", r.status}};
    o["mean_error_m"] = r.has_value() ? nlohmann::json(r.mean_error) : nlohmann::json();
    o["std_error_m"] = r.has_value() ? nlohmann::json(r.std_error) : nlohmann::json();
    o["rel_change_pct"] = r.rel_change_pct ? nlohmann::json(*r.rel_change_pct) : nlohmann::json();
    j["rows"].push_back(o);
  }
  write_atomic(fs::path(dir) / (table.name + ".json"), j.dump(2) + "\n");
  return csv_path.string();
}

std::vector<ResultRow> read_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<ResultRow> rows;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kCsvHeader) throw std::runtime_error(path + ": unexpected CSV header");
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 14) throw std::runtime_error(path + ": bad row: " + line);
    ResultRow r;
    r.method = f[0];
    r.variant = f[1];
    r.knob = f[2];
    r.knob_value = std::stod(f[3]);
    r.trajectory = f[4];
    r.preset = f[5];
    r.disturbed = f[6] == "disturbed";
    r.status = f[13];
    if (r.has_value()) {
      r.mean_error = std::stod(f[7]);
      r.std_error = std::stod(f[8]);
    }
    r.crash_rate = std::stod(f[9]);
    r.n_trials = std::stoi(f[10]);
    r.n_crashed = std::stoi(f[11]);
    if (!f[12].empty()) r.rel_change_pct = std::stod(f[12]);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

namespace {

/// Evaluation context for one policy variant (or a classical method).
class CellRunner {
 public:
  CellRunner(const ExperimentConfig& cfg, const Progress& progress) : cfg_(cfg), progress_(progress) {}

  /// Evaluates one cell. `variant` is required for learned methods.
  ResultRow run(Method method, const Variant* variant, TrajectoryKind kind, Preset preset,
                bool disturbed) {
    ResultRow row;
    std::vector<std::vector<TrialResult>> per_seed;
    const int n = method == Method::l1_mppi ? cfg_.eval.mppi_trials : cfg_.eval.n_trials;
    for (std::uint64_t seed : cfg_.seeds) {
      EnvConfig env = cfg_.env;
      env.preset = preset;
      const PolicyCheckpoint* ckpt = nullptr;
      if (is_learned(method)) {
        ckpt = checkpoint(*variant, seed);
        if (!ckpt) {
          row.status = "missing_checkpoint";
          break;
        }
        env.obs = ckpt->obs_cfg;
        env.model_kind = variant->model_kind();
        env.noise = variant->noise;
      }
      std::vector<EpisodeSetup> setups;
      for (int t = 0; t < n; ++t) setups.push_back(trial_setup(seed, preset, kind, disturbed, t));
      per_seed.push_back(run_episodes(method, setups, env, cfg_, ckpt, seed));
    }
    if (row.status != "missing_checkpoint") row = aggregate(per_seed);
    row.method = to_string(method);
    row.variant = variant ? variant->id() : to_string(method);
    row.trajectory = to_string(kind);
    row.preset = to_string(preset);
    row.disturbed = disturbed;
    if (progress_) {
      char b[256];
      std::snprintf(b, sizeof b, "%-40s %-13s %-5s %-9s err %.4f crash %.3f %s",
                    row.variant.c_str(), row.trajectory.c_str(), row.preset.c_str(),
                    disturbed ? "disturbed" : "static", row.mean_error, row.crash_rate,
                    row.status.c_str());
      progress_(b);
    }
    return row;
  }

 private:
  const PolicyCheckpoint* checkpoint(const Variant& v, std::uint64_t seed) {
    const std::string path = checkpoint_path(cfg_, v, seed);
    auto it = cache_.find(path);
    if (it != cache_.end()) return &it->second;
    if (!fs::exists(path)) {
      if (!cfg_.train_missing) {
        if (progress_) progress_("missing checkpoint " + path);
        return nullptr;
      }
      train_variant(cfg_, v, {seed}, true, progress_);
    }
    auto c = load_checkpoint(path, v.observation(cfg_.env.obs));
    return &cache_.emplace(path, std::move(c)).first->second;
  }

  const ExperimentConfig& cfg_;
  Progress progress_;
  std::map<std::string, PolicyCheckpoint> cache_;
};

Variant main_variant(Method m, TrajectoryKind k) {
  Variant v;
  v.method = m;
  v.family = feasibility_of(k);
  return v;
}

template <class Fn>
void for_cells(const ExperimentConfig& cfg, Fn&& fn) {
  for (Preset p : cfg.presets) {
    for (bool d : {false, true}) fn(p, d);
  }
}

}  // namespace

ResultTable run_table2(const ExperimentConfig& cfg, const Progress& progress) {
  cfg.validate();
  CellRunner runner(cfg, progress);
  ResultTable t{"table2", {}};
  for (Method m : cfg.methods) {
    for (TrajectoryKind k : cfg.trajectories) {
      const Variant v = main_variant(m, k);
      for_cells(cfg, [&](Preset p, bool d) {
        t.rows.push_back(runner.run(m, is_learned(m) ? &v : nullptr, k, p, d));
      });
    }
  }
  finalize_rows(t.rows);
  return t;
}

ResultTable run_noise_ablation(const ExperimentConfig& cfg, const Progress& progress) {
  cfg.validate();
  CellRunner runner(cfg, progress);
  ResultTable t{"noise_ablation", {}};
  for (NoiseTarget target : cfg.noise_targets) {
    for (double sigma : cfg.noise_sigmas) {
      Variant v = main_variant(Method::neural_imc, TrajectoryKind::zigzag);
      if (sigma > 0.0) {
        v.noise.sigma = sigma;
        v.noise.target = target;
      }
      for_cells(cfg, [&](Preset p, bool d) {
        ResultRow r = runner.run(Method::neural_imc, &v, TrajectoryKind::zigzag, p, d);
        r.knob = "sigma_" + to_string(target);
        r.knob_value = sigma;
        t.rows.push_back(r);
      });
    }
  }
  finalize_rows(t.rows);
  return t;
}

ResultTable run_history_ablation(const ExperimentConfig& cfg, const Progress& progress) {
  cfg.validate();
  CellRunner runner(cfg, progress);
  ResultTable t{"history_ablation", {}};
  auto add = [&](const Variant& v, const std::string& knob, double value) {
    for_cells(cfg, [&](Preset p, bool d) {
      ResultRow r = runner.run(v.method, &v, TrajectoryKind::zigzag, p, d);
      r.knob = knob;
      r.knob_value = value;
      t.rows.push_back(r);
    });
  };
  for (int s : cfg.short_lengths) {
    // No history tuple at all means no predictive-error feedback: plain PPO.
    Variant v = main_variant(s == 0 ? Method::ppo_plain : Method::neural_imc, TrajectoryKind::zigzag);
    if (s > 0) v.history.short_len = s;
    add(v, "short_len", s);
  }
  for (int l : cfg.long_lengths) {
    Variant v = main_variant(Method::neural_imc, TrajectoryKind::zigzag);
    v.history.long_history = true;
    v.history.long_len = l;
    add(v, "long_len", l);
  }
  finalize_rows(t.rows);
  return t;
}

ResultTable run_model_ablation(const ExperimentConfig& cfg, const Progress& progress) {
  cfg.validate();
  CellRunner runner(cfg, progress);
  ResultTable t{"model_ablation", {}};
  const Method methods[] = {Method::neural_imc, Method::neural_imc_full_model};
  for (Method m : methods) {
    const Variant v = main_variant(m, TrajectoryKind::zigzag);
    for_cells(cfg, [&](Preset p, bool d) {
      ResultRow r = runner.run(m, &v, TrajectoryKind::zigzag, p, d);
      r.knob = "model";
      r.knob_value = m == Method::neural_imc_full_model ? 1.0 : 0.0;
      t.rows.push_back(r);
    });
  }
  finalize_rows(t.rows);
  return t;
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

std::vector<std::string> trace_columns() {
  return {"t",      "px",     "py",     "pz",     "qw",     "qx",     "qy",     "qz",
          "vx",     "vy",     "vz",     "wx",     "wy",     "wz",     "thrust", "wx_cmd",
          "wy_cmd", "wz_cmd", "dx",     "dy",     "dz",     "e_px",   "e_py",   "e_pz",
          "e_att",  "e_vx",   "e_vy",   "e_vz",   "e_wx",   "e_wy",   "e_wz"};
}

std::string write_trace(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& dir) {
  cfg.validate();
  const TraceSettings& ts = cfg.trace;
  const EpisodeSetup setup = trial_setup(seed, ts.preset, ts.trajectory, ts.disturbed, ts.trial);
  EnvConfig env = cfg.env;
  env.preset = ts.preset;
  std::optional<PolicyCheckpoint> ckpt;
  if (is_learned(ts.method)) {
    const Variant v = main_variant(ts.method, ts.trajectory);
    const std::string path = checkpoint_path(cfg, v, seed);
    if (!fs::exists(path)) {
      if (!cfg.train_missing) throw MissingCheckpoint("missing checkpoint " + path);
      train_variant(cfg, v, {seed}, true);
    }
    ckpt = load_checkpoint(path, v.observation(cfg.env.obs));
    env.obs = ckpt->obs_cfg;
    env.model_kind = v.model_kind();
  }

  std::ostringstream csv;
  const auto cols = trace_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
  csv << "\n";
  const auto observer = [&](int, const TrackingEnv& e, const StepResult& r) {
    const auto& s = r.next_state;
    const auto q = s.q.coeffs();
    const auto a = r.action.as_array();
    const auto pe = r.pred_err.flatten();
    std::vector<double> v{e.time(), s.p.x, s.p.y, s.p.z, q[0], q[1], q[2], q[3],
                          s.v.x, s.v.y, s.v.z, s.omega.x, s.omega.y, s.omega.z,
                          a[0], a[1], a[2], a[3], r.disturbance.x, r.disturbance.y,
                          r.disturbance.z};
    v.insert(v.end(), pe.begin(), pe.end());
    char b[32];
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(b, sizeof b, "%.9g", v[i]);
      csv << (i ? "," : "") << b;
    }
    csv << "\n";
  };
  run_episodes(ts.method, {setup}, env, cfg, ckpt ? &*ckpt : nullptr, seed, observer);

  fs::create_directories(dir);
  const fs::path trace_path = fs::path(dir) / "trace.csv";
  write_atomic(trace_path, csv.str());
  write_atomic(fs::path(dir) / "trajectory.json", setup.trajectory.to_json() + "\n");
  return trace_path.string();
}

}  // namespace nimc
