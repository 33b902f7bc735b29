#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nimc/controllers.hpp"
#include "nimc/env.hpp"
#include "nimc/ppo.hpp"

namespace nimc {

/// Invalid or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A learned method has no checkpoint for a requested seed.
class MissingCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { neural_imc, ppo_plain, l1_pid, l1_mppi, neural_imc_full_model };
std::string to_string(Method m);
Method method_from_string(const std::string& s);
bool is_learned(Method m);
std::string to_string(Feasibility f);
Feasibility feasibility_of(TrajectoryKind k);

/// One trainable policy configuration. Identified by a string such as
/// "neural_imc+infeasible+noise-input-0.04+S2".
struct Variant {
  Method method = Method::neural_imc;
  Feasibility family = Feasibility::infeasible;
  NoiseSpec noise;
  HistoryConfig history;

  std::string id() const;
  static Variant parse(const std::string& id);

  /// Observation layout for this variant on top of `base`.
  ObservationConfig observation(const ObservationConfig& base) const;
  InternalModelKind model_kind() const;
  /// Trajectory kinds the variant trains on.
  std::vector<TrajectoryKind> training_kinds() const;
};

struct EvalSettings {
  int n_trials = 64;
  /// Trials per seed for the sampling-based planner, which is far slower.
  int mppi_trials = 8;
};

struct TraceSettings {
  Method method = Method::neural_imc;
  TrajectoryKind trajectory = TrajectoryKind::zigzag;
  Preset preset = Preset::eval;
  bool disturbed = true;
  int trial = 0;
};

/// Fully resolved experiment description; see docs/config.md.
struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  std::string name = "default";
  std::vector<std::uint64_t> seeds{0, 1, 2};
  PpoConfig ppo;
  NetworkConfig network;
  EnvConfig env;
  EvalSettings eval;
  MppiConfig mppi;
  PidGains pid;

  std::vector<Method> methods{Method::neural_imc, Method::ppo_plain, Method::l1_pid,
                              Method::l1_mppi};
  std::vector<TrajectoryKind> trajectories{TrajectoryKind::circle, TrajectoryKind::chained_poly,
                                           TrajectoryKind::star5, TrajectoryKind::zigzag};
  std::vector<Preset> presets{Preset::train, Preset::eval};
  std::vector<double> noise_sigmas{0.0, 0.02, 0.04, 0.08, 0.16};
  std::vector<NoiseTarget> noise_targets{NoiseTarget::input, NoiseTarget::output};
  std::vector<int> short_lengths{0, 1, 2, 4, 8};
  std::vector<int> long_lengths{};

  std::string checkpoint_dir = "checkpoints";
  std::vector<std::string> train_variants{"neural_imc+infeasible", "ppo_plain+infeasible"};
  /// Train missing checkpoints on demand during evaluation.
  bool train_missing = false;
  TraceSettings trace;

  void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
/// Canonical JSON of every resolved field.
std::string config_to_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

/// Training setup for `variant` at `seed`.
TrainConfig make_train_config(const ExperimentConfig& cfg, const Variant& variant,
                              std::uint64_t seed);
std::string checkpoint_path(const ExperimentConfig& cfg, const Variant& variant,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

/// Mean of per-step position errors; nullopt for a crashed episode.
std::optional<double> tracking_error(const std::vector<double>& step_errors, bool crashed);

/// Deterministic per-trial setup shared by every method: depends only on
/// (seed, preset, trajectory kind, trial).
EpisodeSetup trial_setup(std::uint64_t seed, Preset preset, TrajectoryKind kind, bool disturbed,
                         int trial);

struct TrialResult {
  bool crashed = false;
  double error = 0.0;  // valid when !crashed
  int steps = 0;
};

using StepObserver = std::function<void(int trial, const TrackingEnv& env, const StepResult& r)>;

/// Runs one episode per setup with `method`. Learned methods need `policy`.
/// Episodes last until crash or the end of the reference, capped by the
/// environment's max_episode_steps.
std::vector<TrialResult> run_episodes(Method method, const std::vector<EpisodeSetup>& setups,
                                      const EnvConfig& env, const ExperimentConfig& cfg,
                                      const PolicyCheckpoint* policy, std::uint64_t seed,
                                      const StepObserver& observer = {});

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

struct ResultRow {
  std::string method;
  std::string variant;
  std::string knob;         // ablation axis, empty for the main table
  double knob_value = 0.0;
  std::string trajectory;
  std::string preset;
  bool disturbed = false;
  double mean_error = 0.0;  // m, over non-crashed trials of all seeds
  double std_error = 0.0;   // m, sample std of per-seed means
  double crash_rate = 0.0;
  int n_trials = 0;
  int n_crashed = 0;
  std::optional<double> rel_change_pct;
  std::string status = "ok";  // ok | missing_checkpoint | all_crashed

  bool has_value() const { return status == "ok"; }
};

/// Aggregates per-seed trial results into a row (error/crash fields only).
ResultRow aggregate(const std::vector<std::vector<TrialResult>>& per_seed);

/// Rounds errors to the output precision and fills rel_change_pct of each
/// disturbed row from its static counterpart.
void finalize_rows(std::vector<ResultRow>& rows);

struct ResultTable {
  std::string name;
  std::vector<ResultRow> rows;
};

/// Writes <dir>/<name>.csv and <dir>/<name>.json with the resolved config
/// and hashes. Returns the CSV path.
std::string write_table(const ResultTable& table, const ExperimentConfig& cfg,
                        const std::string& dir);
std::string rows_to_csv(const std::vector<ResultRow>& rows);
/// Parses the data rows of a CSV written by write_table.
std::vector<ResultRow> read_table_csv(const std::string& path);

using Progress = std::function<void(const std::string&)>;

ResultTable run_table2(const ExperimentConfig& cfg, const Progress& progress = {});
ResultTable run_noise_ablation(const ExperimentConfig& cfg, const Progress& progress = {});
ResultTable run_history_ablation(const ExperimentConfig& cfg, const Progress& progress = {});
ResultTable run_model_ablation(const ExperimentConfig& cfg, const Progress& progress = {});

/// Trains (or with skip_existing, reuses) a checkpoint for every seed.
void train_variant(const ExperimentConfig& cfg, const Variant& variant,
                   const std::vector<std::uint64_t>& seeds, bool skip_existing,
                   const Progress& progress = {});

/// Column names of the per-step trace CSV (31 columns).
std::vector<std::string> trace_columns();

/// Single-episode dump per cfg.trace for the first seed. Writes trace.csv and
/// trajectory.json into `dir`; returns the trace path.
std::string write_trace(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& dir);

}  // namespace nimc
