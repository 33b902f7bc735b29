#pragma once

#include <cstdint>
#include <vector>

#include "nimc/ctbr.hpp"
#include "nimc/observation.hpp"
#include "nimc/predictive_model.hpp"
#include "nimc/quadrotor_sim.hpp"
#include "nimc/random.hpp"
#include "nimc/trajectories.hpp"

namespace nimc {

inline constexpr double kCrashPenalty = -10.0;

/// r = exp(-|p - p_ref|) - 0.01 |a - a_prev|^2 - 0.001 |omega|^2, plus the
/// crash penalty on a crash step. Actions are compared in CtbrAction units.
double reward(const BodyState& state, const Vec3& ref_p, const CtbrAction& action,
              const CtbrAction& last_action, bool crashed = false);

/// Task and plant settings shared by every environment of a run.
struct EnvConfig {
  ObservationConfig obs;
  Preset preset = Preset::train;
  /// Episode trajectories are drawn uniformly from these kinds.
  std::vector<TrajectoryKind> kinds{TrajectoryKind::zigzag};
  /// Constant reference at the flight center with nominal parameters and
  /// no disturbance.
  bool hover = false;
  double disturbance_prob = 0.5;
  DisturbanceConfig disturbance = DisturbanceConfig::brownian_default();
  int max_episode_steps = 1000;
  InternalModelKind model_kind = InternalModelKind::simplified;
  NoiseSpec noise;
  SimOptions sim;
  CrashLimits crash;

  void validate() const;
};

/// Everything that varies between episodes.
struct EpisodeSetup {
  QuadrotorParams params;
  TrajectorySpec trajectory;
  bool disturbed = false;
  bool hover = false;
};

/// Draws an episode setup for `cfg` from `rng`.
EpisodeSetup sample_episode(const EnvConfig& cfg, Rng& rng);

struct StepResult {
  double reward = 0.0;
  bool done = false;
  bool terminated = false;  // crash; no bootstrap
  bool truncated = false;   // timeout or end of trajectory; bootstrap
  BodyState state;          // before the step
  BodyState next_state;
  CtbrAction action;
  PredictiveError pred_err;  // of next_state against the internal model
  Vec3 ref_p;                // reference at the new time
  Vec3 disturbance;          // disturbance acting during the step
};

/// One closed-loop tracking environment: plant, reference, internal model,
/// observation history and private RNG streams.
class TrackingEnv {
 public:
  TrackingEnv(const EnvConfig& cfg, std::uint64_t seed, std::uint64_t index);

  /// New episode from the environment's own stream.
  void reset();
  void reset(const EpisodeSetup& setup);

  Observation observe() const;
  StepResult step(const CtbrAction& action);

  const EnvConfig& config() const { return cfg_; }
  const SimState& sim() const { return sim_; }
  const QuadrotorParams& params() const { return setup_.params; }
  const EpisodeSetup& setup() const { return setup_; }
  const ReferenceTrajectory& trajectory() const { return traj_; }
  const InternalModel& model() const { return model_; }
  double time() const { return t_; }
  int steps() const { return steps_; }
  const CtbrAction& last_action() const { return last_action_; }
  const PredictiveError& last_pred_err() const { return pred_err_; }
  bool needs_reset() const { return needs_reset_; }
  /// Plant rotor thrusts as fractions of the per-rotor maximum.
  std::array<double, 4> motor_fraction() const;

 private:
  EnvConfig cfg_;
  Rng setup_rng_;
  Rng sim_rng_;
  Rng model_rng_;
  EpisodeSetup setup_;
  ReferenceTrajectory traj_;
  InternalModel model_;
  DisturbanceConfig dist_;
  SimState sim_;
  double t_ = 0.0;
  int steps_ = 0;
  CtbrAction last_action_;
  PredictiveError pred_err_;
  ObservationHistory history_;
  bool needs_reset_ = true;
};

}  // namespace nimc
