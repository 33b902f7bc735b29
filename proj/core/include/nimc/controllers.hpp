#pragma once

#include <span>
#include <vector>

#include "nimc/body_state.hpp"
#include "nimc/ctbr.hpp"
#include "nimc/quadrotor_sim.hpp"
#include "nimc/random.hpp"
#include "nimc/trajectories.hpp"

namespace nimc {

// ---------------------------------------------------------------------------
// L1 disturbance estimator
// ---------------------------------------------------------------------------

/// Velocity-level L1 estimator with piecewise-constant adaptation.
///
/// The state predictor is v_hat += (a_cmd + sigma_hat - k (v_hat - v)) dt.
/// After each interval sigma_hat is reset to the value that, given the
/// mismatch observed over the interval, drives the predictor error to zero
/// at the end of the next interval. d_hat is sigma_hat through a first-order
/// low-pass filter.
struct L1EstimatorState {
  Vec3 predicted_v;
  Vec3 sigma_hat;
  Vec3 d_hat;
  Vec3 prev_error;  // v_hat - v at the start of the last interval
  double adaptation_gain = 20.0;  // 1/s
  double filter_cutoff = 10.0;    // rad/s
  bool initialized = false;
};

/// `commanded_accel` is the model acceleration commanded over the interval
/// that ended at the measurement `measured_v`. Throws on dt <= 0.
L1EstimatorState l1_update(const L1EstimatorState& est, const Vec3& measured_v,
                           const Vec3& commanded_accel, double dt);

// ---------------------------------------------------------------------------
// Cascaded PID
// ---------------------------------------------------------------------------

struct PidGains {
  double kp_pos = 6.0;   // 1/s^2
  double kd_pos = 4.0;   // 1/s
  double k_att = 8.0;    // 1/s
};

/// Position PD -> desired acceleration -> collective thrust along the current
/// body z plus a zero-yaw attitude target tracked by a proportional bodyrate
/// law. `model` supplies the mass/thrust scale the controller assumes.
CtbrAction pid_ctbr(const BodyState& state, const Vec3& ref_p, const Vec3& ref_v,
                    const Vec3& d_hat, const PidGains& gains, const QuadrotorParams& model);

/// Model acceleration implied by issuing `action` at `state`.
Vec3 commanded_accel(const BodyState& state, const CtbrAction& action,
                     const QuadrotorParams& model);

/// L1-augmented PID with its per-environment estimator state.
class L1PidController {
 public:
  L1PidController(const QuadrotorParams& model, const PidGains& gains = {},
                  double control_dt = 0.02, bool use_l1 = true);

  CtbrAction act(const BodyState& state, const Vec3& ref_p, const Vec3& ref_v);
  const L1EstimatorState& estimator() const { return est_; }

 private:
  QuadrotorParams model_;
  PidGains gains_;
  double dt_;
  bool use_l1_;
  L1EstimatorState est_;
  bool has_last_ = false;
  Vec3 last_accel_;
};

// ---------------------------------------------------------------------------
// MPPI
// ---------------------------------------------------------------------------

struct MppiConfig {
  int n_samples = 4096;
  int horizon = 20;
  double temperature = 0.05;
  double noise_thrust = 0.2;  // std of thrust_norm perturbations
  double noise_rate = 0.5;    // std of bodyrate perturbations, rad/s
  double w_position = 1.0;
  double w_velocity = 0.1;
  double w_action_rate = 0.01;
  double w_bodyrate = 0.05;   // penalty on the simulated body rate

  void validate() const;
};

/// Softmax(-(c - min c) / lambda). Nonnegative and sums to one.
std::vector<double> mppi_weights(std::span<const double> costs, double temperature);

/// Sampling-based planner over CTBR sequences. The rollout model is the
/// disturbance-free simulator with fixed (nominal) parameters plus d_hat as
/// a constant additive acceleration.
class MppiController {
 public:
  MppiController(const QuadrotorParams& model, const MppiConfig& cfg, std::uint64_t seed,
                 const SimOptions& options = {});

  /// Plans from `sim` (body and rotor state) against `traj` at time `t`.
  CtbrAction plan(const SimState& sim, const ReferenceTrajectory& traj, double t,
                  const Vec3& d_hat);

  /// Costs of the last planning call, one per sample.
  const std::vector<double>& last_costs() const { return costs_; }
  const std::vector<double>& last_weights() const { return weights_; }
  /// Sampled sequences of the last call, sample-major, 4 values per step.
  const std::vector<double>& last_samples() const { return samples_; }
  const std::vector<std::array<double, 4>>& nominal_plan() const { return plan_; }
  void reset_plan();

  /// Weighted first action for externally supplied costs of the last
  /// samples; used to check the softmax contract.
  CtbrAction blend_first_action(std::span<const double> costs, double temperature) const;

 private:
  QuadrotorParams model_;
  MppiConfig cfg_;
  SimOptions options_;
  Rng rng_;
  std::vector<std::array<double, 4>> plan_;
  std::array<double, 4> last_applied_{};
  std::vector<double> samples_;
  std::vector<double> costs_;
  std::vector<double> weights_;
};

/// L1-augmented MPPI: the estimator feeds d_hat into the rollouts.
class L1MppiController {
 public:
  L1MppiController(const QuadrotorParams& model, const MppiConfig& cfg, std::uint64_t seed,
                   double control_dt = 0.02, bool use_l1 = true);

  CtbrAction act(const SimState& sim, const ReferenceTrajectory& traj, double t);
  const L1EstimatorState& estimator() const { return est_; }

 private:
  QuadrotorParams model_;
  MppiController mppi_;
  double dt_;
  bool use_l1_;
  L1EstimatorState est_;
  bool has_last_ = false;
  Vec3 last_accel_;
};

}  // namespace nimc
