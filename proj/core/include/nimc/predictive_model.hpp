#pragma once

#include <array>
#include <string>

#include "nimc/body_state.hpp"
#include "nimc/ctbr.hpp"
#include "nimc/quadrotor_sim.hpp"
#include "nimc/random.hpp"

namespace nimc {

/// Acceleration-level input of the internal model. Linear acceleration is
/// in the world frame, angular acceleration in the body frame.
struct AccelCommand {
  Vec3 lin_accel;
  Vec3 ang_accel;
};

/// Discrepancy between a predicted and a measured next state.
struct PredictiveError {
  static constexpr int kSize = 10;

  Vec3 dp;
  double orient_err = 0.0;  // 1 - cos(angle), in [0, 2]
  Vec3 dv;
  Vec3 domega;

  /// [dp, orient_err, dv, domega].
  std::array<double, kSize> flatten() const {
    return {dp.x, dp.y, dp.z, orient_err, dv.x, dv.y, dv.z, domega.x, domega.y, domega.z};
  }
  double norm() const {
    double s = 0.0;
    for (double e : flatten()) s += e * e;
    return std::sqrt(s);
  }
};

enum class NoiseTarget { none, input, output };
std::string to_string(NoiseTarget t);
NoiseTarget noise_target_from_string(const std::string& s);

/// Zero-mean Gaussian perturbation of a state. One sigma, scaled per
/// channel; orientation noise is a ZYX Euler delta in radians.
struct NoiseSpec {
  double sigma = 0.0;
  NoiseTarget target = NoiseTarget::none;
  double p_scale = 1.0;
  double q_scale = 1.0;
  double v_scale = 1.0;
  double omega_scale = 1.0;

  void validate() const;
};

/// One step of the simplified rigid-body model. Throws on dt <= 0.
BodyState predict_next(const BodyState& state, const AccelCommand& cmd, double dt);

PredictiveError predictive_error(const BodyState& predicted, const BodyState& actual);

/// Thrust along the current body z axis minus gravity; angular acceleration
/// as the first-order difference between commanded and measured body rate.
AccelCommand ctbr_to_accel(const BodyState& state, double thrust, const Vec3& bodyrate_cmd,
                           double mass, double dt);

/// Planar velocity command (vx, vy, yaw rate).
struct VelocityCommand {
  double vx = 0.0;
  double vy = 0.0;
  double wz = 0.0;
};

/// Differences consecutive velocity commands; all other channels are zero.
AccelCommand velocity_cmd_to_accel(const VelocityCommand& prev, const VelocityCommand& cmd,
                                   double dt);

BodyState apply_noise(const BodyState& state, const NoiseSpec& spec, Rng& rng);

/// One disturbance-free control step of the full simulator from the given
/// body and motor state.
BodyState predict_next_full(const BodyState& state, const std::array<double, 4>& motor_thrusts,
                            const CtbrAction& action, const QuadrotorParams& params,
                            const SimOptions& options = {});

enum class InternalModelKind { simplified, full };
std::string to_string(InternalModelKind k);
InternalModelKind internal_model_from_string(const std::string& s);

/// The internal model used inside the control loop: maps the state at step
/// k and the command issued at k to a predicted state at k+1, with optional
/// input or output noise. Uses its own (nominal) parameters, never the
/// plant's.
class InternalModel {
 public:
  InternalModel() : InternalModel(InternalModelKind::simplified, nominal_params(), {}) {}
  InternalModel(InternalModelKind kind, const QuadrotorParams& params, const NoiseSpec& noise,
                const SimOptions& options = {});

  /// `motor_fraction` is the plant's rotor thrust as a fraction of its
  /// per-rotor maximum; only the full model reads it.
  BodyState predict(const BodyState& state, const std::array<double, 4>& motor_fraction,
                    const CtbrAction& action, Rng& rng) const;

  InternalModelKind kind() const { return kind_; }
  const QuadrotorParams& params() const { return params_; }
  const NoiseSpec& noise() const { return noise_; }

 private:
  InternalModelKind kind_;
  QuadrotorParams params_;
  NoiseSpec noise_;
  SimOptions options_;
};

}  // namespace nimc
