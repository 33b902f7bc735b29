#pragma once

#include <array>
#include <iosfwd>
#include <numbers>
#include <string>
#include <vector>

#include "nimc/body_state.hpp"
#include "nimc/ctbr.hpp"
#include "nimc/random.hpp"

namespace nimc {

/// Nominal bodyrate P gains; randomization scales around these.
inline constexpr Vec3 kNominalPGains{37.0, 37.0, 11.0};

/// D gain on measured angular acceleration, as a fraction of the P gain.
inline constexpr double kDGainRatio = 0.05;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
  bool contains(const Interval& o) const { return o.lo >= lo && o.hi <= hi; }
  double mid() const { return 0.5 * (lo + hi); }
};

/// Physical parameters of one quadrotor plus the quantities derived from
/// them. Construct through make() so the derived part stays consistent.
struct QuadrotorParams {
  double mass = 0.0;               // kg
  double arm_length = 0.0;         // m
  double width_ratio = 0.0;        // box width / arm length
  double height_ratio = 0.0;       // box height / arm length
  double motor_force_const = 0.0;  // N / (rad/s)^2
  double thrust_to_weight = 0.0;   // max collective thrust / weight
  double motor_drag_const = 0.0;   // yaw torque per unit rotor thrust, m
  double motor_time_const = 0.0;   // per-control-step lag factor in (0, 1)
  Vec3 p_gains;                    // bodyrate P gains, 1/s

  // Derived.
  Vec3 inertia;                                    // diagonal of J, kg m^2
  std::array<std::array<double, 4>, 4> mixer{};    // rotor thrusts -> [F, tau]
  std::array<std::array<double, 4>, 4> allocator{};  // inverse of mixer

  static QuadrotorParams make(double mass, double arm_length, double width_ratio,
                              double height_ratio, double motor_force_const,
                              double thrust_to_weight, double motor_drag_const,
                              double motor_time_const, const Vec3& p_gains);

  /// Throws std::invalid_argument if any physical parameter is not
  /// strictly positive or the lag factor is outside (0, 1).
  void validate() const;

  double max_collective_thrust() const { return mass * kGravity * thrust_to_weight; }
  double max_rotor_thrust() const { return 0.25 * max_collective_thrust(); }
  double hover_thrust_norm() const { return 1.0 / thrust_to_weight; }
  /// Rotor speed [rad/s] producing the given rotor thrust.
  double rotor_speed(double thrust) const;

  /// Rotor thrusts -> [collective thrust, torque x, torque y, torque z].
  std::array<double, 4> mix(const std::array<double, 4>& thrusts) const;
  /// [collective thrust, torques] -> unclamped rotor thrusts.
  std::array<double, 4> allocate(double collective, const Vec3& torque) const;
};

/// Midpoint of the training ranges with nominal gains.
QuadrotorParams nominal_params();

struct RandomizationRanges {
  Interval mass;
  Interval arm_length;
  Interval width_ratio;
  Interval height_ratio;
  Interval motor_force_const;
  Interval thrust_to_weight;
  Interval motor_drag_const;
  Interval motor_time_const;
  Interval p_gain_offset;  // fraction of the nominal gain, per axis

  static RandomizationRanges train();
  static RandomizationRanges eval();
  /// Degenerate ranges that always reproduce `p`.
  static RandomizationRanges fixed(const QuadrotorParams& p);

  void validate() const;
};

enum class Preset { train, eval };
RandomizationRanges ranges_for(Preset preset);
std::string to_string(Preset preset);
Preset preset_from_string(const std::string& s);

QuadrotorParams sample_params(const RandomizationRanges& ranges, Rng& rng);

struct DisturbanceConfig {
  /// none: always zero. brownian: clamped random walk. constant: the
  /// current value is held (used for step/constant-disturbance tests).
  enum class Mode { none, brownian, constant };
  Mode mode = Mode::none;
  double bound = 3.3;     // m/s^2
  double step_std = 0.5;  // m/s^2 per control step

  static DisturbanceConfig brownian_default() { return {Mode::brownian, 3.3, 0.5}; }
};

Vec3 brownian_disturbance_step(const Vec3& current, const DisturbanceConfig& cfg, Rng& rng);

struct SimOptions {
  double control_dt = 0.02;
  int substeps = 4;
  /// Zero motor lag and exact bodyrate tracking. Over a control step the
  /// body rate ramps linearly to the command and the collective thrust acts
  /// along the body z axis held from the start of the step.
  bool ideal_actuators = false;
};

struct SimState {
  BodyState body;
  std::array<double, 4> motor_thrusts{};  // N
  Vec3 disturbance_accel;                 // m/s^2, world frame
  Vec3 omega_dot;                         // last measured body angular accel
  double t = 0.0;
  double floor_z = -0.1;
  bool crashed = false;
};

/// Advance one control interval. Throws std::logic_error on a crashed state.
SimState control_step(const SimState& sim, const QuadrotorParams& params,
                      const CtbrAction& action, const DisturbanceConfig& disturbance, Rng& rng,
                      const SimOptions& options = {});

/// Classical RK4 over `dt` with rotor thrusts and the disturbance held
/// constant, split into `steps` equal steps. Used by control_step and
/// exposed for convergence checks.
BodyState integrate_rigid_body(const BodyState& s, const std::array<double, 4>& thrusts,
                               const Vec3& disturbance, const QuadrotorParams& params,
                               double dt, int steps = 1);

struct CrashLimits {
  double max_position_error = 5.0;                  // m
  double max_tilt = 85.0 * std::numbers::pi / 180;  // rad, roll or pitch
};

bool check_crash(const SimState& sim, const Vec3& p_ref, const CrashLimits& limits = {});

/// Body near `ref_point` (uniform offsets up to 0.1 m and 5 deg per axis),
/// at rest, motors at hover thrust, zero disturbance.
SimState reset(const QuadrotorParams& params, const Vec3& ref_point, Rng& rng);

inline constexpr double kResetPositionOffset = 0.1;
inline constexpr double kResetAttitudeOffset = 5.0 * std::numbers::pi / 180;

}  // namespace nimc
