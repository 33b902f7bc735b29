#include "nimc/predictive_model.hpp"

#include <limits>
#include <stdexcept>

namespace nimc {

namespace {

void require_positive_dt(double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
}

}  // namespace

std::string to_string(NoiseTarget t) {
  switch (t) {
    case NoiseTarget::none:
      return "none";
    case NoiseTarget::input:
      return "input";
    case NoiseTarget::output:
      return "output";
  }
  return "none";
}

NoiseTarget noise_target_from_string(const std::string& s) {
  if (s == "none") return NoiseTarget::none;
  if (s == "input") return NoiseTarget::input;
  if (s == "output") return NoiseTarget::output;
  throw std::invalid_argument("unknown noise target: " + s);
}

void NoiseSpec::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("noise sigma < 0");
  for (double s : {p_scale, q_scale, v_scale, omega_scale}) {
    if (!(s >= 0.0)) throw std::invalid_argument("noise channel scale < 0");
  }
}

BodyState predict_next(const BodyState& s, const AccelCommand& cmd, double dt) {
  require_positive_dt(dt);
  BodyState out;
  out.p = s.p + s.v * dt + cmd.lin_accel * (0.5 * dt * dt);
  out.v = s.v + cmd.lin_accel * dt;
  const Vec3 dtheta = s.omega * dt + cmd.ang_accel * (0.5 * dt * dt);
  out.q = quat_mul(s.q, exp_map(dtheta));
  out.omega = s.omega + cmd.ang_accel * dt;
  return out;
}

PredictiveError predictive_error(const BodyState& predicted, const BodyState& actual) {
  PredictiveError e;
  e.dp = actual.p - predicted.p;
  e.orient_err = 1.0 - std::cos(angle_between(predicted.q, actual.q));
  e.dv = actual.v - predicted.v;
  e.domega = actual.omega - predicted.omega;
  return e;
}

AccelCommand ctbr_to_accel(const BodyState& state, double thrust, const Vec3& bodyrate_cmd,
                           double mass, double dt) {
  if (!(mass > 0.0)) throw std::invalid_argument("mass must be positive");
  require_positive_dt(dt);
  AccelCommand a;
  a.lin_accel = rotate_vector(state.q, Vec3{0.0, 0.0, thrust / mass}) + Vec3{0.0, 0.0, -kGravity};
  a.ang_accel = (bodyrate_cmd - state.omega) / dt;
  return a;
}

AccelCommand velocity_cmd_to_accel(const VelocityCommand& prev, const VelocityCommand& cmd,
                                   double dt) {
  require_positive_dt(dt);
  AccelCommand a;
  a.lin_accel = {(cmd.vx - prev.vx) / dt, (cmd.vy - prev.vy) / dt, 0.0};
  a.ang_accel = {0.0, 0.0, (cmd.wz - prev.wz) / dt};
  return a;
}

BodyState apply_noise(const BodyState& state, const NoiseSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.sigma == 0.0) return state;
  BodyState out = state;
  out.p += gaussian_vec3(rng, spec.sigma * spec.p_scale);
  const Vec3 euler = gaussian_vec3(rng, spec.sigma * spec.q_scale);
  out.q = quat_mul(state.q, quat_from_euler_delta(euler));
  out.v += gaussian_vec3(rng, spec.sigma * spec.v_scale);
  out.omega += gaussian_vec3(rng, spec.sigma * spec.omega_scale);
  return out;
}

BodyState predict_next_full(const BodyState& state, const std::array<double, 4>& motor_thrusts,
                            const CtbrAction& action, const QuadrotorParams& params,
                            const SimOptions& options) {
  SimState sim;
  sim.body = state;
  sim.motor_thrusts = motor_thrusts;
  sim.floor_z = -std::numeric_limits<double>::infinity();
  // No disturbance is drawn, so this generator is never advanced.
  Rng unused(0);
  return control_step(sim, params, action, DisturbanceConfig{}, unused, options).body;
}

std::string to_string(InternalModelKind k) {
  return k == InternalModelKind::simplified ? "simplified" : "full";
}

InternalModelKind internal_model_from_string(const std::string& s) {
  if (s == "simplified") return InternalModelKind::simplified;
  if (s == "full") return InternalModelKind::full;
  throw std::invalid_argument("unknown internal model: " + s);
}

InternalModel::InternalModel(InternalModelKind kind, const QuadrotorParams& params,
                             const NoiseSpec& noise, const SimOptions& options)
    : kind_(kind), params_(params), noise_(noise), options_(options) {
  params_.validate();
  noise_.validate();
}

BodyState InternalModel::predict(const BodyState& state,
                                 const std::array<double, 4>& motor_fraction,
                                 const CtbrAction& action, Rng& rng) const {
  const bool noisy_in = noise_.target == NoiseTarget::input && noise_.sigma > 0.0;
  const bool noisy_out = noise_.target == NoiseTarget::output && noise_.sigma > 0.0;
  const BodyState input = noisy_in ? apply_noise(state, noise_, rng) : state;

  BodyState predicted;
  if (kind_ == InternalModelKind::simplified) {
    const double thrust = action.thrust_norm() * params_.max_collective_thrust();
    const AccelCommand cmd =
        ctbr_to_accel(input, thrust, action.bodyrate_cmd(), params_.mass, options_.control_dt);
    predicted = predict_next(input, cmd, options_.control_dt);
  } else {
    std::array<double, 4> motors{};
    for (int i = 0; i < 4; ++i) motors[i] = motor_fraction[i] * params_.max_rotor_thrust();
    predicted = predict_next_full(input, motors, action, params_, options_);
  }
  return noisy_out ? apply_noise(predicted, noise_, rng) : predicted;
}

}  // namespace nimc
