#include "nimc/quadrotor_sim.hpp"

#include <cmath>
#include <stdexcept>

namespace nimc {

namespace {

constexpr std::array<double, 4> kSpin{1.0, -1.0, 1.0, -1.0};

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string("quadrotor parameter must be positive: ") + name);
  }
}

// Rotor positions of an X frame, arm at 45 degrees.
std::array<Vec3, 4> rotor_positions(double arm) {
  const double r = arm / std::sqrt(2.0);
  return {Vec3{r, r, 0.0}, Vec3{-r, r, 0.0}, Vec3{-r, -r, 0.0}, Vec3{r, -r, 0.0}};
}

// 13-dimensional state derivative container.
struct Deriv {
  Vec3 p;
  std::array<double, 4> q{};
  Vec3 v;
  Vec3 w;
};

struct RawState {
  Vec3 p;
  std::array<double, 4> q{};
  Vec3 v;
  Vec3 w;
};

RawState to_raw(const BodyState& s) { return {s.p, s.q.coeffs(), s.v, s.omega}; }

BodyState from_raw(const RawState& r) {
  return {r.p, Quaternion(r.q[0], r.q[1], r.q[2], r.q[3]), r.v, r.w};
}

RawState axpy(const RawState& s, const Deriv& d, double h) {
  RawState out = s;
  out.p += d.p * h;
  for (int i = 0; i < 4; ++i) out.q[i] += d.q[i] * h;
  out.v += d.v * h;
  out.w += d.w * h;
  return out;
}

std::array<double, 4> quat_rate(const std::array<double, 4>& q, const Vec3& w) {
  // 0.5 * q (x) [0, w]
  return {0.5 * (-q[1] * w.x - q[2] * w.y - q[3] * w.z),
          0.5 * (q[0] * w.x + q[2] * w.z - q[3] * w.y),
          0.5 * (q[0] * w.y - q[1] * w.z + q[3] * w.x),
          0.5 * (q[0] * w.z + q[1] * w.y - q[2] * w.x)};
}

Vec3 rotate_raw(const std::array<double, 4>& q, const Vec3& v) {
  // Unnormalized quaternion: rotate with R(q)/|q|^2 so RK4 stages stay smooth.
  const double n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
  const Vec3 u{q[1], q[2], q[3]};
  const Vec3 t = 2.0 * u.cross(v);
  return (v * n2 + q[0] * t + u.cross(t)) / n2;
}

template <typename DerivFn>
RawState rk4(const RawState& s, double h, double t0, DerivFn&& f) {
  const Deriv k1 = f(s, t0);
  const Deriv k2 = f(axpy(s, k1, 0.5 * h), t0 + 0.5 * h);
  const Deriv k3 = f(axpy(s, k2, 0.5 * h), t0 + 0.5 * h);
  const Deriv k4 = f(axpy(s, k3, h), t0 + h);
  RawState out = s;
  out.p += (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p) * (h / 6.0);
  for (int i = 0; i < 4; ++i) {
    out.q[i] += (k1.q[i] + 2.0 * k2.q[i] + 2.0 * k3.q[i] + k4.q[i]) * (h / 6.0);
  }
  out.v += (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v) * (h / 6.0);
  out.w += (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w) * (h / 6.0);
  return out;
}

Vec3 clamp_vec(const Vec3& v, double bound) {
  return {std::clamp(v.x, -bound, bound), std::clamp(v.y, -bound, bound),
          std::clamp(v.z, -bound, bound)};
}

}  // namespace

QuadrotorParams QuadrotorParams::make(double mass, double arm_length, double width_ratio,
                                      double height_ratio, double motor_force_const,
                                      double thrust_to_weight, double motor_drag_const,
                                      double motor_time_const, const Vec3& p_gains) {
  QuadrotorParams p;
  p.mass = mass;
  p.arm_length = arm_length;
  p.width_ratio = width_ratio;
  p.height_ratio = height_ratio;
  p.motor_force_const = motor_force_const;
  p.thrust_to_weight = thrust_to_weight;
  p.motor_drag_const = motor_drag_const;
  p.motor_time_const = motor_time_const;
  p.p_gains = p_gains;
  p.validate();

  // Uniform box of size (width_ratio*L, L, height_ratio*L).
  const double a = width_ratio * arm_length;
  const double b = arm_length;
  const double c = height_ratio * arm_length;
  p.inertia = {mass * (b * b + c * c) / 12.0, mass * (a * a + c * c) / 12.0,
               mass * (a * a + b * b) / 12.0};

  const auto pos = rotor_positions(arm_length);
  for (int i = 0; i < 4; ++i) {
    p.mixer[0][i] = 1.0;
    p.mixer[1][i] = pos[i].y;
    p.mixer[2][i] = -pos[i].x;
    p.mixer[3][i] = motor_drag_const * kSpin[i];
  }
  // Rows of the mixer are mutually orthogonal, so the inverse is a scaled
  // transpose.
  for (int r = 0; r < 4; ++r) {
    double row_sq = 0.0;
    for (int i = 0; i < 4; ++i) row_sq += p.mixer[r][i] * p.mixer[r][i];
    for (int i = 0; i < 4; ++i) p.allocator[i][r] = p.mixer[r][i] / row_sq;
  }
  return p;
}

void QuadrotorParams::validate() const {
  require_positive(mass, "mass");
  require_positive(arm_length, "arm_length");
  require_positive(width_ratio, "width_ratio");
  require_positive(height_ratio, "height_ratio");
  require_positive(motor_force_const, "motor_force_const");
  require_positive(thrust_to_weight, "thrust_to_weight");
  require_positive(motor_drag_const, "motor_drag_const");
  require_positive(motor_time_const, "motor_time_const");
  require_positive(p_gains.x, "p_gains.x");
  require_positive(p_gains.y, "p_gains.y");
  require_positive(p_gains.z, "p_gains.z");
  if (motor_time_const >= 1.0) {
    throw std::invalid_argument("motor_time_const must be a lag factor in (0, 1)");
  }
  if (thrust_to_weight <= 1.0) {
    throw std::invalid_argument("thrust_to_weight must exceed 1 to hover");
  }
}

double QuadrotorParams::rotor_speed(double thrust) const {
  return std::sqrt(std::max(0.0, thrust) / motor_force_const);
}

std::array<double, 4> QuadrotorParams::mix(const std::array<double, 4>& thrusts) const {
  std::array<double, 4> out{};
  for (int r = 0; r < 4; ++r) {
    for (int i = 0; i < 4; ++i) out[r] += mixer[r][i] * thrusts[i];
  }
  return out;
}

std::array<double, 4> QuadrotorParams::allocate(double collective, const Vec3& torque) const {
  const std::array<double, 4> wrench{collective, torque.x, torque.y, torque.z};
  std::array<double, 4> out{};
  for (int i = 0; i < 4; ++i) {
    for (int r = 0; r < 4; ++r) out[i] += allocator[i][r] * wrench[r];
  }
  return out;
}

QuadrotorParams nominal_params() {
  const auto r = RandomizationRanges::train();
  return QuadrotorParams::make(r.mass.mid(), r.arm_length.mid(), r.width_ratio.mid(),
                               r.height_ratio.mid(), r.motor_force_const.mid(),
                               r.thrust_to_weight.mid(), r.motor_drag_const.mid(),
                               r.motor_time_const.mid(), kNominalPGains);
}

RandomizationRanges RandomizationRanges::train() {
  return {{0.142, 0.950}, {0.046, 0.200}, {1.0, 1.414},     {0.577, 1.0},  {1.15e-7, 7.64e-6},
          {2.0, 3.5},     {0.0041, 0.0168}, {0.3, 0.5}, {-0.3, 0.3}};
}

RandomizationRanges RandomizationRanges::eval() {
  return {{0.114, 1.140}, {0.037, 0.240},   {0.852, 1.732}, {0.268, 1.414}, {9.16e-8, 9.17e-6},
          {1.6, 4.2},     {0.0033, 0.0201}, {0.24, 0.6},    {-0.5, 0.5}};
}

RandomizationRanges RandomizationRanges::fixed(const QuadrotorParams& p) {
  RandomizationRanges r;
  r.mass = {p.mass, p.mass};
  r.arm_length = {p.arm_length, p.arm_length};
  r.width_ratio = {p.width_ratio, p.width_ratio};
  r.height_ratio = {p.height_ratio, p.height_ratio};
  r.motor_force_const = {p.motor_force_const, p.motor_force_const};
  r.thrust_to_weight = {p.thrust_to_weight, p.thrust_to_weight};
  r.motor_drag_const = {p.motor_drag_const, p.motor_drag_const};
  r.motor_time_const = {p.motor_time_const, p.motor_time_const};
  // Gains are stored relative to nominal; a fixed range only reproduces
  // per-axis gains when all axes share the same relative offset.
  const double off = p.p_gains.x / kNominalPGains.x - 1.0;
  r.p_gain_offset = {off, off};
  return r;
}

void RandomizationRanges::validate() const {
  for (const Interval* i : {&mass, &arm_length, &width_ratio, &height_ratio, &motor_force_const,
                            &thrust_to_weight, &motor_drag_const, &motor_time_const,
                            &p_gain_offset}) {
    if (!(i->lo <= i->hi)) throw std::invalid_argument("randomization interval has lo > hi");
  }
  if (p_gain_offset.lo <= -1.0) throw std::invalid_argument("p gain offset must exceed -1");
}

RandomizationRanges ranges_for(Preset preset) {
  return preset == Preset::train ? RandomizationRanges::train() : RandomizationRanges::eval();
}

std::string to_string(Preset preset) { return preset == Preset::train ? "train" : "eval"; }

Preset preset_from_string(const std::string& s) {
  if (s == "train") return Preset::train;
  if (s == "eval") return Preset::eval;
  throw std::invalid_argument("unknown preset: " + s);
}

QuadrotorParams sample_params(const RandomizationRanges& ranges, Rng& rng) {
  ranges.validate();
  auto draw = [&rng](const Interval& i) { return i.lo == i.hi ? i.lo : uniform(rng, i.lo, i.hi); };
  const double mass = draw(ranges.mass);
  const double arm = draw(ranges.arm_length);
  const double wr = draw(ranges.width_ratio);
  const double hr = draw(ranges.height_ratio);
  const double kf = draw(ranges.motor_force_const);
  const double twr = draw(ranges.thrust_to_weight);
  const double kappa = draw(ranges.motor_drag_const);
  const double tau = draw(ranges.motor_time_const);
  const double gx = draw(ranges.p_gain_offset);
  const double gy = draw(ranges.p_gain_offset);
  const double gz = draw(ranges.p_gain_offset);
  const Vec3 gains{kNominalPGains.x * (1.0 + gx), kNominalPGains.y * (1.0 + gy),
                   kNominalPGains.z * (1.0 + gz)};
  return QuadrotorParams::make(mass, arm, wr, hr, kf, twr, kappa, tau, gains);
}

Vec3 brownian_disturbance_step(const Vec3& current, const DisturbanceConfig& cfg, Rng& rng) {
  switch (cfg.mode) {
    case DisturbanceConfig::Mode::none:
      return {};
    case DisturbanceConfig::Mode::constant:
      return clamp_vec(current, cfg.bound);
    case DisturbanceConfig::Mode::brownian:
      return clamp_vec(current + gaussian_vec3(rng, cfg.step_std), cfg.bound);
  }
  return {};
}

BodyState integrate_rigid_body(const BodyState& s, const std::array<double, 4>& thrusts,
                               const Vec3& disturbance, const QuadrotorParams& params, double dt,
                               int steps) {
  const auto wrench = params.mix(thrusts);
  const Vec3 torque{wrench[1], wrench[2], wrench[3]};
  const Vec3& J = params.inertia;
  const Vec3 gravity{0.0, 0.0, -kGravity};
  auto f = [&](const RawState& x, double) {
    Deriv d;
    d.p = x.v;
    d.q = quat_rate(x.q, x.w);
    d.v = rotate_raw(x.q, Vec3{0.0, 0.0, wrench[0] / params.mass}) + gravity + disturbance;
    const Vec3 h = J.cwise(x.w);
    const Vec3 net = torque - x.w.cross(h);
    d.w = {net.x / J.x, net.y / J.y, net.z / J.z};
    return d;
  };
  RawState x = to_raw(s);
  const double h = dt / steps;
  for (int i = 0; i < steps; ++i) {
    x = rk4(x, h, i * h, f);
    const BodyState normalized = from_raw(x);
    x.q = normalized.q.coeffs();
  }
  return from_raw(x);
}

namespace {

SimState ideal_step(const SimState& sim, const QuadrotorParams& params, const CtbrAction& action,
                    const SimOptions& options) {
  const double T = options.control_dt;
  const double collective = action.thrust_norm() * params.max_collective_thrust();
  const Vec3 lin_acc = rotate_vector(sim.body.q, Vec3{0.0, 0.0, collective / params.mass}) +
                       Vec3{0.0, 0.0, -kGravity} + sim.disturbance_accel;
  const Vec3 w0 = sim.body.omega;
  const Vec3 alpha = (action.bodyrate_cmd() - w0) / T;
  auto f = [&](const RawState& x, double) {
    Deriv d;
    d.p = x.v;
    d.q = quat_rate(x.q, x.w);
    d.v = lin_acc;
    d.w = alpha;
    return d;
  };
  RawState x = to_raw(sim.body);
  const double h = T / options.substeps;
  for (int i = 0; i < options.substeps; ++i) {
    x = rk4(x, h, i * h, f);
    x.q = from_raw(x).q.coeffs();
  }
  SimState out = sim;
  out.body = from_raw(x);
  // The ramp ends exactly on the command.
  out.body.omega = action.bodyrate_cmd();
  out.omega_dot = alpha;
  out.motor_thrusts.fill(0.25 * collective);
  return out;
}

}  // namespace

SimState control_step(const SimState& sim, const QuadrotorParams& params,
                      const CtbrAction& action, const DisturbanceConfig& disturbance, Rng& rng,
                      const SimOptions& options) {
  if (sim.crashed) throw std::logic_error("control_step called on a crashed state");
  if (!(options.control_dt > 0.0) || options.substeps < 1) {
    throw std::invalid_argument("invalid SimOptions");
  }

  SimState out;
  if (options.ideal_actuators) {
    out = ideal_step(sim, params, action, options);
  } else {
    out = sim;
    const double h = options.control_dt / options.substeps;
    const double lag = std::pow(params.motor_time_const, 1.0 / options.substeps);
    const double collective = action.thrust_norm() * params.max_collective_thrust();
    const double t_max = params.max_rotor_thrust();
    const Vec3& J = params.inertia;
    const Vec3 kd = params.p_gains * kDGainRatio;
    for (int i = 0; i < options.substeps; ++i) {
      const Vec3 w = out.body.omega;
      const Vec3 rate_err = action.bodyrate_cmd() - w;
      const Vec3 acc_des = params.p_gains.cwise(rate_err) - kd.cwise(out.omega_dot);
      const Vec3 torque = J.cwise(acc_des) + w.cross(J.cwise(w));
      auto target = params.allocate(collective, torque);
      for (int m = 0; m < 4; ++m) {
        const double cmd = std::clamp(target[m], 0.0, t_max);
        out.motor_thrusts[m] = std::clamp(lag * out.motor_thrusts[m] + (1.0 - lag) * cmd, 0.0,
                                          t_max);
      }
      out.body = integrate_rigid_body(out.body, out.motor_thrusts, out.disturbance_accel, params,
                                      h, 1);
      out.omega_dot = (out.body.omega - w) / h;
    }
  }
  out.t = sim.t + options.control_dt;
  out.disturbance_accel = brownian_disturbance_step(sim.disturbance_accel, disturbance, rng);
  return out;
}

bool check_crash(const SimState& sim, const Vec3& p_ref, const CrashLimits& limits) {
  if (!sim.body.valid()) return true;
  if ((sim.body.p - p_ref).norm() > limits.max_position_error) return true;
  // Tilt test on roll/pitch; body z pointing down also counts.
  const Vec3 e = euler_zyx(sim.body.q);
  if (std::abs(e.x) > limits.max_tilt || std::abs(e.y) > limits.max_tilt) return true;
  if (sim.body.p.z < sim.floor_z) return true;
  return false;
}

SimState reset(const QuadrotorParams& params, const Vec3& ref_point, Rng& rng) {
  SimState s;
  const double dp = kResetPositionOffset;
  const double da = kResetAttitudeOffset;
  const double px = uniform(rng, -dp, dp);
  const double py = uniform(rng, -dp, dp);
  const double pz = uniform(rng, -dp, dp);
  const double ax = uniform(rng, -da, da);
  const double ay = uniform(rng, -da, da);
  const double az = uniform(rng, -da, da);
  s.body.p = ref_point + Vec3{px, py, pz};
  s.body.q = quat_from_euler_delta({ax, ay, az});
  s.motor_thrusts.fill(0.25 * params.mass * kGravity);
  return s;
}

}  // namespace nimc
