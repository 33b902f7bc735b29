#include "nimc/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nimc {

L1EstimatorState l1_update(const L1EstimatorState& est, const Vec3& measured_v,
                           const Vec3& commanded_accel, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("l1_update: dt must be positive");
  L1EstimatorState out = est;
  if (!est.initialized) {
    out.predicted_v = measured_v;
    out.prev_error = {};
    out.initialized = true;
    return out;
  }
  const double k = est.adaptation_gain;
  const double decay = 1.0 - k * dt;
  // Predictor over the interval that just ended.
  out.predicted_v = est.predicted_v + (commanded_accel + est.sigma_hat - k * est.prev_error) * dt;
  const Vec3 err = out.predicted_v - measured_v;
  // err = decay * prev_error + (sigma_hat - d) dt  =>  d, then pick the
  // sigma_hat that zeroes the error one interval ahead.
  const Vec3 d_est = est.sigma_hat - (err - decay * est.prev_error) / dt;
  out.sigma_hat = d_est - decay * err / dt;
  out.prev_error = err;
  const double alpha = 1.0 - std::exp(-est.filter_cutoff * dt);
  out.d_hat = est.d_hat + alpha * (out.sigma_hat - est.d_hat);
  return out;
}

Vec3 commanded_accel(const BodyState& state, const CtbrAction& action,
                     const QuadrotorParams& model) {
  const double acc = action.thrust_norm() * kGravity * model.thrust_to_weight;
  return state.q.body_z() * acc + Vec3{0.0, 0.0, -kGravity};
}

CtbrAction pid_ctbr(const BodyState& state, const Vec3& ref_p, const Vec3& ref_v,
                    const Vec3& d_hat, const PidGains& gains, const QuadrotorParams& model) {
  Vec3 a_des = gains.kp_pos * (ref_p - state.p) + gains.kd_pos * (ref_v - state.v) +
               Vec3{0.0, 0.0, kGravity} - d_hat;
  if (!a_des.all_finite()) a_des = {0.0, 0.0, kGravity};
  const Vec3 bz = state.q.body_z();
  const double thrust_norm = a_des.dot(bz) / (kGravity * model.thrust_to_weight);

  const double n = a_des.norm();
  const Vec3 z_d = n > 1e-6 ? a_des / n : Vec3{0.0, 0.0, 1.0};
  Vec3 y_d = z_d.cross(Vec3{1.0, 0.0, 0.0});
  if (y_d.norm() < 1e-6) y_d = z_d.cross(Vec3{0.0, 1.0, 0.0}).cross(z_d);
  y_d = y_d / y_d.norm();
  const Vec3 x_d = y_d.cross(z_d);
  const Quaternion q_d = quat_from_basis(x_d, y_d, z_d);
  const Vec3 att_err = log_map(quat_mul(state.q.conjugate(), q_d));
  return CtbrAction(thrust_norm, gains.k_att * att_err);
}

L1PidController::L1PidController(const QuadrotorParams& model, const PidGains& gains,
                                 double control_dt, bool use_l1)
    : model_(model), gains_(gains), dt_(control_dt), use_l1_(use_l1) {}

CtbrAction L1PidController::act(const BodyState& state, const Vec3& ref_p, const Vec3& ref_v) {
  if (use_l1_) est_ = l1_update(est_, state.v, has_last_ ? last_accel_ : Vec3{}, dt_);
  const CtbrAction a = pid_ctbr(state, ref_p, ref_v, use_l1_ ? est_.d_hat : Vec3{}, gains_, model_);
  last_accel_ = commanded_accel(state, a, model_);
  has_last_ = true;
  return a;
}

void MppiConfig::validate() const {
  if (n_samples < 1) throw std::invalid_argument("mppi: n_samples must be >= 1");
  if (horizon < 1) throw std::invalid_argument("mppi: horizon must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("mppi: temperature must be > 0");
  if (noise_thrust < 0.0 || noise_rate < 0.0) throw std::invalid_argument("mppi: noise < 0");
  if (w_position < 0.0 || w_velocity < 0.0 || w_action_rate < 0.0 || w_bodyrate < 0.0) {
    throw std::invalid_argument("mppi: cost weights must be >= 0");
  }
}

std::vector<double> mppi_weights(std::span<const double> costs, double temperature) {
  if (costs.empty()) return {};
  if (!(temperature > 0.0)) throw std::invalid_argument("mppi_weights: temperature must be > 0");
  const double baseline = *std::min_element(costs.begin(), costs.end());
  std::vector<double> w(costs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    w[i] = std::isfinite(costs[i]) ? std::exp(-(costs[i] - baseline) / temperature) : 0.0;
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

MppiController::MppiController(const QuadrotorParams& model, const MppiConfig& cfg,
                               std::uint64_t seed, const SimOptions& options)
    : model_(model), cfg_(cfg), options_(options), rng_(make_stream(seed, 0x6d707069)) {
  cfg_.validate();
  reset_plan();
}

void MppiController::reset_plan() {
  plan_.assign(cfg_.horizon, {model_.hover_thrust_norm(), 0.0, 0.0, 0.0});
  last_applied_ = {model_.hover_thrust_norm(), 0.0, 0.0, 0.0};
}

CtbrAction MppiController::plan(const SimState& sim, const ReferenceTrajectory& traj, double t,
                                const Vec3& d_hat) {
  const int K = cfg_.n_samples;
  const int H = cfg_.horizon;
  const double dt = options_.control_dt;

  // All noise is drawn up front so the rollouts are order independent.
  samples_.resize(static_cast<std::size_t>(K) * H * 4);
  for (int k = 0; k < K; ++k) {
    for (int h = 0; h < H; ++h) {
      double* u = &samples_[(static_cast<std::size_t>(k) * H + h) * 4];
      const double n0 = gaussian(rng_, cfg_.noise_thrust);
      const double n1 = gaussian(rng_, cfg_.noise_rate);
      const double n2 = gaussian(rng_, cfg_.noise_rate);
      const double n3 = gaussian(rng_, cfg_.noise_rate);
      const CtbrAction a(plan_[h][0] + n0,
                         {plan_[h][1] + n1, plan_[h][2] + n2, plan_[h][3] + n3});
      const auto arr = a.as_array();
      std::copy(arr.begin(), arr.end(), u);
    }
  }

  std::vector<RefSample> refs(H);
  for (int h = 0; h < H; ++h) refs[h] = traj.sample(t + (h + 1) * dt);

  SimState start = sim;
  start.crashed = false;
  start.disturbance_accel = d_hat;
  const DisturbanceConfig hold{DisturbanceConfig::Mode::constant,
                               std::numeric_limits<double>::infinity(), 0.0};
  Rng unused(0);

  costs_.assign(K, 0.0);
  for (int k = 0; k < K; ++k) {
    SimState s = start;
    double cost = 0.0;
    std::array<double, 4> prev = last_applied_;
    for (int h = 0; h < H; ++h) {
      const double* u = &samples_[(static_cast<std::size_t>(k) * H + h) * 4];
      const CtbrAction a(u[0], {u[1], u[2], u[3]});
      s = control_step(s, model_, a, hold, unused, options_);
      const Vec3 ep = s.body.p - refs[h].p;
      const Vec3 ev = s.body.v - refs[h].v;
      double da = 0.0;
      for (int c = 0; c < 4; ++c) da += (u[c] - prev[c]) * (u[c] - prev[c]);
      cost += cfg_.w_position * ep.squared_norm() + cfg_.w_velocity * ev.squared_norm() +
              cfg_.w_action_rate * da + cfg_.w_bodyrate * s.body.omega.squared_norm();
      std::copy(u, u + 4, prev.begin());
    }
    costs_[k] = std::isfinite(cost) ? cost : std::numeric_limits<double>::infinity();
  }

  weights_ = mppi_weights(costs_, cfg_.temperature);
  std::vector<std::array<double, 4>> blended(H, {0.0, 0.0, 0.0, 0.0});
  for (int k = 0; k < K; ++k) {
    const double w = weights_[k];
    if (w == 0.0) continue;
    for (int h = 0; h < H; ++h) {
      const double* u = &samples_[(static_cast<std::size_t>(k) * H + h) * 4];
      for (int c = 0; c < 4; ++c) blended[h][c] += w * u[c];
    }
  }
  const CtbrAction first(blended[0][0], {blended[0][1], blended[0][2], blended[0][3]});
  // Warm start: shift by one step and repeat the tail.
  for (int h = 0; h + 1 < H; ++h) plan_[h] = blended[h + 1];
  plan_[H - 1] = blended[H - 1];
  last_applied_ = first.as_array();
  return first;
}

CtbrAction MppiController::blend_first_action(std::span<const double> costs,
                                              double temperature) const {
  const int H = cfg_.horizon;
  const auto w = mppi_weights(costs, temperature);
  std::array<double, 4> acc{};
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double* u = &samples_[k * H * 4];
    for (int c = 0; c < 4; ++c) acc[c] += w[k] * u[c];
  }
  return CtbrAction(acc[0], {acc[1], acc[2], acc[3]});
}

L1MppiController::L1MppiController(const QuadrotorParams& model, const MppiConfig& cfg,
                                   std::uint64_t seed, double control_dt, bool use_l1)
    : model_(model), mppi_(model, cfg, seed, SimOptions{control_dt, 4, false}), dt_(control_dt),
      use_l1_(use_l1) {}

CtbrAction L1MppiController::act(const SimState& sim, const ReferenceTrajectory& traj,
                                 double t) {
  if (use_l1_) est_ = l1_update(est_, sim.body.v, has_last_ ? last_accel_ : Vec3{}, dt_);
  const CtbrAction a = mppi_.plan(sim, traj, t, use_l1_ ? est_.d_hat : Vec3{});
  last_accel_ = commanded_accel(sim.body, a, model_);
  has_last_ = true;
  return a;
}

}  // namespace nimc
