#include "nimc/env.hpp"

#include <cmath>
#include <stdexcept>

namespace nimc {

double reward(const BodyState& state, const Vec3& ref_p, const CtbrAction& action,
              const CtbrAction& last_action, bool crashed) {
  const auto a = action.as_array();
  const auto b = last_action.as_array();
  double da = 0.0;
  for (int i = 0; i < 4; ++i) da += (a[i] - b[i]) * (a[i] - b[i]);
  double r = std::exp(-(state.p - ref_p).norm()) - 0.01 * da - 0.001 * state.omega.squared_norm();
  if (!std::isfinite(r)) r = 0.0;
  return crashed ? r + kCrashPenalty : r;
}

void EnvConfig::validate() const {
  obs.validate();
  noise.validate();
  if (kinds.empty() && !hover) throw std::invalid_argument("env: no trajectory kinds");
  if (!(disturbance_prob >= 0.0 && disturbance_prob <= 1.0)) {
    throw std::invalid_argument("env: disturbance_prob must be in [0, 1]");
  }
  if (max_episode_steps < 1) throw std::invalid_argument("env: max_episode_steps must be >= 1");
  if (!(sim.control_dt > 0.0) || sim.substeps < 1) throw std::invalid_argument("env: bad sim options");
}

EpisodeSetup sample_episode(const EnvConfig& cfg, Rng& rng) {
  EpisodeSetup s;
  s.hover = cfg.hover;
  if (cfg.hover) {
    s.params = nominal_params();
    s.disturbed = false;
    s.trajectory.kind = TrajectoryKind::zigzag;
    return s;
  }
  s.params = sample_params(ranges_for(cfg.preset), rng);
  const auto k = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(cfg.kinds.size())));
  s.trajectory = sample_trajectory_spec(cfg.kinds[std::min(k, cfg.kinds.size() - 1)], rng);
  s.disturbed = uniform(rng, 0.0, 1.0) < cfg.disturbance_prob;
  return s;
}

TrackingEnv::TrackingEnv(const EnvConfig& cfg, std::uint64_t seed, std::uint64_t index)
    : cfg_(cfg),
      setup_rng_(make_stream(seed, (index << 4) | 1)),
      sim_rng_(make_stream(seed, (index << 4) | 2)),
      model_rng_(make_stream(seed, (index << 4) | 3)),
      model_(cfg.model_kind, nominal_params(), cfg.noise, cfg.sim),
      history_(history_capacity(cfg.obs)) {
  cfg_.validate();
}

void TrackingEnv::reset() { reset(sample_episode(cfg_, setup_rng_)); }

void TrackingEnv::reset(const EpisodeSetup& setup) {
  setup_ = setup;
  const double episode_time = cfg_.max_episode_steps * cfg_.sim.control_dt;
  traj_ = setup.hover ? make_hover(kFlightCenter, episode_time) : setup.trajectory.build();
  dist_ = setup.disturbed ? cfg_.disturbance : DisturbanceConfig{};
  sim_ = nimc::reset(setup_.params, traj_.position(0.0), setup_rng_);
  t_ = 0.0;
  steps_ = 0;
  last_action_ = CtbrAction(nominal_params().hover_thrust_norm(), {});
  pred_err_ = {};
  history_.clear();
  needs_reset_ = false;
}

std::array<double, 4> TrackingEnv::motor_fraction() const {
  const double m = setup_.params.max_rotor_thrust();
  std::array<double, 4> f{};
  for (int i = 0; i < 4; ++i) f[i] = sim_.motor_thrusts[i] / m;
  return f;
}

Observation TrackingEnv::observe() const {
  return build_observation(cfg_.obs, sim_.body, traj_, t_, last_action_, pred_err_, history_);
}

StepResult TrackingEnv::step(const CtbrAction& action) {
  if (needs_reset_) throw std::logic_error("TrackingEnv::step called before reset");
  StepResult r;
  r.state = sim_.body;
  r.action = action;
  r.disturbance = sim_.disturbance_accel;
  if (history_.capacity() > 0) {
    history_.push(make_tuple(sim_.body, traj_.position(t_), last_action_, pred_err_, cfg_.obs.feedback));
  }
  const auto fraction = motor_fraction();

  sim_ = control_step(sim_, setup_.params, action, dist_, sim_rng_, cfg_.sim);
  t_ += cfg_.sim.control_dt;
  ++steps_;

  const BodyState predicted = model_.predict(r.state, fraction, action, model_rng_);
  r.pred_err = predictive_error(predicted, sim_.body);
  r.next_state = sim_.body;
  r.ref_p = traj_.position(t_);
  const bool crashed = check_crash(sim_, r.ref_p, cfg_.crash);
  sim_.crashed = crashed;
  r.reward = reward(sim_.body, r.ref_p, action, last_action_, crashed);

  last_action_ = action;
  pred_err_ = r.pred_err;
  r.terminated = crashed;
  r.truncated = !crashed && (steps_ >= cfg_.max_episode_steps || t_ >= traj_.duration() - 1e-9);
  r.done = r.terminated || r.truncated;
  needs_reset_ = r.done;
  return r;
}

}  // namespace nimc
