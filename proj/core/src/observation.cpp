#include "nimc/observation.hpp"

#include "nimc/hash.hpp"

#include <sstream>
#include <stdexcept>

namespace nimc {

void ObservationConfig::validate() const {
  if (horizon < 7) {
    throw std::invalid_argument("observation horizon must be >= 7 (encoder receptive field)");
  }
  if (!(waypoint_dt > 0.0)) throw std::invalid_argument("waypoint_dt must be positive");
  if (history.short_len < 1) throw std::invalid_argument("short history length must be >= 1");
  if (history.long_history && history.long_len < 7) {
    throw std::invalid_argument("long history length must be >= 7");
  }
}

std::string ObservationConfig::canonical() const {
  std::ostringstream os;
  os << "obs/v1;H=" << horizon << ";dt=" << waypoint_dt << ";fb=" << (feedback ? 1 : 0)
     << ";S=" << history.short_len << ";long=" << (history.long_history ? 1 : 0)
     << ";L=" << history.long_len << ";tuple=" << kTupleSize;
  return os.str();
}

std::uint64_t ObservationConfig::hash() const {
  return fnv1a64(canonical());
}

void ObservationHistory::push(std::vector<double> tuple) {
  if (capacity_ == 0) return;
  tuples_.push_front(std::move(tuple));
  while (tuples_.size() > capacity_) tuples_.pop_back();
}

std::size_t history_capacity(const ObservationConfig& cfg) {
  if (cfg.history.long_history) return static_cast<std::size_t>(cfg.history.long_len);
  return static_cast<std::size_t>(cfg.history.short_len - 1);
}

std::vector<double> make_tuple(const BodyState& state, const Vec3& p_ref,
                               const CtbrAction& last_action, const PredictiveError& pred_err,
                               bool feedback) {
  std::vector<double> t(ObservationConfig::kTupleSize, 0.0);
  const Vec3 dp = state.p - p_ref;
  const auto& q = state.q.coeffs();
  const auto a = last_action.as_array();
  double core[ObservationConfig::kCoreSize] = {dp.x,      dp.y,      dp.z,       q[0], q[1],
                                               q[2],      q[3],      state.v.x,  state.v.y,
                                               state.v.z, state.omega.x, state.omega.y,
                                               state.omega.z};
  int i = 0;
  for (double c : core) t[i++] = c;
  for (double c : a) t[i++] = c;
  if (feedback) {
    for (double e : pred_err.flatten()) t[i++] = e;
  }
  return t;
}

Observation build_observation(const ObservationConfig& cfg, const BodyState& state,
                              const ReferenceTrajectory& traj, double t,
                              const CtbrAction& last_action, const PredictiveError& pred_err,
                              const ObservationHistory& past) {
  cfg.validate();
  Observation obs;
  obs.values.assign(static_cast<std::size_t>(cfg.size()), 0.0);
  const Vec3 p_ref = traj.position(t);
  const auto current = make_tuple(state, p_ref, last_action, pred_err, cfg.feedback);
  std::copy(current.begin(), current.end(), obs.values.begin());

  const int K = ObservationConfig::kTupleSize;
  if (!cfg.history.long_history) {
    for (int s = 1; s < cfg.short_len(); ++s) {
      const std::size_t idx = static_cast<std::size_t>(s - 1);
      if (idx >= past.size()) break;
      std::copy(past.at(idx).begin(), past.at(idx).end(), obs.values.begin() + s * K);
    }
  }

  const auto window = future_window(traj, t, state.p, cfg.horizon, cfg.waypoint_dt);
  for (int i = 0; i < cfg.horizon; ++i) {
    for (int c = 0; c < 3; ++c) obs.values[cfg.waypoint_offset() + 3 * i + c] = window[i][c];
  }

  if (cfg.history.long_history) {
    const int L = cfg.history.long_len;
    // Oldest first: slot L-1 holds the most recent past tuple.
    for (int j = 0; j < L; ++j) {
      const std::size_t idx = static_cast<std::size_t>(L - 1 - j);
      if (idx >= past.size()) continue;
      std::copy(past.at(idx).begin(), past.at(idx).end(),
                obs.values.begin() + cfg.long_offset() + j * K);
    }
  }
  return obs;
}

}  // namespace nimc
