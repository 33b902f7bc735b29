#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "nimc/body_state.hpp"
#include "nimc/ctbr.hpp"
#include "nimc/predictive_model.hpp"
#include "nimc/trajectories.hpp"

namespace nimc {

/// Short- and long-history options of the feedback structure.
///
/// `short_len` is the number of per-step tuples [core, action, predictive
/// error] in the observation, newest first; 1 is immediate feedback only.
/// With `long_history` the short block holds the current tuple and a
/// temporal-convolutional encoder summarizes the `long_len` previous tuples.
struct HistoryConfig {
  int short_len = 1;
  bool long_history = false;
  int long_len = 50;
};

/// Layout of the flat observation vector:
///   [tuple_0 .. tuple_{S-1} | waypoints (H x 3, time-major) | long history]
/// with tuple = [p - p_ref (3), q (4), v (3), omega (3), last action (4),
///               predictive error (10)] and long history (L x 27, oldest
///               first).
struct ObservationConfig {
  static constexpr int kCoreSize = 13;
  static constexpr int kActionSize = 4;
  static constexpr int kTupleSize = kCoreSize + kActionSize + PredictiveError::kSize;

  int horizon = 10;
  double waypoint_dt = 0.02;
  /// When false the predictive-error slice is zero-filled; shape is kept.
  bool feedback = true;
  HistoryConfig history;

  void validate() const;

  int short_len() const { return history.long_history ? 1 : history.short_len; }
  int tuple_block_size() const { return short_len() * kTupleSize; }
  int waypoint_offset() const { return tuple_block_size(); }
  int waypoint_size() const { return 3 * horizon; }
  int long_offset() const { return waypoint_offset() + waypoint_size(); }
  int long_size() const { return history.long_history ? history.long_len * kTupleSize : 0; }
  int size() const { return long_offset() + long_size(); }
  /// Offset of the current step's predictive error.
  static constexpr int pred_err_offset() { return kCoreSize + kActionSize; }

  /// Canonical text form; hashed into checkpoints.
  std::string canonical() const;
  std::uint64_t hash() const;
};

struct Observation {
  std::vector<double> values;
};

/// Rolling store of past per-step tuples, newest at the front.
class ObservationHistory {
 public:
  explicit ObservationHistory(std::size_t capacity = 0) : capacity_(capacity) {}

  void push(std::vector<double> tuple);
  void clear() { tuples_.clear(); }
  std::size_t size() const { return tuples_.size(); }
  /// i = 0 is the most recent past tuple.
  const std::vector<double>& at(std::size_t i) const { return tuples_[i]; }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<std::vector<double>> tuples_;
};

/// Number of past tuples an observation with `cfg` reads.
std::size_t history_capacity(const ObservationConfig& cfg);

/// Per-step tuple [p - p_ref, q, v, omega, last action, predictive error].
std::vector<double> make_tuple(const BodyState& state, const Vec3& p_ref,
                               const CtbrAction& last_action, const PredictiveError& pred_err,
                               bool feedback);

/// Assemble the observation at time t; missing history is zero-filled.
Observation build_observation(const ObservationConfig& cfg, const BodyState& state,
                              const ReferenceTrajectory& traj, double t,
                              const CtbrAction& last_action, const PredictiveError& pred_err,
                              const ObservationHistory& past);

}  // namespace nimc
