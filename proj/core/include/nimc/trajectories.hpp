#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "nimc/random.hpp"
#include "nimc/so3.hpp"

namespace nimc {

enum class TrajectoryKind { circle, chained_poly, star5, zigzag };
std::string to_string(TrajectoryKind k);
TrajectoryKind trajectory_kind_from_string(const std::string& s);

enum class Feasibility { smooth, infeasible };

/// Center of the flight volume; every generator works around it.
inline constexpr Vec3 kFlightCenter{0.0, 0.0, 1.5};

struct RefSample {
  Vec3 p;
  Vec3 v;
};

/// Immutable reference path. Smooth kinds carry analytic velocities;
/// infeasible kinds are constant-speed polylines.
class ReferenceTrajectory {
 public:
  struct Circle {
    Vec3 center;
    double radius = 1.0;
    double period = 6.0;
    double phase = 0.0;
  };
  /// Per-axis quintic coefficients c0..c5 in local time.
  struct QuinticSegment {
    std::array<std::array<double, 6>, 3> coeffs{};
    double t0 = 0.0;
    double duration = 1.0;
  };
  struct Polyline {
    std::vector<Vec3> vertices;
    std::vector<double> times;  // arrival time at each vertex, times[0] = 0
  };

  static ReferenceTrajectory circle(const Circle& c, double duration);
  static ReferenceTrajectory chained(std::vector<QuinticSegment> segments);
  static ReferenceTrajectory polyline(TrajectoryKind kind, Polyline line);

  TrajectoryKind kind() const { return kind_; }
  Feasibility feasibility() const {
    return (kind_ == TrajectoryKind::circle || kind_ == TrajectoryKind::chained_poly)
               ? Feasibility::smooth
               : Feasibility::infeasible;
  }
  double duration() const { return duration_; }

  /// Sample at t, clamped to [0, duration].
  RefSample sample(double t) const;
  Vec3 position(double t) const { return sample(t).p; }

  const Polyline& polyline_data() const { return line_; }
  const std::vector<QuinticSegment>& segments() const { return segments_; }

 private:
  TrajectoryKind kind_ = TrajectoryKind::circle;
  double duration_ = 0.0;
  Circle circle_;
  std::vector<QuinticSegment> segments_;
  Polyline line_;
};

/// Horizontal circle at the flight altitude with a random phase.
ReferenceTrajectory make_circle(double radius, double period, Rng& rng, double duration = 20.0);

/// Half-extent of the box the chained polynomial stays inside.
inline constexpr double kPolyBoxHalfExtent = 1.0;

/// C2 chain of per-axis quintics through random junctions inside the box.
ReferenceTrajectory make_chained_poly(int n_segments, double segment_duration, Rng& rng);

/// Pentagram through 5 vertices on a horizontal circle, traversed `loops`
/// times at constant speed.
ReferenceTrajectory make_star5(double radius, double edge_speed, int loops = 2);

struct LengthRange {
  double lo = 0.5;
  double hi = 1.5;
};

inline constexpr double kZigzagMinTurn = 30.0 * std::numbers::pi / 180.0;
inline constexpr Vec3 kZigzagHalfExtent{1.5, 1.5, 0.75};

/// Random straight legs at constant speed with corners of at least 30 deg,
/// confined to a box around the flight center.
ReferenceTrajectory make_zigzag(int n_legs, LengthRange leg_length, double speed, Rng& rng);

/// Constant reference held at `point` (a degenerate polyline).
ReferenceTrajectory make_hover(const Vec3& point, double duration);

/// H positions p_ref(t + i*dt) - p_current, i = 1..H, clamped at the end.
std::vector<Vec3> future_window(const ReferenceTrajectory& traj, double t, const Vec3& p_current,
                                int horizon, double dt);

/// Serializable recipe for a trajectory: kind, seed, numeric parameters.
struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::zigzag;
  std::uint64_t seed = 0;
  std::map<std::string, double> params;

  ReferenceTrajectory build() const;
  std::string to_json() const;
  static TrajectorySpec from_json(const std::string& text);
};

/// Draws concrete parameters from the default scales for `kind`.
TrajectorySpec sample_trajectory_spec(TrajectoryKind kind, Rng& rng);

}  // namespace nimc
