#include "nimc/trajectories.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace nimc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::array<double, 6> quintic(double p0, double v0, double a0, double p1, double v1, double a1,
                              double T) {
  const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
  const double c3 = (20.0 * (p1 - p0) - (8.0 * v1 + 12.0 * v0) * T - (3.0 * a0 - a1) * T2) /
                    (2.0 * T3);
  const double c4 = (30.0 * (p0 - p1) + (14.0 * v1 + 16.0 * v0) * T + (3.0 * a0 - 2.0 * a1) * T2) /
                    (2.0 * T4);
  const double c5 = (12.0 * (p1 - p0) - (6.0 * v1 + 6.0 * v0) * T - (a0 - a1) * T2) / (2.0 * T5);
  return {p0, v0, 0.5 * a0, c3, c4, c5};
}

double poly_eval(const std::array<double, 6>& c, double t) {
  return ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0];
}

double poly_deriv(const std::array<double, 6>& c, double t) {
  return (((5.0 * c[5] * t + 4.0 * c[4]) * t + 3.0 * c[3]) * t + 2.0 * c[2]) * t + c[1];
}

bool in_box(const Vec3& p, const Vec3& center, const Vec3& half) {
  const Vec3 d = p - center;
  constexpr double slack = 1e-12;
  return std::abs(d.x) <= half.x + slack && std::abs(d.y) <= half.y + slack &&
         std::abs(d.z) <= half.z + slack;
}

double param(const std::map<std::string, double>& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw std::invalid_argument("trajectory spec missing parameter: " + key);
  return it->second;
}

}  // namespace

std::string to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::circle:
      return "circle";
    case TrajectoryKind::chained_poly:
      return "chained_poly";
    case TrajectoryKind::star5:
      return "star5";
    case TrajectoryKind::zigzag:
      return "zigzag";
  }
  return "circle";
}

TrajectoryKind trajectory_kind_from_string(const std::string& s) {
  if (s == "circle") return TrajectoryKind::circle;
  if (s == "chained_poly") return TrajectoryKind::chained_poly;
  if (s == "star5") return TrajectoryKind::star5;
  if (s == "zigzag") return TrajectoryKind::zigzag;
  throw std::invalid_argument("unknown trajectory kind: " + s);
}

ReferenceTrajectory ReferenceTrajectory::circle(const Circle& c, double duration) {
  if (!(c.radius > 0.0) || !(c.period > 0.0) || !(duration > 0.0)) {
    throw std::invalid_argument("circle needs positive radius, period and duration");
  }
  ReferenceTrajectory r;
  r.kind_ = TrajectoryKind::circle;
  r.circle_ = c;
  r.duration_ = duration;
  return r;
}

ReferenceTrajectory ReferenceTrajectory::chained(std::vector<QuinticSegment> segments) {
  if (segments.empty()) throw std::invalid_argument("chained polynomial needs a segment");
  ReferenceTrajectory r;
  r.kind_ = TrajectoryKind::chained_poly;
  r.duration_ = segments.back().t0 + segments.back().duration;
  r.segments_ = std::move(segments);
  return r;
}

ReferenceTrajectory ReferenceTrajectory::polyline(TrajectoryKind kind, Polyline line) {
  if (line.vertices.size() < 2 || line.vertices.size() != line.times.size()) {
    throw std::invalid_argument("polyline needs at least two timed vertices");
  }
  ReferenceTrajectory r;
  r.kind_ = kind;
  r.duration_ = line.times.back();
  r.line_ = std::move(line);
  return r;
}

RefSample ReferenceTrajectory::sample(double t) const {
  t = std::clamp(t, 0.0, duration_);
  switch (kind_) {
    case TrajectoryKind::circle: {
      const double w = kTwoPi / circle_.period;
      const double a = circle_.phase + w * t;
      const double r = circle_.radius;
      return {circle_.center + Vec3{r * std::cos(a), r * std::sin(a), 0.0},
              Vec3{-r * w * std::sin(a), r * w * std::cos(a), 0.0}};
    }
    case TrajectoryKind::chained_poly: {
      auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                                 [](double v, const QuinticSegment& s) { return v < s.t0; });
      const QuinticSegment& s = (it == segments_.begin()) ? segments_.front() : *std::prev(it);
      const double local = std::min(t - s.t0, s.duration);
      RefSample out;
      for (int ax = 0; ax < 3; ++ax) {
        out.p[ax] = poly_eval(s.coeffs[ax], local);
        out.v[ax] = poly_deriv(s.coeffs[ax], local);
      }
      return out;
    }
    case TrajectoryKind::star5:
    case TrajectoryKind::zigzag: {
      const auto& times = line_.times;
      auto it = std::upper_bound(times.begin(), times.end(), t);
      std::size_t i = (it == times.begin()) ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
      if (i + 1 >= times.size()) i = times.size() - 2;
      const double seg = times[i + 1] - times[i];
      const double u = (t - times[i]) / seg;
      const Vec3 d = line_.vertices[i + 1] - line_.vertices[i];
      return {line_.vertices[i] + d * u, d / seg};
    }
  }
  return {};
}

ReferenceTrajectory make_circle(double radius, double period, Rng& rng, double duration) {
  ReferenceTrajectory::Circle c;
  c.center = kFlightCenter;
  c.radius = radius;
  c.period = period;
  c.phase = uniform(rng, 0.0, kTwoPi);
  return ReferenceTrajectory::circle(c, duration);
}

ReferenceTrajectory make_chained_poly(int n_segments, double segment_duration, Rng& rng) {
  if (n_segments < 1) throw std::invalid_argument("n_segments must be >= 1");
  if (!(segment_duration > 0.0)) throw std::invalid_argument("segment_duration must be > 0");
  const double half = kPolyBoxHalfExtent;
  const Vec3 box{half, half, half};
  const int n = n_segments + 1;
  std::vector<Vec3> pts(n);
  pts[0] = kFlightCenter;
  for (int i = 1; i < n; ++i) {
    const double x = uniform(rng, -half, half);
    const double y = uniform(rng, -half, half);
    const double z = uniform(rng, -half, half);
    pts[i] = kFlightCenter + Vec3{x, y, z};
  }
  const double T = segment_duration;
  // Catmull-Rom junction velocities, central-difference accelerations; zero
  // at both ends.
  std::vector<Vec3> vel(n), acc(n);
  for (int i = 1; i + 1 < n; ++i) vel[i] = (pts[i + 1] - pts[i - 1]) / (2.0 * T);
  for (int i = 1; i + 1 < n; ++i) acc[i] = (vel[i + 1] - vel[i - 1]) / (2.0 * T);

  auto build = [&](double scale) {
    std::vector<ReferenceTrajectory::QuinticSegment> segs(n_segments);
    for (int s = 0; s < n_segments; ++s) {
      segs[s].t0 = s * T;
      segs[s].duration = T;
      for (int ax = 0; ax < 3; ++ax) {
        segs[s].coeffs[ax] = quintic(pts[s][ax], scale * vel[s][ax], scale * acc[s][ax],
                                     pts[s + 1][ax], scale * vel[s + 1][ax],
                                     scale * acc[s + 1][ax], T);
      }
    }
    return segs;
  };
  auto inside = [&](const std::vector<ReferenceTrajectory::QuinticSegment>& segs) {
    constexpr int kChecks = 200;
    for (const auto& s : segs) {
      for (int k = 0; k <= kChecks; ++k) {
        const double t = s.duration * k / kChecks;
        const Vec3 p{poly_eval(s.coeffs[0], t), poly_eval(s.coeffs[1], t),
                     poly_eval(s.coeffs[2], t)};
        if (!in_box(p, kFlightCenter, box)) return false;
      }
    }
    return true;
  };
  // Shrink junction derivatives until the whole chain stays in the box. With
  // zero derivatives each axis is monotone between junctions, so the loop
  // always terminates inside.
  for (double scale = 1.0; scale > 1e-3; scale *= 0.5) {
    auto segs = build(scale);
    if (inside(segs)) return ReferenceTrajectory::chained(std::move(segs));
  }
  return ReferenceTrajectory::chained(build(0.0));
}

ReferenceTrajectory make_star5(double radius, double edge_speed, int loops) {
  if (!(radius > 0.0) || !(edge_speed > 0.0) || loops < 1) {
    throw std::invalid_argument("star5 needs positive radius, speed and loops");
  }
  std::array<Vec3, 5> corners;
  for (int k = 0; k < 5; ++k) {
    const double a = std::numbers::pi / 2 + kTwoPi * k / 5.0;
    corners[k] = kFlightCenter + Vec3{radius * std::cos(a), radius * std::sin(a), 0.0};
  }
  ReferenceTrajectory::Polyline line;
  line.vertices.push_back(corners[0]);
  line.times.push_back(0.0);
  int idx = 0;
  for (int l = 0; l < loops; ++l) {
    for (int e = 0; e < 5; ++e) {
      idx = (idx + 2) % 5;  // pentagram order 0, 2, 4, 1, 3, 0
      const Vec3& prev = line.vertices.back();
      const double len = (corners[idx] - prev).norm();
      line.vertices.push_back(corners[idx]);
      line.times.push_back(line.times.back() + len / edge_speed);
    }
  }
  return ReferenceTrajectory::polyline(TrajectoryKind::star5, std::move(line));
}

ReferenceTrajectory make_zigzag(int n_legs, LengthRange leg_length, double speed, Rng& rng) {
  if (n_legs < 2) throw std::invalid_argument("zigzag needs at least two legs");
  if (!(speed > 0.0) || !(leg_length.lo > 0.0) || leg_length.hi < leg_length.lo) {
    throw std::invalid_argument("zigzag needs positive speed and leg lengths");
  }
  constexpr double kMaxElevation = 25.0 * std::numbers::pi / 180.0;
  constexpr int kAttempts = 200;
  ReferenceTrajectory::Polyline line;
  line.vertices.push_back(kFlightCenter);
  line.times.push_back(0.0);
  Vec3 prev_dir;
  double prev_len = 0.0;
  for (int leg = 0; leg < n_legs; ++leg) {
    const Vec3 here = line.vertices.back();
    Vec3 dir;
    double len = 0.0;
    bool found = false;
    for (int a = 0; a < kAttempts && !found; ++a) {
      const double az = uniform(rng, 0.0, kTwoPi);
      const double el = uniform(rng, -kMaxElevation, kMaxElevation);
      const double l = uniform(rng, leg_length.lo, leg_length.hi);
      const Vec3 d{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
      if (leg > 0) {
        const double turn = std::acos(std::clamp(d.dot(prev_dir), -1.0, 1.0));
        if (turn < kZigzagMinTurn) continue;
      }
      if (!in_box(here + d * l, kFlightCenter, kZigzagHalfExtent)) continue;
      dir = d;
      len = l;
      found = true;
    }
    if (!found) {
      // Reverse onto the previous leg: a 180 degree corner back to a vertex
      // already known to be inside the box.
      dir = -prev_dir;
      len = prev_len;
    }
    line.vertices.push_back(here + dir * len);
    line.times.push_back(line.times.back() + len / speed);
    prev_dir = dir;
    prev_len = len;
  }
  return ReferenceTrajectory::polyline(TrajectoryKind::zigzag, std::move(line));
}

ReferenceTrajectory make_hover(const Vec3& point, double duration) {
  if (!(duration > 0.0)) throw std::invalid_argument("hover needs a positive duration");
  ReferenceTrajectory::Polyline line;
  line.vertices = {point, point};
  line.times = {0.0, duration};
  return ReferenceTrajectory::polyline(TrajectoryKind::zigzag, std::move(line));
}

std::vector<Vec3> future_window(const ReferenceTrajectory& traj, double t, const Vec3& p_current,
                                int horizon, double dt) {
  std::vector<Vec3> out(static_cast<std::size_t>(std::max(horizon, 0)));
  for (int i = 1; i <= horizon; ++i) out[i - 1] = traj.position(t + i * dt) - p_current;
  return out;
}

ReferenceTrajectory TrajectorySpec::build() const {
  Rng rng = make_stream(seed, static_cast<std::uint64_t>(kind) + 1);
  switch (kind) {
    case TrajectoryKind::circle:
      return make_circle(param(params, "radius"), param(params, "period"), rng,
                         param(params, "duration"));
    case TrajectoryKind::chained_poly:
      return make_chained_poly(static_cast<int>(param(params, "n_segments")),
                               param(params, "segment_duration"), rng);
    case TrajectoryKind::star5:
      return make_star5(param(params, "radius"), param(params, "edge_speed"),
                        static_cast<int>(param(params, "loops")));
    case TrajectoryKind::zigzag:
      return make_zigzag(static_cast<int>(param(params, "n_legs")),
                         {param(params, "leg_min"), param(params, "leg_max")},
                         param(params, "speed"), rng);
  }
  throw std::invalid_argument("unknown trajectory kind");
}

std::string TrajectorySpec::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = to_string(kind);
  j["seed"] = seed;
  j["params"] = params;
  return j.dump();
}

TrajectorySpec TrajectorySpec::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  TrajectorySpec s;
  s.kind = trajectory_kind_from_string(j.at("kind").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.params = j.at("params").get<std::map<std::string, double>>();
  return s;
}

TrajectorySpec sample_trajectory_spec(TrajectoryKind kind, Rng& rng) {
  // Every generated trajectory covers at least a 20 s episode.
  constexpr double kEpisode = 20.0;
  TrajectorySpec s;
  s.kind = kind;
  s.seed = rng();
  switch (kind) {
    case TrajectoryKind::circle:
      s.params = {{"radius", uniform(rng, 0.5, 1.5)},
                  {"period", uniform(rng, 4.0, 8.0)},
                  {"duration", kEpisode}};
      break;
    case TrajectoryKind::chained_poly: {
      const double seg = uniform(rng, 1.5, 2.5);
      s.params = {{"n_segments", std::ceil(kEpisode / seg)}, {"segment_duration", seg}};
      break;
    }
    case TrajectoryKind::star5: {
      const double speed = uniform(rng, 0.5, 1.5);
      // One loop of the unit-radius pentagram is 5 * 2 sin(72 deg) long.
      const double loop_len = 10.0 * std::sin(2.0 * std::numbers::pi / 5.0);
      s.params = {{"radius", 1.0},
                  {"edge_speed", speed},
                  {"loops", std::ceil(kEpisode * speed / loop_len)}};
      break;
    }
    case TrajectoryKind::zigzag: {
      const double speed = uniform(rng, 0.5, 2.0);
      s.params = {{"n_legs", std::ceil(kEpisode * speed / 0.5)},
                  {"leg_min", 0.5},
                  {"leg_max", 1.5},
                  {"speed", speed}};
      break;
    }
  }
  return s;
}

}  // namespace nimc
