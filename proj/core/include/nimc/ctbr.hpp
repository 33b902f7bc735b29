#pragma once

#include <algorithm>
#include <array>
#include <numbers>

#include "nimc/so3.hpp"

namespace nimc {

inline constexpr double kMaxBodyrate = std::numbers::pi;

/// Collective thrust (fraction of the maximum collective thrust) and body
/// rate command. Both are clamped on construction.
class CtbrAction {
 public:
  CtbrAction() = default;
  CtbrAction(double thrust_norm, const Vec3& bodyrate_cmd)
      : thrust_norm_(clamp_thrust(thrust_norm)),
        bodyrate_cmd_{clamp_rate(bodyrate_cmd.x), clamp_rate(bodyrate_cmd.y),
                      clamp_rate(bodyrate_cmd.z)} {}

  double thrust_norm() const { return thrust_norm_; }
  const Vec3& bodyrate_cmd() const { return bodyrate_cmd_; }

  std::array<double, 4> as_array() const {
    return {thrust_norm_, bodyrate_cmd_.x, bodyrate_cmd_.y, bodyrate_cmd_.z};
  }

  friend bool operator==(const CtbrAction&, const CtbrAction&) = default;

 private:
  static double clamp_thrust(double t) { return std::isnan(t) ? 0.0 : std::clamp(t, 0.0, 1.0); }
  static double clamp_rate(double r) {
    return std::isnan(r) ? 0.0 : std::clamp(r, -kMaxBodyrate, kMaxBodyrate);
  }

  double thrust_norm_ = 0.0;
  Vec3 bodyrate_cmd_;
};

}  // namespace nimc
