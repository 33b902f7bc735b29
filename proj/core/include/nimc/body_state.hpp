#pragma once

#include "nimc/so3.hpp"

namespace nimc {

inline constexpr double kGravity = 9.81;

/// Rigid-body state: world position, attitude, world velocity, body rates.
struct BodyState {
  Vec3 p;
  Quaternion q;
  Vec3 v;
  Vec3 omega;

  bool valid() const {
    return p.all_finite() && v.all_finite() && omega.all_finite() &&
           std::abs(q.norm() - 1.0) < 1e-9;
  }
};

}  // namespace nimc
