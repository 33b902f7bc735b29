#include "nimc/so3.hpp"

#include <algorithm>
#include <limits>

namespace nimc {

Quaternion::Quaternion(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(n > 0.0) || !std::isfinite(n)) {
    c_ = {1.0, 0.0, 0.0, 0.0};
    return;
  }
  c_ = {w / n, x / n, y / n, z / n};
  // A scalar part at rounding level is a half turn; let the vector part pick
  // the representative.
  if (std::abs(c_[0]) <= 4 * std::numeric_limits<double>::epsilon()) c_[0] = 0.0;
  bool flip = c_[0] < 0.0;
  if (c_[0] == 0.0) {
    for (int i = 1; i < 4; ++i) {
      if (c_[i] != 0.0) {
        flip = c_[i] < 0.0;
        break;
      }
    }
  }
  if (flip) {
    for (double& c : c_) c = -c;
  }
}

Quaternion Quaternion::conjugate() const { return {c_[0], -c_[1], -c_[2], -c_[3]}; }

double Quaternion::dot(const Quaternion& o) const {
  return c_[0] * o.c_[0] + c_[1] * o.c_[1] + c_[2] * o.c_[2] + c_[3] * o.c_[3];
}

double Quaternion::norm() const { return std::sqrt(dot(*this)); }

Vec3 Quaternion::body_z() const {
  const double w = c_[0], x = c_[1], y = c_[2], z = c_[3];
  return {2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y)};
}

double exp_map_threshold() {
  static const double t = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  return t;
}

Quaternion quat_mul(const Quaternion& a, const Quaternion& b) {
  const double aw = a.w(), ax = a.x(), ay = a.y(), az = a.z();
  const double bw = b.w(), bx = b.x(), by = b.y(), bz = b.z();
  return {aw * bw - ax * bx - ay * by - az * bz, aw * bx + ax * bw + ay * bz - az * by,
          aw * by - ax * bz + ay * bw + az * bx, aw * bz + ax * by - ay * bx + az * bw};
}

Quaternion exp_map_sine_branch(const Vec3& d) {
  const double t = d.norm();
  if (t == 0.0) return Quaternion::identity();
  const double s = std::sin(0.5 * t) / t;
  return {std::cos(0.5 * t), s * d.x, s * d.y, s * d.z};
}

Quaternion exp_map_taylor_branch(const Vec3& d) {
  const double t2 = d.squared_norm();
  const double s = 0.5 - t2 / 48.0;
  return {std::cos(0.5 * std::sqrt(t2)), s * d.x, s * d.y, s * d.z};
}

Quaternion exp_map(const Vec3& d) {
  return d.norm() <= exp_map_threshold() ? exp_map_taylor_branch(d) : exp_map_sine_branch(d);
}

Vec3 log_map(const Quaternion& q) {
  const Vec3 u = q.vec();
  const double s = u.norm();
  if (s < 1e-12) return 2.0 * u;
  const double angle = 2.0 * std::atan2(s, q.w());
  return u * (angle / s);
}

double angle_between(const Quaternion& a, const Quaternion& b) {
  return 2.0 * std::acos(std::min(1.0, std::abs(a.dot(b))));
}

Vec3 rotate_vector(const Quaternion& q, const Vec3& v) {
  const Vec3 u = q.vec();
  const Vec3 t = 2.0 * u.cross(v);
  return v + q.w() * t + u.cross(t);
}

Vec3 inverse_rotate_vector(const Quaternion& q, const Vec3& v) {
  return rotate_vector(q.conjugate(), v);
}

Quaternion quat_from_euler_delta(const Vec3& e) {
  const double cr = std::cos(0.5 * e.x), sr = std::sin(0.5 * e.x);
  const double cp = std::cos(0.5 * e.y), sp = std::sin(0.5 * e.y);
  const double cy = std::cos(0.5 * e.z), sy = std::sin(0.5 * e.z);
  return {cr * cp * cy + sr * sp * sy, sr * cp * cy - cr * sp * sy, cr * sp * cy + sr * cp * sy,
          cr * cp * sy - sr * sp * cy};
}

Quaternion quat_from_basis(const Vec3& x, const Vec3& y, const Vec3& z) {
  // Shepperd's method on R = [x y z].
  const double m00 = x.x, m11 = y.y, m22 = z.z;
  const double trace = m00 + m11 + m22;
  if (trace > 0.0) {
    const double s = 2.0 * std::sqrt(trace + 1.0);
    return {0.25 * s, (y.z - z.y) / s, (z.x - x.z) / s, (x.y - y.x) / s};
  }
  if (m00 > m11 && m00 > m22) {
    const double s = 2.0 * std::sqrt(1.0 + m00 - m11 - m22);
    return {(y.z - z.y) / s, 0.25 * s, (y.x + x.y) / s, (z.x + x.z) / s};
  }
  if (m11 > m22) {
    const double s = 2.0 * std::sqrt(1.0 + m11 - m00 - m22);
    return {(z.x - x.z) / s, (y.x + x.y) / s, 0.25 * s, (z.y + y.z) / s};
  }
  const double s = 2.0 * std::sqrt(1.0 + m22 - m00 - m11);
  return {(x.y - y.x) / s, (z.x + x.z) / s, (z.y + y.z) / s, 0.25 * s};
}

Vec3 euler_zyx(const Quaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  const double roll = std::atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y));
  const double sp = std::clamp(2.0 * (w * y - z * x), -1.0, 1.0);
  const double pitch = std::asin(sp);
  const double yaw = std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z));
  return {roll, pitch, yaw};
}

}  // namespace nimc
