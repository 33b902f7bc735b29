#pragma once

#include <array>
#include <cmath>

namespace nimc {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend constexpr Vec3 operator/(const Vec3& a, double s) { return {a.x / s, a.y / s, a.z / s}; }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  constexpr double squared_norm() const { return dot(*this); }
  double norm() const { return std::sqrt(squared_norm()); }
  /// Componentwise product.
  constexpr Vec3 cwise(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
  bool all_finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

/// Unit quaternion, scalar-first (w, x, y, z).
///
/// Every constructor normalizes to unit length and picks the w >= 0
/// hemisphere, so each orientation has exactly one representative. When
/// w == 0 the first nonzero vector component is made positive.
class Quaternion {
 public:
  Quaternion() = default;
  Quaternion(double w, double x, double y, double z);

  static Quaternion identity() { return {}; }

  double w() const { return c_[0]; }
  double x() const { return c_[1]; }
  double y() const { return c_[2]; }
  double z() const { return c_[3]; }
  const std::array<double, 4>& coeffs() const { return c_; }
  Vec3 vec() const { return {c_[1], c_[2], c_[3]}; }

  Quaternion conjugate() const;
  double dot(const Quaternion& o) const;
  double norm() const;

  /// Body z axis expressed in the world frame (third column of R).
  Vec3 body_z() const;

  friend bool operator==(const Quaternion&, const Quaternion&) = default;

 private:
  std::array<double, 4> c_{1.0, 0.0, 0.0, 0.0};
};

/// Branch threshold of the exponential map, machine epsilon to the 1/4.
double exp_map_threshold();

/// Hamilton product a * b, renormalized.
Quaternion quat_mul(const Quaternion& a, const Quaternion& b);

/// Rotation by |delta_theta| about delta_theta / |delta_theta|.
///
/// Below exp_map_threshold() the vector coefficient sin(t/2)/t is replaced
/// by its Taylor expansion 1/2 - t^2/48.
Quaternion exp_map(const Vec3& delta_theta);

/// Exact-sine and Taylor branches of exp_map, exposed for continuity checks.
Quaternion exp_map_sine_branch(const Vec3& delta_theta);
Quaternion exp_map_taylor_branch(const Vec3& delta_theta);

/// Rotation vector of q (inverse of exp_map on the w >= 0 hemisphere).
Vec3 log_map(const Quaternion& q);

/// Geodesic angle between two orientations, in [0, pi].
double angle_between(const Quaternion& a, const Quaternion& b);

/// R(q) * v.
Vec3 rotate_vector(const Quaternion& q, const Vec3& v);

/// R(q)^T * v.
Vec3 inverse_rotate_vector(const Quaternion& q, const Vec3& v);

/// ZYX intrinsic Euler angles (e.x roll, e.y pitch, e.z yaw) to a quaternion.
Quaternion quat_from_euler_delta(const Vec3& e);

/// Quaternion of the rotation whose matrix columns are the body axes x, y, z
/// (orthonormal, right-handed) expressed in the world frame.
Quaternion quat_from_basis(const Vec3& x, const Vec3& y, const Vec3& z);

/// ZYX Euler angles (roll, pitch, yaw) of q.
Vec3 euler_zyx(const Quaternion& q);

}  // namespace nimc
