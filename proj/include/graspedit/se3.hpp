#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <stdexcept>

namespace graspedit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Unit quaternion stored as (w, x, y, z).
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {}; }
  static Quaternion from_axis_angle(const Vec3& axis, double angle);
  static Quaternion from_matrix(const Mat3& r);

  double norm() const;
  Quaternion normalized() const;
  /// Flip sign so that w >= 0 (q and -q encode the same rotation).
  Quaternion canonical() const;
  Quaternion conjugate() const { return {w, -x, -y, -z}; }

  Mat3 matrix() const;
  Vec3 rotate(const Vec3& v) const;

  /// Geodesic angle between two rotations, in [0, pi].
  double angle_to(const Quaternion& other) const;

  Eigen::Quaterniond eigen() const { return {w, x, y, z}; }
  static Quaternion from_eigen(const Eigen::Quaterniond& q) {
    return {q.w(), q.x(), q.y(), q.z()};
  }
};

Quaternion operator*(const Quaternion& a, const Quaternion& b);

/// Spherical interpolation along the shorter arc. Endpoints are returned
/// exactly for s == 0 and s == 1.
Quaternion slerp(const Quaternion& a, const Quaternion& b, double s);

struct Pose6D {
  Vec3 position = Vec3::Zero();
  Quaternion orientation;

  /// [px, py, pz, qw, qx, qy, qz]
  std::array<double, 7> to_array() const;
  static Pose6D from_array(const std::array<double, 7>& a);
};

/// Rigid transform. The rotation is kept as a unit quaternion; matrix()
/// exposes the equivalent 3x3 rotation.
class Transform {
 public:
  Transform() = default;
  Transform(const Quaternion& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static Transform identity() { return {}; }
  static Transform translation(double x, double y, double z) {
    return {Quaternion::identity(), Vec3(x, y, z)};
  }
  static Transform translation(const Vec3& t) { return {Quaternion::identity(), t}; }
  static Transform rotation(const Quaternion& q) { return {q, Vec3::Zero()}; }
  static Transform rot_x(double angle);
  static Transform rot_y(double angle);
  static Transform rot_z(double angle);
  static Transform from_pose(const Pose6D& p) { return {p.orientation, p.position}; }

  const Quaternion& quat() const { return rotation_; }
  const Vec3& trans() const { return translation_; }
  Mat3 matrix() const { return rotation_.matrix(); }

  Pose6D as_pose() const { return {translation_, rotation_}; }
  Vec3 apply_point(const Vec3& p) const { return rotation_.rotate(p) + translation_; }
  Vec3 apply_vector(const Vec3& v) const { return rotation_.rotate(v); }

 private:
  Quaternion rotation_;
  Vec3 translation_ = Vec3::Zero();
};

/// a ∘ b: applies b first, then a.
Transform compose(const Transform& a, const Transform& b);
Transform invert(const Transform& t);
Pose6D apply(const Transform& t, const Pose6D& p);

/// Intrinsic X-Y-Z (roll, pitch, yaw) Euler angles, radians.
struct EulerRPY {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
};

/// Raised by euler_from_quat inside the gimbal-lock band.
class GimbalLockError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kGimbalMargin = 0.01;

Quaternion quat_from_euler(const EulerRPY& e);
/// Throws GimbalLockError when |pitch| >= pi/2 - kGimbalMargin.
EulerRPY euler_from_quat(const Quaternion& q);

}  // namespace graspedit
