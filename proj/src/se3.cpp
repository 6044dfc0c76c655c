#include "graspedit/se3.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace graspedit {

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 a = axis.normalized();
  const double s = std::sin(0.5 * angle);
  return {std::cos(0.5 * angle), a.x() * s, a.y() * s, a.z() * s};
}

Quaternion Quaternion::from_matrix(const Mat3& r) {
  return from_eigen(Eigen::Quaterniond(r)).normalized();
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  return {w / n, x / n, y / n, z / n};
}

Quaternion Quaternion::canonical() const {
  if (w < 0.0) return {-w, -x, -y, -z};
  return *this;
}

Mat3 Quaternion::matrix() const {
  Mat3 m;
  const double xx = x * x, yy = y * y, zz = z * z;
  const double xy = x * y, xz = x * z, yz = y * z;
  const double wx = w * x, wy = w * y, wz = w * z;
  m << 1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy),
       2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx),
       2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy);
  return m;
}

Vec3 Quaternion::rotate(const Vec3& v) const {
  // v' = v + 2w(u x v) + 2u x (u x v)
  const Vec3 u(x, y, z);
  const Vec3 t = 2.0 * u.cross(v);
  return v + w * t + u.cross(t);
}

double Quaternion::angle_to(const Quaternion& other) const {
  const double d = std::abs(w * other.w + x * other.x + y * other.y + z * other.z);
  return 2.0 * std::acos(std::min(1.0, d));
}

Quaternion operator*(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Quaternion slerp(const Quaternion& a, const Quaternion& b, double s) {
  if (s <= 0.0) return a;
  if (s >= 1.0) return b;
  double d = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
  Quaternion bb = b;
  if (d < 0.0) {
    d = -d;
    bb = {-b.w, -b.x, -b.y, -b.z};
  }
  double wa, wb;
  if (d > 1.0 - 1e-12) {
    wa = 1.0 - s;
    wb = s;
  } else {
    const double theta = std::acos(d);
    const double st = std::sin(theta);
    wa = std::sin((1.0 - s) * theta) / st;
    wb = std::sin(s * theta) / st;
  }
  return Quaternion{wa * a.w + wb * bb.w, wa * a.x + wb * bb.x, wa * a.y + wb * bb.y,
                    wa * a.z + wb * bb.z}
      .normalized();
}

std::array<double, 7> Pose6D::to_array() const {
  return {position.x(),  position.y(),  position.z(), orientation.w,
          orientation.x, orientation.y, orientation.z};
}

Pose6D Pose6D::from_array(const std::array<double, 7>& a) {
  Pose6D p;
  p.position = Vec3(a[0], a[1], a[2]);
  p.orientation = Quaternion{a[3], a[4], a[5], a[6]}.normalized();
  return p;
}

Transform Transform::rot_x(double angle) {
  return rotation(Quaternion::from_axis_angle(Vec3::UnitX(), angle));
}
Transform Transform::rot_y(double angle) {
  return rotation(Quaternion::from_axis_angle(Vec3::UnitY(), angle));
}
Transform Transform::rot_z(double angle) {
  return rotation(Quaternion::from_axis_angle(Vec3::UnitZ(), angle));
}

namespace {

// Leaves already-unit products untouched so identity compositions are exact.
Quaternion renormalized(const Quaternion& q) {
  const double n2 = q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z;
  return std::abs(n2 - 1.0) < 1e-12 ? q : q.normalized();
}

}  // namespace

Transform compose(const Transform& a, const Transform& b) {
  return {renormalized(a.quat() * b.quat()), a.quat().rotate(b.trans()) + a.trans()};
}

Transform invert(const Transform& t) {
  const Quaternion qi = t.quat().conjugate();
  return {qi, -qi.rotate(t.trans())};
}

Pose6D apply(const Transform& t, const Pose6D& p) {
  return {t.apply_point(p.position), renormalized(t.quat() * p.orientation)};
}

Quaternion quat_from_euler(const EulerRPY& e) {
  const Quaternion qx = Quaternion::from_axis_angle(Vec3::UnitX(), e.roll);
  const Quaternion qy = Quaternion::from_axis_angle(Vec3::UnitY(), e.pitch);
  const Quaternion qz = Quaternion::from_axis_angle(Vec3::UnitZ(), e.yaw);
  return (qx * qy * qz).normalized();
}

EulerRPY euler_from_quat(const Quaternion& q) {
  const Mat3 r = q.normalized().matrix();
  const double sp = std::clamp(r(0, 2), -1.0, 1.0);
  const double pitch = std::asin(sp);
  if (std::abs(pitch) >= std::numbers::pi / 2 - kGimbalMargin) {
    throw GimbalLockError("euler_from_quat: pitch inside gimbal-lock band");
  }
  return {std::atan2(-r(1, 2), r(2, 2)), pitch, std::atan2(-r(0, 1), r(0, 0))};
}

}  // namespace graspedit
