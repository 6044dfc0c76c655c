#include "graspedit/rng.hpp"
#include "graspedit/se3.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace graspedit;
using std::numbers::pi;

namespace {

Transform random_transform(Rng& rng) {
  const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
  return {Quaternion::from_axis_angle(axis, rng.uniform(-pi, pi)),
          Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))};
}

double transform_error(const Transform& a, const Transform& b) {
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff() + (a.trans() - b.trans()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("compose with identity and inverse") {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const Transform t = random_transform(rng);
    CHECK(transform_error(compose(t, Transform::identity()), t) < 1e-12);
    CHECK(transform_error(compose(t, invert(t)), Transform::identity()) < 1e-9);
  }
}

TEST_CASE("two quarter turns about z send +x to -x") {
  const Transform r = compose(Transform::rot_z(pi / 2), Transform::rot_z(pi / 2));
  const Vec3 p = r.apply_point(Vec3(1, 0, 0));
  CHECK(p.x() == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::abs(p.y()) < 1e-12);
  CHECK(std::abs(p.z()) < 1e-12);
}

TEST_CASE("compose applies the right operand first") {
  const Transform a = Transform::translation(1, 0, 0);
  const Transform b = Transform::rot_z(pi / 2);
  // b first: (1,0,0) -> (0,1,0), then shift by +x.
  const Vec3 p = compose(a, b).apply_point(Vec3(1, 0, 0));
  CHECK((p - Vec3(1, 1, 0)).norm() < 1e-12);
}

TEST_CASE("invert") {
  CHECK(transform_error(invert(Transform::identity()), Transform::identity()) == 0.0);
  const Transform t = invert(Transform::translation(1, 2, 3));
  CHECK((t.trans() - Vec3(-1, -2, -3)).norm() == 0.0);
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Transform r = random_transform(rng);
    CHECK(transform_error(invert(invert(r)), r) < 1e-9);
  }
}

TEST_CASE("associativity and isometry") {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const Transform a = random_transform(rng), b = random_transform(rng), c = random_transform(rng);
    CHECK(transform_error(compose(compose(a, b), c), compose(a, compose(b, c))) < 1e-9);
    const Vec3 p(rng.normal(), rng.normal(), rng.normal()), q(rng.normal(), rng.normal(), rng.normal());
    CHECK(std::abs((a.apply_point(p) - a.apply_point(q)).norm() - (p - q).norm()) < 1e-9);
  }
}

TEST_CASE("rotation matrices are special orthogonal") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Mat3 r = random_transform(rng).matrix();
    CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(r.determinant() - 1.0) < 1e-9);
  }
}

TEST_CASE("apply to poses") {
  Pose6D p;
  const Pose6D same = apply(Transform::identity(), p);
  CHECK(same.position == p.position);
  const Pose6D up = apply(Transform::translation(0, 0, 0.1), p);
  CHECK((up.position - Vec3(0, 0, 0.1)).norm() == 0.0);
  CHECK(up.orientation.angle_to(p.orientation) == 0.0);

  Pose6D fx;
  fx.position = Vec3(1, 0, 0);
  const Pose6D r = apply(Transform::rot_z(pi), fx);
  CHECK((r.position - Vec3(-1, 0, 0)).norm() < 1e-12);
  CHECK((r.orientation.rotate(Vec3::UnitX()) - Vec3(-1, 0, 0)).norm() < 1e-12);
  CHECK(std::abs(r.orientation.norm() - 1.0) < 1e-12);
}

TEST_CASE("euler round trip") {
  const Quaternion q0 = quat_from_euler({0, 0, 0});
  CHECK(q0.w == 1.0);
  CHECK(q0.x == 0.0);
  CHECK(q0.y == 0.0);
  CHECK(q0.z == 0.0);

  // Oracle: roll pi/2 about x sends +y to +z.
  const Quaternion qr = quat_from_euler({pi / 2, 0, 0});
  CHECK((qr.matrix() * Vec3::UnitY() - Vec3::UnitZ()).norm() < 1e-12);
  const EulerRPY er = euler_from_quat(qr);
  CHECK(er.roll == doctest::Approx(pi / 2).epsilon(1e-12));

  const EulerRPY e{0.1, 1.5, -0.3};
  const EulerRPY back = euler_from_quat(quat_from_euler(e));
  CHECK(std::abs(back.roll - e.roll) < 1e-9);
  CHECK(std::abs(back.pitch - e.pitch) < 1e-9);
  CHECK(std::abs(back.yaw - e.yaw) < 1e-9);

  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const EulerRPY r{rng.uniform(-pi, pi), rng.uniform(-pi / 2 + 0.011, pi / 2 - 0.011), rng.uniform(-pi, pi)};
    const EulerRPY b = euler_from_quat(quat_from_euler(r));
    CHECK(std::abs(b.roll - r.roll) < 1e-9);
    CHECK(std::abs(b.pitch - r.pitch) < 1e-9);
    CHECK(std::abs(b.yaw - r.yaw) < 1e-9);
  }
}

TEST_CASE("intrinsic XYZ matches the rotation-matrix product") {
  const EulerRPY e{0.3, -0.4, 0.7};
  const Mat3 expected = Transform::rot_x(e.roll).matrix() * Transform::rot_y(e.pitch).matrix() *
                        Transform::rot_z(e.yaw).matrix();
  CHECK((quat_from_euler(e).matrix() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gimbal lock is flagged") {
  CHECK_THROWS_AS(euler_from_quat(quat_from_euler({0.2, pi / 2, 0.1})), GimbalLockError);
  CHECK_THROWS_AS(euler_from_quat(quat_from_euler({0.2, -pi / 2 + 0.005, 0.1})), GimbalLockError);
}

TEST_CASE("quaternion normalisation and canonical form") {
  const Quaternion q{-2, 1, 0.5, -0.3};
  CHECK(std::abs(q.normalized().norm() - 1.0) < 1e-9);
  CHECK(q.normalized().canonical().w >= 0.0);
  CHECK(q.normalized().canonical().angle_to(q.normalized()) < 1e-12);
}

TEST_CASE("slerp endpoints exact, intermediate unit") {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const Quaternion a = random_transform(rng).quat(), b = random_transform(rng).quat();
    const Quaternion s0 = slerp(a, b, 0.0), s1 = slerp(a, b, 1.0);
    CHECK((s0.w == a.w && s0.x == a.x && s0.y == a.y && s0.z == a.z));
    CHECK((s1.w == b.w && s1.x == b.x && s1.y == b.y && s1.z == b.z));
    for (double s : {0.1, 0.5, 0.9}) CHECK(std::abs(slerp(a, b, s).norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("pose array layout") {
  Pose6D p;
  p.position = Vec3(1, 2, 3);
  p.orientation = Quaternion::from_axis_angle(Vec3::UnitZ(), 0.5);
  const auto a = p.to_array();
  CHECK(a[0] == 1.0);
  CHECK(a[3] == p.orientation.w);
  CHECK(a[6] == p.orientation.z);
  const Pose6D b = Pose6D::from_array(a);
  CHECK(b.position == p.position);
}
