#include "graspedit/demo.hpp"

#include <doctest.h>

#include <cmath>

using namespace graspedit;

namespace {

const std::string kHands = GRASPEDIT_DATA_DIR "/hands/";

Demonstration toy_demo() {
  Demonstration d;
  d.hand = "gripper2";
  d.t_lift = 2;
  const double q[] = {0.0, 0.25, 0.5, 0.5, 0.5};
  for (int t = 0; t < 5; ++t) {
    DemoStep s;
    s.q = {q[t], q[t]};
    s.pose.position = Vec3(0.0, 0.01 * t, 0.2 - 0.03 * t);
    s.pose.orientation = quat_from_euler({0.1, 0.0, 0.2});
    d.steps.push_back(s);
  }
  return d;
}

Scene cube_scene(double x, double y) {
  Scene s;
  s.object = place_on_table(make_reference_cube(), x, y, 0.0);
  return s;
}

}  // namespace

TEST_CASE("zero edit is the identity") {
  const HandModel h = load_hand_spec(kHands + "gripper2.json");
  const Demonstration d = toy_demo();
  const Demonstration e = edit(d, EditParams::zero(h.dof()), h);
  for (int t = 0; t <= d.t_lift; ++t) {
    CHECK(e.steps[t].pose.to_array() == d.steps[t].pose.to_array());
    CHECK(e.steps[t].q == d.steps[t].q);
  }
  // After the lift the wrist holds the lifted T_lift pose.
  for (int t = d.t_lift + 1; t <= d.last_step(); ++t) {
    const Vec3 want = d.steps[d.t_lift].pose.position + d.delta_z;
    CHECK((e.steps[t].pose.position - want).norm() == 0.0);
  }
}

TEST_CASE("hand rescaling keeps the trajectory shape") {
  const HandModel h = load_hand_spec(kHands + "gripper2.json");
  EditParams p = EditParams::zero(h.dof());
  p.d_q = {0.1, 0.1};
  const Demonstration e = edit(toy_demo(), p, h);
  CHECK(e.steps[0].q[0] == doctest::Approx(0.0));
  CHECK(e.steps[1].q[0] == doctest::Approx(0.3));
  CHECK(e.steps[2].q[0] == doctest::Approx(0.6));
  CHECK(e.steps[4].q[1] == doctest::Approx(0.6));

  p.d_q = {0.5, -0.2};
  const Demonstration m = edit(toy_demo(), p, h);
  for (int t = 1; t <= m.t_lift; ++t) {
    CHECK(m.steps[t].q[0] >= m.steps[t - 1].q[0]);
    CHECK(m.steps[t].q[1] >= m.steps[t - 1].q[1]);
  }
  CHECK(m.steps[2].q[0] == doctest::Approx(0.8));  // 1.0 clamped to the upper limit
  for (const DemoStep& s : m.steps) CHECK(h.within_limits(s.q));
}

TEST_CASE("constant joint gets a linear ramp") {
  const HandModel h = load_hand_spec(kHands + "gripper2.json");
  Demonstration d = toy_demo();
  for (DemoStep& s : d.steps) s.q[1] = 0.2;
  EditParams p = EditParams::zero(h.dof());
  p.d_q = {0.0, 0.4};
  const Demonstration e = edit(d, p, h);
  CHECK(e.steps[0].q[1] == doctest::Approx(0.2));
  CHECK(e.steps[1].q[1] == doctest::Approx(0.4));
  CHECK(e.steps[2].q[1] == doctest::Approx(0.6));
  CHECK(e.steps[3].q[1] == doctest::Approx(0.6));
}

TEST_CASE("translation edit shifts pre-lift poses") {
  const HandModel h = load_hand_spec(kHands + "gripper2.json");
  const Demonstration d = toy_demo();
  EditParams p = EditParams::zero(h.dof());
  p.d_xyz = Vec3(0.02, 0.0, 0.0);
  const Demonstration e = edit(d, p, h);
  for (int t = 0; t <= d.t_lift; ++t) {
    CHECK((e.steps[t].pose.position - d.steps[t].pose.position - Vec3(0.02, 0, 0)).norm() < 1e-15);
    CHECK(e.steps[t].pose.orientation.angle_to(d.steps[t].pose.orientation) < 1e-12);
  }
  const Vec3 held = d.steps[d.t_lift].pose.position + Vec3(0.02, 0, 0) + d.delta_z;
  for (int t = d.t_lift + 1; t <= d.last_step(); ++t) CHECK((e.steps[t].pose.position - held).norm() < 1e-15);

  EditParams a = p, b = p, ab = p;
  a.d_xyz = Vec3(0.01, -0.02, 0.005);
  b.d_xyz = Vec3(-0.015, 0.01, 0.02);
  ab.d_xyz = a.d_xyz + b.d_xyz;
  const Demonstration two = edit(edit(d, a, h), b, h), one = edit(d, ab, h);
  for (int t = 0; t <= d.last_step(); ++t)
    CHECK((two.steps[t].pose.position - one.steps[t].pose.position).norm() < 1e-12);
}

TEST_CASE("rotation edit pivots about the object frame origin") {
  const HandModel h = load_hand_spec(kHands + "gripper2.json");
  const Demonstration d = toy_demo();
  EditParams p = EditParams::zero(h.dof());
  p.d_rpy = {0.0, 0.0, 0.5};
  const Demonstration e = edit(d, p, h);
  const Quaternion r = Quaternion::from_axis_angle(Vec3::UnitZ(), 0.5);
  for (int t = 0; t <= d.t_lift; ++t) {
    CHECK((e.steps[t].pose.position - r.rotate(d.steps[t].pose.position)).norm() < 1e-12);
    CHECK(e.steps[t].pose.position.norm() == doctest::Approx(d.steps[t].pose.position.norm()));
  }
}

TEST_CASE("edit rejects bad parameters") {
  const HandModel h = load_hand_spec(kHands + "gripper2.json");
  EditParams p = EditParams::zero(h.dof());
  p.d_xyz.x() = 0.06;
  CHECK_THROWS_AS(edit(toy_demo(), p, h), std::invalid_argument);
  CHECK_THROWS_AS(edit(toy_demo(), EditParams::zero(3), h), std::invalid_argument);
  p = EditParams::zero(h.dof());
  p.d_rpy.roll = 1.6;
  CHECK_THROWS_AS(edit(toy_demo(), p, h), std::invalid_argument);
}

TEST_CASE("edit params flat layout") {
  EditParams p = EditParams::zero(2);
  p.d_xyz = Vec3(1, 2, 3);
  p.d_rpy = {4, 5, 6};
  p.d_q = {7, 8};
  const std::vector<double> v = p.to_vector();
  CHECK(v == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(EditParams::from_vector(v).to_vector() == v);
  CHECK(action_scale(2) == std::vector<double>{0.05, 0.05, 0.05, 1.57, 1.57, 1.57, 1.0, 1.0});
}

TEST_CASE("initial object frame helpers") {
  ObjectInstance o = place_on_table(make_reference_cube(0.1), 0.3, 0.2, 0.0);
  const InitialObjectFrame f = InitialObjectFrame::of(o);
  CHECK((f.origin - Vec3(0.3, 0.2, 0.05)).norm() < 1e-12);
  const std::vector<Pose6D> world = {{Vec3(0.3, 0.2, 0.25), Quaternion::identity()}};
  const std::vector<Pose6D> local = to_initial_object_frame(world, f);
  CHECK((local[0].position - Vec3(0, 0, 0.2)).norm() < 1e-12);
  const std::vector<Pose6D> back = from_initial_object_frame(local, f);
  CHECK((back[0].position - world[0].position).norm() < 1e-12);
}

TEST_CASE("plan layout follows the demonstration") {
  const HandModel h = load_hand_spec(kHands + "gripper2.json");
  const Demonstration d = load_demo(GRASPEDIT_DATA_DIR "/demos/gripper2_top.json");
  const Scene a = cube_scene(0.0, 0.0), b = cube_scene(0.1, -0.05);
  const Plan pa = plan_from_demo(d, a, h), pb = plan_from_demo(d, b, h);
  CHECK(pa.steps.size() == static_cast<std::size_t>(pa.approach_steps + d.last_step() + 1));
  CHECK(pa.grasp_step == pa.approach_steps + d.t_lift);
  for (int t = 0; t <= d.last_step(); ++t) {
    const Pose6D wa = pa.world_target(pa.approach_steps + t);
    const Pose6D wb = pb.world_target(pb.approach_steps + t);
    CHECK((wb.position - wa.position - Vec3(0.1, -0.05, 0.0)).norm() < 1e-12);
  }
}

TEST_CASE("plans starting inside the table are rejected") {
  const HandModel h = load_hand_spec(kHands + "gripper2.json");
  Demonstration d = toy_demo();
  d.steps[0].pose.position.z() = -0.05;
  CHECK_THROWS_AS(plan_from_demo(d, cube_scene(0, 0), h), PlanRejected);
}

TEST_CASE("recording fails when the object does not fit") {
  const HandModel h = load_hand_spec(kHands + "gripper2.json");
  Scene s;
  s.object = place_on_table(make_reference_cube(0.30), 0.0, 0.0, 0.0);
  CHECK_THROWS_AS(record_scripted_demo(s, h, {}), DemoRecordingError);
}

TEST_CASE("recorded demos satisfy their invariants and round trip") {
  const HandModel h = load_hand_spec(kHands + "gripper2.json");
  Scene s;
  s.object = place_on_table(make_reference_cube(), 0.0, 0.0, 0.0);
  const Demonstration d = record_scripted_demo(s, h, {});
  CHECK_NOTHROW(d.validate(h));
  CHECK(d.last_step() <= kMaxDemoSteps);
  CHECK(d.t_lift >= 1);
  const std::string js = demo_to_json(d);
  CHECK(js.find(kDemoSchema) != std::string::npos);
  const Demonstration r = demo_from_json(js);
  REQUIRE(r.steps.size() == d.steps.size());
  CHECK(r.t_lift == d.t_lift);
  for (std::size_t t = 0; t < d.steps.size(); ++t) {
    CHECK(r.steps[t].q == d.steps[t].q);
    CHECK(r.steps[t].pose.to_array() == d.steps[t].pose.to_array());
  }
  CHECK_THROWS(demo_from_json("{\"schema\":\"other/1\"}"));
}
