#include "graspedit/grasp_env.hpp"
#include "graspedit/rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace graspedit;

namespace {

GraspEnv make_env(ObjectDataset ds) {
  return GraspEnv(std::move(ds), load_hand_spec(GRASPEDIT_DATA_DIR "/hands/gripper2.json"),
                  load_demo(GRASPEDIT_DATA_DIR "/demos/gripper2_top.json"));
}

GraspEnv cube_env(double size = 0.06) {
  ObjectDataset ds;
  ds.objects.push_back(make_reference_cube(size));
  return make_env(std::move(ds));
}

}  // namespace

TEST_CASE("reset is deterministic and balanced") {
  const GraspEnv env = make_env(generate_dataset(6, all_families(), 5));
  for (int batch : {1, 7, 64, 513}) {
    const auto a = env.reset(batch, 42), b = env.reset(batch, 42);
    REQUIRE(a.size() == static_cast<std::size_t>(batch));
    int enabled = 0;
    for (int i = 0; i < batch; ++i) {
      CHECK(a[i].object_index == b[i].object_index);
      CHECK(a[i].scene.object.pose.to_array() == b[i].scene.object.pose.to_array());
      CHECK(a[i].scene.collision_enabled == b[i].scene.collision_enabled);
      enabled += a[i].scene.collision_enabled;
      CHECK(std::abs(a[i].scene.object.lowest_z() - env.options().table_height) < 1e-6);
      CHECK_FALSE(a[i].done);
    }
    CHECK(enabled == (batch + 1) / 2);
  }
  const auto c = env.reset(16, 43), d = env.reset(16, 42);
  bool differs = false;
  for (int i = 0; i < 16; ++i) differs |= c[i].scene.object.pose.to_array() != d[i].scene.object.pose.to_array();
  CHECK(differs);
}

TEST_CASE("reset positions are uniform over the region") {
  const GraspEnv env = make_env(generate_dataset(4, all_families(), 5));
  const auto envs = env.reset(1000, 2024);
  std::vector<double> xs, ys;
  for (const EnvInstance& e : envs) {
    const Vec3 c = e.scene.object.pose.position;
    CHECK(std::abs(c.x()) <= 0.25);
    CHECK(std::abs(c.y()) <= 0.25);
    xs.push_back(c.x());
    ys.push_back(c.y());
  }
  CHECK(oracle::ks_uniform_p(xs, -0.25, 0.25) > 0.01);
  CHECK(oracle::ks_uniform_p(ys, -0.25, 0.25) > 0.01);
  // The oracle itself must reject a clearly non-uniform sample.
  std::vector<double> skew;
  for (double x : xs) skew.push_back(-0.25 + (x + 0.25) * (x + 0.25) / 0.5);
  CHECK(oracle::ks_uniform_p(skew, -0.25, 0.25) < 0.01);
}

TEST_CASE("observation carries the transformed cloud") {
  const GraspEnv env = make_env(generate_dataset(3, all_families(), 9));
  for (const EnvInstance& e : env.reset(5, 1)) {
    const Transform t = Transform::from_pose(e.obs.obj_pose0);
    const PointCloud& local = e.scene.object.point_cloud();
    REQUIRE(e.obs.cloud0.size() == static_cast<std::size_t>(kCloudPoints));
    for (std::size_t i = 0; i < local.size(); ++i) CHECK((e.obs.cloud0[i] - t.apply_point(local[i])).norm() < 1e-12);
    const Eigen::MatrixX3d in = cloud_input(e.obs);
    CHECK(in.rows() == kCloudPoints);
    CHECK((in.row(0).transpose() - kCloudInputScale * (e.obs.cloud0[0] - e.obs.obj_pose0.position)).norm() < 1e-12);
  }
}

TEST_CASE("observation vector layout and clipping") {
  Observation o;
  const Eigen::VectorXd v = observation_vector(o, Eigen::VectorXd::Zero(kCloudFeatureDim));
  REQUIRE(v.size() == 142);
  CHECK(v.head(128).isZero());
  const double pose[7] = {0, 0, 0, 1, 0, 0, 0};
  for (int i = 0; i < 7; ++i) {
    CHECK(v[128 + i] == pose[i]);
    CHECK(v[135 + i] == pose[i]);
  }
  Eigen::VectorXd f = Eigen::VectorXd::Zero(kCloudFeatureDim);
  f[3] = 7.2;
  f[4] = -9.0;
  o.obj_pose0.position = Vec3(6.0, 0.5, 0.0);
  const Eigen::VectorXd w = observation_vector(o, f);
  CHECK(w[3] == 5.0);
  CHECK(w[4] == -5.0);
  CHECK(w[135] == 5.0);
  CHECK(w[136] == 0.5);
  CHECK_THROWS_AS(observation_vector(o, Eigen::VectorXd::Zero(100)), std::invalid_argument);
}

TEST_CASE("reward fixtures") {
  SUBCASE("collision-free success scores one") {
    const GraspEnv env = cube_env();
    EnvInstance e = env.make_instance(0, 0.1, 0.1, 0.3, true);
    const RewardBreakdown r = env.step(e, EditParams::zero(2));
    CHECK(r.success);
    CHECK_FALSE(r.collided);
    CHECK(r.reward == 1.0);
    CHECK_THROWS_AS(env.step(e, EditParams::zero(2)), std::logic_error);
  }
  SUBCASE("success through the table averages one half over the two halves") {
    const GraspEnv env = cube_env(0.04);
    EditParams p = EditParams::zero(2);
    p.d_xyz.z() = -0.02;
    EnvInstance on = env.make_instance(0, 0.1, 0.1, 0.3, true);
    EnvInstance off = env.make_instance(0, 0.1, 0.1, 0.3, false);
    const RewardBreakdown a = env.step(on, p), b = env.step(off, p);
    CHECK(a.success);
    CHECK(a.collided);
    CHECK(a.reward == 0.0);
    CHECK(b.reward == 1.0);
    CHECK(0.5 * (a.reward + b.reward) == 0.5);
  }
  SUBCASE("failure scores zero") {
    const GraspEnv env = cube_env();
    EditParams p = EditParams::zero(2);
    p.d_xyz = Vec3(0.05, 0.05, 0.05);
    EnvInstance e = env.make_instance(0, 0.0, 0.0, 0.0, false);
    const RewardBreakdown r = env.step(e, p);
    CHECK_FALSE(r.success);
    CHECK(r.reward == 0.0);
  }
  SUBCASE("non-finite action is flagged") {
    const GraspEnv env = cube_env();
    EditParams p = EditParams::zero(2);
    p.d_rpy.yaw = std::numeric_limits<double>::quiet_NaN();
    EnvInstance e = env.make_instance(0, 0.0, 0.0, 0.0, true);
    const RewardBreakdown r = env.step(e, p);
    CHECK(r.invalid_action);
    CHECK(r.reward == 0.0);
    CHECK(e.done);
  }
}

TEST_CASE("reward is translation invariant") {
  const GraspEnv env = make_env(generate_dataset(5, all_families(), 21));
  Rng rng(77);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> a(env.action_dim());
    const std::vector<double> s = action_scale(env.hand().dof());
    for (int k = 0; k < env.action_dim(); ++k) a[k] = 0.3 * rng.uniform(-s[k], s[k]);
    const EditParams p = EditParams::from_vector(a);
    const std::size_t obj = i % env.dataset().size();
    const double x = rng.uniform(-0.2, 0.2), y = rng.uniform(-0.2, 0.2), yaw = rng.uniform(-3.0, 3.0);
    const RewardBreakdown r0 = env.evaluate(env.make_instance(obj, x, y, yaw, true).scene, p);
    const RewardBreakdown r1 = env.evaluate(env.make_instance(obj, x + 0.137, y - 0.211, yaw, true).scene, p);
    CHECK(r0 == r1);
  }
}

TEST_CASE("collision split helper") {
  int n = 0;
  for (std::size_t i = 0; i < 11; ++i) n += collision_enabled_at(i, 0.5);
  CHECK(n == 6);
  for (std::size_t i = 0; i < 10; ++i) CHECK_FALSE(collision_enabled_at(i, 0.0));
  for (std::size_t i = 0; i < 10; ++i) CHECK(collision_enabled_at(i, 1.0));
}

TEST_CASE("env config resolves paths relative to the file") {
  const EnvConfig c = EnvConfig::from_json(
      R"({"dataset":"d/manifest.json","hand":"h.json","demo":"x.json","batch":8,"region":0.3})", "/base");
  CHECK(c.dataset == std::filesystem::path("/base/d/manifest.json"));
  CHECK(c.batch == 8);
  CHECK(c.options.region == 0.3);
}

TEST_CASE("empty dataset is rejected") { CHECK_THROWS_AS(make_env(ObjectDataset{}), std::invalid_argument); }
