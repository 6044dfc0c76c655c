#include "graspedit/grasp_env.hpp"

#include "graspedit/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace graspedit {

using nlohmann::json;

EnvConfig EnvConfig::from_json(const std::string& text, const std::filesystem::path& base) {
  try {
    const json j = json::parse(text);
    auto path = [&](const char* key) {
      const std::filesystem::path p = j.at(key).get<std::string>();
      return p.is_absolute() || base.empty() ? p : base / p;
    };
    EnvConfig c;
    c.dataset = path("dataset");
    c.hand = path("hand");
    c.demo = path("demo");
    c.batch = j.value("batch", c.batch);
    c.options.region = j.value("region", c.options.region);
    c.options.collision_ratio = j.value("collision_ratio", c.options.collision_ratio);
    c.options.table_height = j.value("table_height", c.options.table_height);
    if (c.batch < 1) throw std::invalid_argument("env config: batch must be positive");
    if (!(c.options.region > 0.0)) throw std::invalid_argument("env config: region must be positive");
    if (!(c.options.collision_ratio >= 0.0 && c.options.collision_ratio <= 1.0))
      throw std::invalid_argument("env config: collision_ratio must lie in [0, 1]");
    return c;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("env config: ") + e.what());
  }
}

EnvConfig EnvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open env config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str(), path.parent_path());
}

GraspEnv::GraspEnv(ObjectDataset dataset, HandModel hand, Demonstration demo, EnvOptions options)
    : dataset_(std::move(dataset)),
      hand_(std::move(hand)),
      demo_(std::move(demo)),
      options_(std::move(options)) {
  if (dataset_.empty()) throw std::invalid_argument("GraspEnv: dataset is empty");
  demo_.validate(hand_);
  options_.sim.controller.validate();
}

bool collision_enabled_at(std::size_t index, double ratio) {
  const double i = static_cast<double>(index);
  return std::ceil((i + 1.0) * ratio) > std::ceil(i * ratio);
}

Observation make_observation(const Scene& scene, const Pose6D& ee_pose0) {
  Observation o;
  o.ee_pose0 = ee_pose0;
  o.obj_pose0 = scene.object.pose;
  const Transform t = Transform::from_pose(scene.object.pose);
  o.cloud0.reserve(scene.object.point_cloud().size());
  for (const Vec3& p : scene.object.point_cloud()) o.cloud0.push_back(t.apply_point(p));
  return o;
}

EnvInstance GraspEnv::make_instance(std::size_t object_index, double x, double y, double yaw,
                                    bool collision_enabled) const {
  EnvInstance e;
  e.object_index = object_index;
  e.scene.table_height = options_.table_height;
  e.scene.collision_enabled = collision_enabled;
  e.scene.object = place_on_table(dataset_.objects.at(object_index), x, y, yaw, options_.table_height);
  e.obs = make_observation(e.scene, home_wrist_pose());
  return e;
}

std::vector<EnvInstance> GraspEnv::reset(int batch, std::uint64_t seed) const {
  if (batch < 1) throw std::invalid_argument("reset: batch must be positive");
  std::vector<EnvInstance> envs;
  envs.reserve(batch);
  const double h = 0.5 * options_.region;
  for (int i = 0; i < batch; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const std::size_t obj = rng.below(dataset_.size());
    const double x = rng.uniform(-h, h);
    const double y = rng.uniform(-h, h);
    const double yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
    envs.push_back(make_instance(obj, x, y, yaw, collision_enabled_at(i, options_.collision_ratio)));
    envs.back().scene.rng_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
  }
  return envs;
}

RewardBreakdown GraspEnv::evaluate(const Scene& scene, const EditParams& action,
                                   EpisodeResult* detail) const {
  RewardBreakdown r;
  if (!action.finite() || static_cast<int>(action.d_q.size()) != hand_.dof()) {
    r.invalid_action = true;
    r.diagnostic = "invalid action";
    return r;
  }
  if (!action.within_bounds(1e-9)) throw std::invalid_argument("step: action outside EditParams bounds");
  const Demonstration edited = edit(demo_, action, hand_);
  Plan plan;
  try {
    plan = plan_from_demo(edited, scene, hand_, options_.sim.controller, options_.sim.tolerances);
  } catch (const PlanRejected& e) {
    r.collided = scene.collision_enabled;
    r.diagnostic = e.what();
    return r;
  }
  EpisodeResult res = execute_plan(scene, hand_, plan, options_.sim);
  r.success = res.success;
  r.collided = res.collided;
  r.grasped = res.grasped;
  r.reward = res.reward;
  r.diagnostic = res.diagnostic;
  if (detail) *detail = std::move(res);
  return r;
}

RewardBreakdown GraspEnv::step(EnvInstance& env, const EditParams& action) const {
  if (env.done) throw std::logic_error("step: horizon is one, environment already stepped");
  env.done = true;
  return evaluate(env.scene, action);
}

Eigen::VectorXd observation_vector(const Observation& obs, const Eigen::VectorXd& cloud_feature) {
  if (cloud_feature.size() != kCloudFeatureDim)
    throw std::invalid_argument("observation_vector: cloud feature must have 128 entries");
  Eigen::VectorXd v(kObservationDim);
  v.head(kCloudFeatureDim) = cloud_feature;
  const auto ee = obs.ee_pose0.to_array();
  const auto ob = obs.obj_pose0.to_array();
  for (int i = 0; i < 7; ++i) {
    v[kCloudFeatureDim + i] = ee[i];
    v[kCloudFeatureDim + 7 + i] = ob[i];
  }
  return v.cwiseMax(-kObservationClip).cwiseMin(kObservationClip);
}

Eigen::MatrixX3d cloud_input(const Observation& obs) {
  Eigen::MatrixX3d m(obs.cloud0.size(), 3);
  for (std::size_t i = 0; i < obs.cloud0.size(); ++i)
    m.row(i) = (kCloudInputScale * (obs.cloud0[i] - obs.obj_pose0.position)).transpose();
  return m;
}

}  // namespace graspedit
