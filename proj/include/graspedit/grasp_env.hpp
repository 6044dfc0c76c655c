#pragma once

#include "graspedit/demo.hpp"
#include "graspedit/hand.hpp"
#include "graspedit/objects.hpp"
#include "graspedit/world_sim.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace graspedit {

inline constexpr int kCloudFeatureDim = 128;
inline constexpr int kObservationDim = kCloudFeatureDim + 7 + 7;
inline constexpr double kObservationClip = 5.0;

struct Observation {
  Pose6D ee_pose0;
  Pose6D obj_pose0;
  PointCloud cloud0;  // world frame
};

struct RewardBreakdown {
  bool success = false;
  bool collided = false;
  double reward = 0.0;
  bool invalid_action = false;  // non-finite action, scored as failure
  bool grasped = false;
  std::string diagnostic;

  bool operator==(const RewardBreakdown& o) const {
    return success == o.success && collided == o.collided && reward == o.reward &&
           invalid_action == o.invalid_action && grasped == o.grasped;
  }
};

/// One environment of a batch. Horizon is one: step() may be called once.
struct EnvInstance {
  Scene scene;
  Observation obs;
  std::size_t object_index = 0;
  bool done = false;
};

struct EnvOptions {
  double region = 0.50;           // side of the square reset region, metres
  double collision_ratio = 0.5;   // fraction of each batch with table collision enabled
  double table_height = 0.0;
  SimOptions sim;
};

/// Environment config file: paths are resolved relative to the file.
struct EnvConfig {
  std::filesystem::path dataset;  // manifest.json
  std::filesystem::path hand;
  std::filesystem::path demo;
  int batch = 512;
  EnvOptions options;

  static EnvConfig load(const std::filesystem::path& path);
  static EnvConfig from_json(const std::string& text, const std::filesystem::path& base = {});
};

class GraspEnv {
 public:
  GraspEnv(ObjectDataset dataset, HandModel hand, Demonstration demo, EnvOptions options = {});

  const ObjectDataset& dataset() const { return dataset_; }
  const HandModel& hand() const { return hand_; }
  const Demonstration& demo() const { return demo_; }
  const EnvOptions& options() const { return options_; }
  int action_dim() const { return 6 + hand_.dof(); }

  /// Deterministic per seed; exactly ceil(batch * collision_ratio) scenes
  /// have collision enabled.
  std::vector<EnvInstance> reset(int batch, std::uint64_t seed) const;
  /// Scene with a given object placed at (x, y, yaw).
  EnvInstance make_instance(std::size_t object_index, double x, double y, double yaw,
                            bool collision_enabled) const;

  /// Replays the edited demo. Throws std::logic_error on a second call for
  /// the same instance.
  RewardBreakdown step(EnvInstance& env, const EditParams& action) const;
  /// Same as step without the horizon bookkeeping.
  RewardBreakdown evaluate(const Scene& scene, const EditParams& action,
                           EpisodeResult* detail = nullptr) const;

 private:
  ObjectDataset dataset_;
  HandModel hand_;
  Demonstration demo_;
  EnvOptions options_;
};

bool collision_enabled_at(std::size_t index, double ratio);

Observation make_observation(const Scene& scene, const Pose6D& ee_pose0);

/// [cloud_feature(128) | ee_pose(7) | obj_pose(7)], clipped to +-5.
Eigen::VectorXd observation_vector(const Observation& obs, const Eigen::VectorXd& cloud_feature);

/// Encoder input: the cloud relative to the object position, scaled so
/// typical objects span roughly unit range.
inline constexpr double kCloudInputScale = 20.0;
Eigen::MatrixX3d cloud_input(const Observation& obs);

}  // namespace graspedit
