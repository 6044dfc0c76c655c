#pragma once

#include "graspedit/grasp_oracle.hpp"
#include "graspedit/hand.hpp"
#include "graspedit/objects.hpp"
#include "graspedit/se3.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace graspedit {

/// Interpolating position controller. Targets arrive at policy_hz and are
/// tracked over low_level_hz / policy_hz substeps under velocity caps.
struct ControllerConfig {
  int low_level_hz = 60;
  int policy_hz = 3;
  double max_wrist_angular_vel = 1.57;  // rad/s
  double max_hand_angular_vel = 6.28;   // rad/s
  double max_wrist_linear_vel = 0.5;    // m/s

  int substeps() const { return low_level_hz / policy_hz; }
  /// Throws std::invalid_argument on non-positive rates or when the
  /// low-level rate is not a multiple of the policy rate.
  void validate() const;
};

struct SimTolerances {
  double collision_eps = 0.002;      // keypoint depth below the table that counts as a collision
  double contact_eps = 0.001;        // signed distance that counts as contact
  double squeeze_tolerance = 0.005;  // hand/object interpenetration allowed before adjudication
  double lift_height = 0.10;         // success: object centre rise
  double keypoint_distance = 0.12;   // success: mean keypoint-to-centre distance
};

struct Scene {
  double table_height = 0.0;
  ObjectInstance object;
  bool collision_enabled = true;
  std::uint64_t rng_seed = 0;
};

/// Places an asset on the table at (x, y) with the given yaw, lowest point
/// touching the table.
ObjectInstance place_on_table(const AssetPtr& asset, double x, double y, double yaw,
                              double table_height = 0.0);

struct PlanStep {
  Pose6D wrist;
  JointVector hand;
};

/// Timed targets at policy rate, expressed relative to `origin` (a pure
/// translation of the world frame). Steps before `approach_steps` are the
/// pre-positioning phase (assumed collision-free, not checked). The grasp is
/// adjudicated once, before step `grasp_step` executes.
struct Plan {
  Vec3 origin = Vec3::Zero();
  Pose6D start_wrist;
  JointVector start_hand;
  std::vector<PlanStep> steps;
  int approach_steps = 0;
  int grasp_step = -1;

  /// Step target in world coordinates.
  Pose6D world_target(std::size_t i) const { return apply(Transform::translation(origin), steps[i].wrist); }
};

/// World-frame state at the end of each plan step.
struct TraceRow {
  int step = 0;
  Pose6D wrist;
  JointVector hand;
  Pose6D object;
};

struct EpisodeResult {
  bool success = false;
  bool collided = false;
  bool grasped = false;
  bool knocked = false;
  bool aborted = false;
  double reward = 0.0;
  double object_rise = 0.0;
  double mean_keypoint_distance = 0.0;
  double max_table_penetration = 0.0;
  std::string diagnostic;
  std::optional<std::vector<TraceRow>> trace;
};

struct SimOptions {
  ControllerConfig controller;
  SimTolerances tolerances;
  bool record_trace = false;
};

EpisodeResult execute_plan(const Scene& scene, const HandModel& hand, const Plan& plan,
                           const SimOptions& options = {});

/// max(0, table_height - min keypoint z).
double table_penetration(const std::vector<Vec3>& keypoints, double table_height);

/// Keypoints within contact_eps of the object surface, as contacts at the
/// closest surface point.
ContactSet find_contacts(const HandModel& hand, const std::vector<Vec3>& keypoints,
                         const ObjectInstance& object, double contact_eps);

struct FinalState {
  double object_rise = 0.0;
  double mean_keypoint_distance = 0.0;
};

FinalState measure_final_state(const std::vector<Vec3>& keypoints, const Vec3& object_center,
                               double initial_center_z);
bool success_check(const FinalState& s, const SimTolerances& tol = {});

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

}  // namespace graspedit
