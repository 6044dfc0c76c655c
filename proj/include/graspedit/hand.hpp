#pragma once

#include "graspedit/se3.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace graspedit {

class HandSpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One revolute joint. The joint frame is offset from the parent link frame,
/// then rotated about `axis` (expressed in the joint frame) by the angle.
struct Joint {
  std::string name;
  Vec3 axis = Vec3::UnitY();
  Transform offset;
  // Active joints are commanded directly; passive ones follow `source`.
  bool active = true;
  int source = -1;       // index of the driving joint within the same chain
  double ratio = 0.0;    // passive angle = ratio * source angle
  int dof = -1;          // index into the active-angle vector (active only)
};

struct JointChain {
  std::string name;
  std::vector<Joint> joints;
};

/// A point rigidly attached to a hand link. finger == -1 means the palm
/// (wrist frame); otherwise `link` is the joint index within that finger.
struct Keypoint {
  int finger = -1;
  int link = -1;
  Vec3 offset = Vec3::Zero();
};

struct JointLimit {
  double lo = 0.0;
  double hi = 0.0;
};

using JointVector = std::vector<double>;

class HandModel {
 public:
  HandModel() = default;

  /// Validates invariants and assigns active-joint indices. Throws
  /// HandSpecError naming the offending item.
  HandModel(std::string name, std::vector<JointChain> fingers, std::vector<Keypoint> keypoints,
            std::vector<JointLimit> limits, JointVector open_pose, JointVector grasp_pose);

  const std::string& name() const { return name_; }
  const std::vector<JointChain>& fingers() const { return fingers_; }
  const std::vector<Keypoint>& keypoints() const { return keypoints_; }
  const std::vector<JointLimit>& limits() const { return limits_; }
  const JointVector& open_pose() const { return open_pose_; }
  const JointVector& grasp_pose() const { return grasp_pose_; }

  /// Number of commanded (active) joints.
  int dof() const { return static_cast<int>(limits_.size()); }
  int num_keypoints() const { return static_cast<int>(keypoints_.size()); }
  /// Finger owning each active joint.
  const std::vector<int>& dof_finger() const { return dof_finger_; }
  /// Keypoint indices that belong to finger f.
  const std::vector<int>& finger_keypoints(int f) const { return finger_keypoints_[f]; }

  bool within_limits(const JointVector& q, double tol = 1e-12) const;

  /// Upper bound on |d keypoint| / |d q|_inf along any joint path for
  /// keypoint k.
  double lipschitz_bound(int k) const;

 private:
  std::string name_;
  std::vector<JointChain> fingers_;
  std::vector<Keypoint> keypoints_;
  std::vector<JointLimit> limits_;
  JointVector open_pose_;
  JointVector grasp_pose_;
  std::vector<int> dof_finger_;
  std::vector<std::vector<int>> finger_keypoints_;
};

struct HandConfig {
  Pose6D wrist_pose;
  JointVector joint_angles;
};

/// World-frame keypoint positions. Throws std::out_of_range when an angle
/// lies outside its limits.
std::vector<Vec3> forward_kinematics(const HandModel& model, const HandConfig& cfg);

/// Same as forward_kinematics without the limit check, writing into `out`
/// (resized as needed). Used on the simulator hot path where angles are
/// clamped by construction.
void forward_kinematics_into(const HandModel& model, const Transform& wrist, const JointVector& q,
                             std::vector<Vec3>& out);

/// Keypoints of a single finger only (indices as in finger_keypoints(f)).
void finger_kinematics_into(const HandModel& model, int finger, const Transform& wrist,
                            const JointVector& q, std::vector<Vec3>& out);

JointVector clamp_to_limits(const HandModel& model, const JointVector& angles);

HandModel load_hand_spec(const std::filesystem::path& path);
HandModel parse_hand_spec(const std::string& text, const std::string& origin = "<string>");

}  // namespace graspedit
