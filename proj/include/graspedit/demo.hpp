#pragma once

#include "graspedit/hand.hpp"
#include "graspedit/se3.hpp"
#include "graspedit/world_sim.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace graspedit {

inline constexpr int kMaxDemoSteps = 40;
inline constexpr char kDemoSchema[] = "graspedit.demo/1";

struct DemoStep {
  JointVector q;
  Pose6D pose;  // wrist pose in the initial object frame
};

struct Demonstration {
  std::string hand;
  std::vector<DemoStep> steps;
  int t_lift = 1;
  Vec3 delta_z = Vec3(0.0, 0.0, 0.25);

  /// T_D (index of the last step).
  int last_step() const { return static_cast<int>(steps.size()) - 1; }
  /// Throws std::invalid_argument when an invariant is violated.
  void validate(const HandModel& hand) const;
};

/// The policy action. Layout used by flat vectors: [d_xyz | d_rpy | d_q].
struct EditParams {
  static constexpr double kMaxXyz = 0.05;
  static constexpr double kMaxRpy = 1.57;
  static constexpr double kMaxQ = 1.0;

  Vec3 d_xyz = Vec3::Zero();
  EulerRPY d_rpy;
  JointVector d_q;

  static EditParams zero(int dof);
  static EditParams from_vector(const std::vector<double>& v);
  std::vector<double> to_vector() const;
  bool within_bounds(double tol = 1e-12) const;
  bool finite() const;
  /// T_ee: rotation about the initial-object-frame origin, then translation.
  Transform wrist_transform() const;
};

/// Half-range of each flat action dimension.
std::vector<double> action_scale(int dof);

/// World frame translated to the object's geometric centre at t = 0.
struct InitialObjectFrame {
  Vec3 origin = Vec3::Zero();

  static InitialObjectFrame of(const ObjectInstance& object) { return {object.center()}; }
};

std::vector<Pose6D> to_initial_object_frame(const std::vector<Pose6D>& world,
                                            const InitialObjectFrame& frame);
std::vector<Pose6D> from_initial_object_frame(const std::vector<Pose6D>& local,
                                              const InitialObjectFrame& frame);

/// Applies the wrist transform to every pre-lift pose, replaces post-lift
/// poses by the lifted T_lift pose, rescales hand targets so the T_lift
/// pose moves by d_q, and clamps to joint limits. Throws
/// std::invalid_argument when params are out of bounds or mis-sized.
Demonstration edit(const Demonstration& demo, const EditParams& params, const HandModel& hand);

/// Wrist start pose: above the table centre, palm down.
Pose6D home_wrist_pose();

class PlanRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Straight-line approach from home to the step-0 targets (as many policy
/// steps as the velocity caps require), followed by the demo steps. Targets
/// are expressed in the scene's initial object frame (plan.origin). Throws
/// PlanRejected when the step-0 pose puts the hand into the table.
Plan plan_from_demo(const Demonstration& demo, const Scene& scene, const HandModel& hand,
                    const ControllerConfig& controller = {},
                    const SimTolerances& tolerances = {},
                    const Pose6D& home = home_wrist_pose());

enum class Approach { kTop, kSide };

std::string to_string(Approach a);
Approach parse_approach(const std::string& name);

struct DemoScript {
  Approach approach = Approach::kTop;
  double standoff = 0.10;      // pre-grasp distance back along the finger direction
  int descend_steps = 3;
  int squeeze_steps = 3;
  double pre_lift = 0.05;      // rise commanded at T_lift
  double lift = 0.25;          // |delta_z|
  int hold_steps = 3;
  double depth_offset = 0.0;   // fingertip centroid offset past the centre along the approach
};

class DemoRecordingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs the scripted grasp on the scene and returns it as a demonstration.
/// T_lift is the first step whose object rise exceeds 1 mm. Throws
/// DemoRecordingError unless the replay succeeds without collision.
Demonstration record_scripted_demo(const Scene& scene, const HandModel& hand,
                                   const DemoScript& script, const SimOptions& options = {});

std::string demo_to_json(const Demonstration& demo);
Demonstration demo_from_json(const std::string& text);
void save_demo(const std::filesystem::path& path, const Demonstration& demo);
Demonstration load_demo(const std::filesystem::path& path);

}  // namespace graspedit
