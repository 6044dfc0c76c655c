#include "graspedit/world_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace graspedit {

void ControllerConfig::validate() const {
  if (low_level_hz <= 0 || policy_hz <= 0)
    throw std::invalid_argument("controller: rates must be positive");
  if (low_level_hz % policy_hz != 0)
    throw std::invalid_argument("controller: low_level_hz must be divisible by policy_hz");
  if (!(max_wrist_angular_vel > 0 && max_hand_angular_vel > 0 && max_wrist_linear_vel > 0))
    throw std::invalid_argument("controller: velocity limits must be positive");
}

ObjectInstance place_on_table(const AssetPtr& asset, double x, double y, double yaw,
                              double table_height) {
  ObjectInstance obj;
  obj.asset = asset;
  obj.pose.orientation = Quaternion::from_axis_angle(Vec3::UnitZ(), yaw).canonical();
  double min_z = std::numeric_limits<double>::infinity();
  for (const Vec3& v : asset->mesh.vertices())
    min_z = std::min(min_z, obj.pose.orientation.rotate(v).z());
  obj.pose.position = Vec3(x, y, table_height - min_z);
  return obj;
}

double table_penetration(const std::vector<Vec3>& keypoints, double table_height) {
  double lowest = std::numeric_limits<double>::infinity();
  for (const Vec3& p : keypoints) lowest = std::min(lowest, p.z());
  return std::max(0.0, table_height - lowest);
}

ContactSet find_contacts(const HandModel& hand, const std::vector<Vec3>& keypoints,
                         const ObjectInstance& object, double contact_eps) {
  const Transform obj = Transform::from_pose(object.pose);
  const Transform inv = invert(obj);
  ContactSet contacts;
  for (std::size_t k = 0; k < keypoints.size(); ++k) {
    const Vec3 local = inv.apply_point(keypoints[k]);
    if (object.mesh().plane_bound(local) > contact_eps) continue;
    const SurfaceQuery q = object.mesh().query(local);
    if (q.signed_distance > contact_eps) continue;
    contacts.push_back({obj.apply_point(q.closest), obj.apply_vector(q.inward_normal),
                        hand.keypoints()[k].finger});
  }
  return contacts;
}

FinalState measure_final_state(const std::vector<Vec3>& keypoints, const Vec3& object_center,
                               double initial_center_z) {
  FinalState s;
  s.object_rise = object_center.z() - initial_center_z;
  double sum = 0.0;
  for (const Vec3& p : keypoints) sum += (p - object_center).norm();
  s.mean_keypoint_distance = keypoints.empty() ? 0.0 : sum / static_cast<double>(keypoints.size());
  return s;
}

bool success_check(const FinalState& s, const SimTolerances& tol) {
  return s.object_rise >= tol.lift_height && s.mean_keypoint_distance < tol.keypoint_distance;
}

namespace {

bool finite_pose(const Pose6D& p) {
  for (double v : p.to_array())
    if (!std::isfinite(v)) return false;
  return true;
}

bool finite_plan(const Plan& plan) {
  if (!finite_pose(plan.start_wrist)) return false;
  for (double v : plan.start_hand)
    if (!std::isfinite(v)) return false;
  for (const PlanStep& s : plan.steps) {
    if (!finite_pose(s.wrist)) return false;
    for (double v : s.hand)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

/// Deepest penetration of the given world points into the object (0 when
/// all are outside).
double penetration(const ConvexMesh& mesh, const Transform& world_to_obj,
                   const std::vector<Vec3>& points) {
  double depth = 0.0;
  for (const Vec3& p : points) depth = std::max(depth, -mesh.plane_bound(world_to_obj.apply_point(p)));
  return depth;
}

class Episode {
 public:
  Episode(const Scene& scene, const HandModel& hand, const Plan& plan, const SimOptions& opt)
      : scene_(scene), hand_(hand), plan_(plan), opt_(opt), mesh_(scene.object.mesh()) {
    wrist_ = Transform::from_pose(plan.start_wrist);
    q_ = clamp_to_limits(hand, plan.start_hand);
    // Everything runs in the plan frame; only the object's offset from the
    // plan origin enters the arithmetic.
    object_ = Transform(scene.object.pose.orientation, scene.object.pose.position - plan.origin);
    table_height_ = scene.table_height - plan.origin.z();
    world_to_obj_ = invert(object_);
    center_local_ = mesh_.aabb_center();
    initial_center_z_ = object_.apply_point(center_local_).z();
    n_sub_ = opt.controller.substeps();
    lin_cap_ = opt.controller.max_wrist_linear_vel / opt.controller.low_level_hz;
    ang_cap_ = opt.controller.max_wrist_angular_vel / opt.controller.low_level_hz;
    hand_cap_ = opt.controller.max_hand_angular_vel / opt.controller.low_level_hz;
  }

  EpisodeResult run() {
    EpisodeResult r;
    if (static_cast<int>(q_.size()) != hand_.dof()) {
      r.aborted = true;
      r.diagnostic = "plan start hand has wrong dimension";
      return r;
    }
    if (opt_.record_trace) r.trace.emplace();
    for (int s = 0; s < static_cast<int>(plan_.steps.size()); ++s) {
      if (static_cast<int>(plan_.steps[s].hand.size()) != hand_.dof()) {
        r.aborted = true;
        r.diagnostic = "plan step " + std::to_string(s) + " has wrong hand dimension";
        break;
      }
      const bool checked = s >= plan_.approach_steps;
      if (s == plan_.grasp_step && checked && !attached_ && !knocked_) adjudicate();
      run_step(plan_.steps[s], checked);
      if (opt_.record_trace)
        r.trace->push_back({s, to_world(wrist_), q_, to_world(object_)});
      if (knocked_) break;
    }
    forward_kinematics_into(hand_, wrist_, q_, keypoints_);
    const FinalState fs = measure_final_state(keypoints_, object_.apply_point(center_local_),
                                              initial_center_z_);
    r.object_rise = fs.object_rise;
    r.mean_keypoint_distance = fs.mean_keypoint_distance;
    r.grasped = attached_;
    r.knocked = knocked_;
    r.collided = collided_;
    r.max_table_penetration = max_table_pen_;
    r.success = !r.aborted && !knocked_ && success_check(fs, opt_.tolerances);
    r.reward = (r.success && !r.collided) ? 1.0 : 0.0;
    if (knocked_ && r.diagnostic.empty()) r.diagnostic = "object knocked before grasp";
    return r;
  }

 private:
  Pose6D to_world(const Transform& t) const {
    return {t.trans() + plan_.origin, t.quat()};
  }

  void adjudicate() {
    forward_kinematics_into(hand_, wrist_, q_, keypoints_);
    const ContactSet contacts =
        find_contacts(hand_, keypoints_, ObjectInstance{scene_.object.asset, object_.as_pose()},
                      opt_.tolerances.contact_eps);
    if (force_closure(contacts, scene_.object.friction())) {
      attached_ = true;
      wrist_to_object_ = compose(invert(wrist_), object_);
    }
  }

  void run_step(const PlanStep& target, bool checked) {
    const Transform start = wrist_;
    const Transform goal = Transform::from_pose(target.wrist);
    const Vec3 dp = goal.trans() - start.trans();
    const double dist = dp.norm();
    const double lin_per_sub = std::min(dist / n_sub_, lin_cap_);
    const double angle = start.quat().angle_to(goal.quat());
    const double ang_per_sub = std::min(angle / n_sub_, ang_cap_);
    const JointVector q_start = q_;
    const JointVector q_goal = clamp_to_limits(hand_, target.hand);
    JointVector q_rate(q_.size());
    for (std::size_t j = 0; j < q_.size(); ++j)
      q_rate[j] = std::min(std::abs(q_goal[j] - q_start[j]) / n_sub_, hand_cap_);

    // Uncapped motions land exactly on the target at the last substep.
    const bool lin_free = dist / n_sub_ <= lin_cap_;
    const bool ang_free = angle / n_sub_ <= ang_cap_;
    for (int k = 1; k <= n_sub_; ++k) {
      const bool last = k == n_sub_;
      Vec3 pos;
      if (dist == 0.0 || (last && lin_free) || lin_per_sub * k >= dist) pos = goal.trans();
      else pos = start.trans() + (lin_per_sub * k / dist) * dp;
      Quaternion rot;
      if (angle == 0.0 || (last && ang_free) || ang_per_sub * k >= angle) rot = goal.quat();
      else rot = slerp(start.quat(), goal.quat(), ang_per_sub * k / angle);
      wrist_ = Transform(rot, pos);

      JointVector q_next(q_.size());
      for (std::size_t j = 0; j < q_.size(); ++j) {
        const double diff = q_goal[j] - q_[j];
        q_next[j] = std::abs(diff) <= q_rate[j] + 1e-12 ? q_goal[j] : q_[j] + std::copysign(q_rate[j], diff);
      }
      q_next = clamp_to_limits(hand_, q_next);

      if (checked && !attached_) block_fingers(q_next);
      q_ = q_next;

      if (attached_) object_ = compose(wrist_, wrist_to_object_);
      if (!checked) continue;

      forward_kinematics_into(hand_, wrist_, q_, keypoints_);
      const double table_pen = table_penetration(keypoints_, table_height_);
      max_table_pen_ = std::max(max_table_pen_, table_pen);
      if (scene_.collision_enabled && table_pen > opt_.tolerances.collision_eps) collided_ = true;
      if (!attached_ &&
          penetration(mesh_, world_to_obj_, keypoints_) > opt_.tolerances.squeeze_tolerance) {
        knocked_ = true;
        return;
      }
    }
  }

  /// Fingers stop where their keypoints would start to penetrate the
  /// object; the stopping angle is found by bisection on the substep motion.
  void block_fingers(JointVector& q_next) {
    for (int f = 0; f < static_cast<int>(hand_.fingers().size()); ++f) {
      bool moved = false;
      for (int j = 0; j < hand_.dof(); ++j)
        if (hand_.dof_finger()[j] == f && q_next[j] != q_[j]) moved = true;
      if (!moved) continue;
      finger_kinematics_into(hand_, f, wrist_, q_next, finger_pts_);
      const double pen_new = penetration(mesh_, world_to_obj_, finger_pts_);
      if (pen_new <= 0.0) continue;
      finger_kinematics_into(hand_, f, wrist_, q_, finger_pts_);
      const double pen_old = penetration(mesh_, world_to_obj_, finger_pts_);
      if (pen_new <= pen_old) continue;  // finger is not the cause (e.g. opening)
      double lo = 0.0, hi = 1.0;
      if (pen_old <= 0.0) {
        JointVector trial = q_next;
        for (int it = 0; it < 24; ++it) {
          const double mid = 0.5 * (lo + hi);
          for (int j = 0; j < hand_.dof(); ++j)
            if (hand_.dof_finger()[j] == f) trial[j] = q_[j] + mid * (q_next[j] - q_[j]);
          finger_kinematics_into(hand_, f, wrist_, trial, finger_pts_);
          if (penetration(mesh_, world_to_obj_, finger_pts_) > 0.0) hi = mid;
          else lo = mid;
        }
      }
      for (int j = 0; j < hand_.dof(); ++j)
        if (hand_.dof_finger()[j] == f) q_next[j] = q_[j] + lo * (q_next[j] - q_[j]);
    }
  }

  const Scene& scene_;
  const HandModel& hand_;
  const Plan& plan_;
  const SimOptions& opt_;
  const ConvexMesh& mesh_;

  Transform wrist_;
  JointVector q_;
  Transform object_;
  Transform world_to_obj_;
  Transform wrist_to_object_;
  Vec3 center_local_;
  double initial_center_z_ = 0.0;
  double table_height_ = 0.0;
  bool attached_ = false;
  bool knocked_ = false;
  bool collided_ = false;
  double max_table_pen_ = 0.0;
  int n_sub_ = 1;
  double lin_cap_ = 0.0, ang_cap_ = 0.0, hand_cap_ = 0.0;
  std::vector<Vec3> keypoints_;
  std::vector<Vec3> finger_pts_;
};

}  // namespace

EpisodeResult execute_plan(const Scene& scene, const HandModel& hand, const Plan& plan,
                           const SimOptions& options) {
  options.controller.validate();
  if (!finite_plan(plan)) {
    EpisodeResult r;
    r.aborted = true;
    r.diagnostic = "non-finite target in plan";
    return r;
  }
  return Episode(scene, hand, plan, options).run();
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "step,wrist_px,wrist_py,wrist_pz,wrist_qw,wrist_qx,wrist_qy,wrist_qz";
  const std::size_t dof = trace.empty() ? 0 : trace.front().hand.size();
  for (std::size_t j = 0; j < dof; ++j) out << ",q" << j;
  out << ",obj_px,obj_py,obj_pz,obj_qw,obj_qx,obj_qy,obj_qz\n";
  out.precision(17);
  for (const TraceRow& r : trace) {
    out << r.step;
    for (double v : r.wrist.to_array()) out << ',' << v;
    for (double v : r.hand) out << ',' << v;
    for (double v : r.object.to_array()) out << ',' << v;
    out << '\n';
  }
}

}  // namespace graspedit
