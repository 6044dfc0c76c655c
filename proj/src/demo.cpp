#include "graspedit/demo.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace graspedit {

using nlohmann::json;

void Demonstration::validate(const HandModel& model) const {
  if (steps.size() < 2) throw std::invalid_argument("demo: needs at least two steps");
  if (static_cast<int>(steps.size()) > kMaxDemoSteps)
    throw std::invalid_argument("demo: more than " + std::to_string(kMaxDemoSteps) + " steps");
  if (t_lift <= 0 || t_lift > last_step())
    throw std::invalid_argument("demo: t_lift must lie in (0, T_D]");
  if (delta_z.x() != 0.0 || delta_z.y() != 0.0 || !(delta_z.z() > 0.0))
    throw std::invalid_argument("demo: delta_z must point straight up");
  for (const DemoStep& s : steps)
    if (static_cast<int>(s.q.size()) != model.dof())
      throw std::invalid_argument("demo: hand target size does not match hand '" + model.name() + "'");
  if (steps.front().q != model.open_pose())
    throw std::invalid_argument("demo: first hand target must be the open pose");
}

EditParams EditParams::zero(int dof) {
  EditParams p;
  p.d_q.assign(dof, 0.0);
  return p;
}

EditParams EditParams::from_vector(const std::vector<double>& v) {
  if (v.size() < 6) throw std::invalid_argument("EditParams: vector shorter than 6");
  EditParams p;
  p.d_xyz = Vec3(v[0], v[1], v[2]);
  p.d_rpy = {v[3], v[4], v[5]};
  p.d_q.assign(v.begin() + 6, v.end());
  return p;
}

std::vector<double> EditParams::to_vector() const {
  std::vector<double> v = {d_xyz.x(), d_xyz.y(), d_xyz.z(), d_rpy.roll, d_rpy.pitch, d_rpy.yaw};
  v.insert(v.end(), d_q.begin(), d_q.end());
  return v;
}

std::vector<double> action_scale(int dof) {
  std::vector<double> s(6 + dof, EditParams::kMaxQ);
  std::fill(s.begin(), s.begin() + 3, EditParams::kMaxXyz);
  std::fill(s.begin() + 3, s.begin() + 6, EditParams::kMaxRpy);
  return s;
}

bool EditParams::within_bounds(double tol) const {
  const std::vector<double> v = to_vector();
  const std::vector<double> s = action_scale(static_cast<int>(d_q.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!(std::abs(v[i]) <= s[i] + tol)) return false;
  return true;
}

bool EditParams::finite() const {
  for (double x : to_vector())
    if (!std::isfinite(x)) return false;
  return true;
}

Transform EditParams::wrist_transform() const { return {quat_from_euler(d_rpy), d_xyz}; }

std::vector<Pose6D> to_initial_object_frame(const std::vector<Pose6D>& world,
                                            const InitialObjectFrame& frame) {
  std::vector<Pose6D> out;
  out.reserve(world.size());
  for (const Pose6D& p : world) out.push_back({p.position - frame.origin, p.orientation});
  return out;
}

std::vector<Pose6D> from_initial_object_frame(const std::vector<Pose6D>& local,
                                              const InitialObjectFrame& frame) {
  std::vector<Pose6D> out;
  out.reserve(local.size());
  for (const Pose6D& p : local) out.push_back({p.position + frame.origin, p.orientation});
  return out;
}

Demonstration edit(const Demonstration& demo, const EditParams& params, const HandModel& hand) {
  if (static_cast<int>(params.d_q.size()) != hand.dof())
    throw std::invalid_argument("edit: d_q has " + std::to_string(params.d_q.size()) +
                                " entries, hand has " + std::to_string(hand.dof()));
  if (!params.within_bounds()) throw std::invalid_argument("edit: parameters out of bounds");
  const int last = demo.last_step();
  const int lift = demo.t_lift;
  if (lift <= 0 || lift > last) throw std::invalid_argument("edit: invalid t_lift");

  Demonstration out = demo;
  const Transform t_ee = params.wrist_transform();
  for (int t = 0; t <= lift; ++t) out.steps[t].pose = apply(t_ee, demo.steps[t].pose);
  const Pose6D held = apply(Transform::translation(demo.delta_z), out.steps[lift].pose);
  for (int t = lift + 1; t <= last; ++t) out.steps[t].pose = held;

  const JointVector& q0 = demo.steps[0].q;
  const JointVector& ql = demo.steps[lift].q;
  for (int j = 0; j < hand.dof(); ++j) {
    const double den = ql[j] - q0[j];
    const double dq = params.d_q[j];
    // Written as q_t + (q_t - q_0) * (ratio - 1) so a zero delta is exact.
    if (std::abs(den) < 1e-6) {
      for (int t = 0; t <= lift; ++t)
        out.steps[t].q[j] = demo.steps[t].q[j] + dq * (static_cast<double>(t) / lift);
    } else {
      const double gain = dq / den;
      for (int t = 0; t <= lift; ++t)
        out.steps[t].q[j] = demo.steps[t].q[j] + (demo.steps[t].q[j] - q0[j]) * gain;
    }
    for (int t = lift + 1; t <= last; ++t) out.steps[t].q[j] = out.steps[lift].q[j];
  }
  for (DemoStep& s : out.steps) s.q = clamp_to_limits(hand, s.q);
  return out;
}

Pose6D home_wrist_pose() { return {Vec3(0.0, 0.0, 0.45), Quaternion::identity()}; }

Plan plan_from_demo(const Demonstration& demo, const Scene& scene, const HandModel& hand,
                    const ControllerConfig& controller, const SimTolerances& tolerances,
                    const Pose6D& home) {
  if (demo.steps.empty()) throw std::invalid_argument("plan_from_demo: empty demonstration");
  controller.validate();
  Plan plan;
  plan.origin = InitialObjectFrame::of(scene.object).origin;
  plan.start_wrist = {home.position - plan.origin, home.orientation};
  plan.start_hand = demo.steps.front().q;

  const DemoStep& first = demo.steps.front();
  std::vector<Vec3> kp;
  forward_kinematics_into(hand, Transform::from_pose(first.pose), first.q, kp);
  const double table = scene.table_height - plan.origin.z();
  if (first.pose.position.z() < table || table_penetration(kp, table) > tolerances.collision_eps)
    throw PlanRejected("plan_from_demo: step-0 pose is inside the table");

  // Each approach step stays strictly below the per-step caps so the
  // controller lands exactly on every target.
  const double sub = controller.substeps();
  const double lin_step = 0.95 * controller.max_wrist_linear_vel / controller.low_level_hz * sub;
  const double ang_step = 0.95 * controller.max_wrist_angular_vel / controller.low_level_hz * sub;
  const double dist = (first.pose.position - plan.start_wrist.position).norm();
  const double angle = plan.start_wrist.orientation.angle_to(first.pose.orientation);
  const int n = std::max({1, static_cast<int>(std::ceil(dist / lin_step)),
                          static_cast<int>(std::ceil(angle / ang_step))});
  for (int i = 1; i < n; ++i) {
    const double s = static_cast<double>(i) / n;
    PlanStep st;
    st.wrist.position = plan.start_wrist.position + s * (first.pose.position - plan.start_wrist.position);
    st.wrist.orientation = slerp(plan.start_wrist.orientation, first.pose.orientation, s);
    st.hand = first.q;
    plan.steps.push_back(std::move(st));
  }
  plan.steps.push_back({first.pose, first.q});
  plan.approach_steps = n;
  for (std::size_t t = 0; t < demo.steps.size(); ++t)
    plan.steps.push_back({demo.steps[t].pose, demo.steps[t].q});
  plan.grasp_step = plan.approach_steps + demo.t_lift;
  return plan;
}

std::string to_string(Approach a) { return a == Approach::kTop ? "top" : "side"; }

Approach parse_approach(const std::string& name) {
  if (name == "top") return Approach::kTop;
  if (name == "side") return Approach::kSide;
  throw std::invalid_argument("unknown approach '" + name + "' (expected top or side)");
}

namespace {

Vec3 lerp(const Vec3& a, const Vec3& b, double s) { return a + s * (b - a); }

}  // namespace

Demonstration record_scripted_demo(const Scene& scene, const HandModel& hand,
                                   const DemoScript& script, const SimOptions& options) {
  if (script.descend_steps < 1 || script.squeeze_steps < 1 || script.hold_steps < 1)
    throw std::invalid_argument("demo script: phase lengths must be positive");
  if (!(script.lift > 0.0) || !(script.pre_lift > 0.0))
    throw std::invalid_argument("demo script: lift heights must be positive");

  const Quaternion orient = script.approach == Approach::kTop
                                ? Quaternion::identity()
                                : Quaternion::from_axis_angle(Vec3::UnitX(), std::numbers::pi / 2);
  // Fingertips are the last keypoint listed for each finger.
  std::vector<Vec3> kp;
  forward_kinematics_into(hand, Transform::identity(), hand.grasp_pose(), kp);
  Vec3 tips = Vec3::Zero();
  const int nf = static_cast<int>(hand.fingers().size());
  for (int f = 0; f < nf; ++f) tips += kp[hand.finger_keypoints(f).back()];
  tips /= nf;
  const Vec3 dir = orient.rotate(Vec3(0.0, 0.0, -1.0));
  const Vec3 grasp = -orient.rotate(tips) + script.depth_offset * dir;
  const Vec3 pre = grasp - script.standoff * dir;

  Demonstration demo;
  demo.hand = hand.name();
  demo.delta_z = Vec3(0.0, 0.0, script.lift);
  const JointVector& open = hand.open_pose();
  const JointVector& closed = hand.grasp_pose();
  demo.steps.push_back({open, {pre, orient}});
  for (int i = 1; i <= script.descend_steps; ++i)
    demo.steps.push_back({open, {lerp(pre, grasp, static_cast<double>(i) / script.descend_steps), orient}});
  for (int i = 1; i <= script.squeeze_steps; ++i) {
    JointVector q(open.size());
    const double s = static_cast<double>(i) / script.squeeze_steps;
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = i == script.squeeze_steps ? closed[j] : open[j] + s * (closed[j] - open[j]);
    demo.steps.push_back({q, {grasp, orient}});
  }
  demo.t_lift = static_cast<int>(demo.steps.size());
  demo.steps.push_back({closed, {grasp + Vec3(0.0, 0.0, script.pre_lift), orient}});
  const Pose6D held = apply(Transform::translation(demo.delta_z), demo.steps.back().pose);
  for (int i = 0; i < script.hold_steps; ++i) demo.steps.push_back({closed, held});
  demo.validate(hand);

  Plan plan;
  try {
    plan = plan_from_demo(demo, scene, hand, options.controller, options.tolerances);
  } catch (const PlanRejected& e) {
    throw DemoRecordingError(std::string("scripted demo: ") + e.what());
  }
  SimOptions opt = options;
  opt.record_trace = true;
  const EpisodeResult r = execute_plan(scene, hand, plan, opt);
  if (!r.success || r.collided) {
    std::ostringstream os;
    os << "scripted " << to_string(script.approach) << " grasp failed on the recording object"
       << " (grasped=" << r.grasped << ", knocked=" << r.knocked << ", collided=" << r.collided
       << ", rise=" << r.object_rise << ")";
    throw DemoRecordingError(os.str());
  }
  const double z0 = scene.object.center().z();
  int detected = -1;
  for (const TraceRow& row : *r.trace) {
    if (row.step < plan.approach_steps) continue;
    if (row.object.position.z() - z0 > 1e-3) {
      detected = row.step - plan.approach_steps;
      break;
    }
  }
  if (detected != demo.t_lift)
    throw DemoRecordingError("scripted demo: object started rising at step " +
                             std::to_string(detected) + ", expected " + std::to_string(demo.t_lift));
  return demo;
}

std::string demo_to_json(const Demonstration& demo) {
  json j;
  j["schema"] = kDemoSchema;
  j["hand"] = demo.hand;
  j["t_lift"] = demo.t_lift;
  j["delta_z"] = {demo.delta_z.x(), demo.delta_z.y(), demo.delta_z.z()};
  json steps = json::array();
  for (const DemoStep& s : demo.steps) steps.push_back({{"q", s.q}, {"pose", s.pose.to_array()}});
  j["steps"] = std::move(steps);
  return j.dump(1);
}

Demonstration demo_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.value("schema", std::string()) != kDemoSchema)
      throw std::invalid_argument("demo: missing or unsupported schema tag (expected " +
                                  std::string(kDemoSchema) + ")");
    Demonstration d;
    d.hand = j.value("hand", std::string());
    d.t_lift = j.at("t_lift").get<int>();
    const auto dz = j.at("delta_z").get<std::vector<double>>();
    if (dz.size() != 3) throw std::invalid_argument("demo: delta_z must have 3 entries");
    d.delta_z = Vec3(dz[0], dz[1], dz[2]);
    for (const json& s : j.at("steps")) {
      DemoStep st;
      st.q = s.at("q").get<JointVector>();
      const auto pose = s.at("pose").get<std::vector<double>>();
      if (pose.size() != 7) throw std::invalid_argument("demo: pose must be a 7-tuple");
      std::array<double, 7> a;
      std::copy(pose.begin(), pose.end(), a.begin());
      st.pose.position = Vec3(a[0], a[1], a[2]);
      st.pose.orientation = {a[3], a[4], a[5], a[6]};
      d.steps.push_back(std::move(st));
    }
    return d;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("demo: ") + e.what());
  }
}

void save_demo(const std::filesystem::path& path, const Demonstration& demo) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write demo '" + path.string() + "'");
  out << demo_to_json(demo) << '\n';
}

Demonstration load_demo(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open demo '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return demo_from_json(ss.str());
}

}  // namespace graspedit
