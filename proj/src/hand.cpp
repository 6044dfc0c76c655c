#include "graspedit/hand.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace graspedit {

namespace {

std::string joint_label(const HandModel& m, int dof) {
  for (const auto& f : m.fingers())
    for (const auto& j : f.joints)
      if (j.active && j.dof == dof) return j.name;
  return std::to_string(dof);
}

}  // namespace

HandModel::HandModel(std::string name, std::vector<JointChain> fingers,
                     std::vector<Keypoint> keypoints, std::vector<JointLimit> limits,
                     JointVector open_pose, JointVector grasp_pose)
    : name_(std::move(name)),
      fingers_(std::move(fingers)),
      keypoints_(std::move(keypoints)),
      limits_(std::move(limits)),
      open_pose_(std::move(open_pose)),
      grasp_pose_(std::move(grasp_pose)) {
  if (fingers_.size() < 2) throw HandSpecError("fingers: at least 2 fingers required");

  int dof = 0;
  for (std::size_t f = 0; f < fingers_.size(); ++f) {
    auto& chain = fingers_[f];
    if (chain.joints.empty())
      throw HandSpecError("fingers[" + std::to_string(f) + "]: chain has no joints");
    for (std::size_t j = 0; j < chain.joints.size(); ++j) {
      Joint& jt = chain.joints[j];
      const double n = jt.axis.norm();
      if (!(n > 1e-9))
        throw HandSpecError("joint '" + jt.name + "': axis must be non-zero");
      jt.axis /= n;
      if (jt.active) {
        jt.dof = dof++;
        dof_finger_.push_back(static_cast<int>(f));
      } else if (jt.source < 0 || jt.source >= static_cast<int>(j) ||
                 !chain.joints[jt.source].active) {
        throw HandSpecError("joint '" + jt.name +
                            "': coupling source must be an earlier active joint of the same finger");
      }
    }
  }
  if (static_cast<int>(limits_.size()) != dof)
    throw HandSpecError("limits: expected " + std::to_string(dof) + " entries, got " +
                        std::to_string(limits_.size()));
  for (int i = 0; i < dof; ++i) {
    if (!(limits_[i].lo < limits_[i].hi)) {
      std::ostringstream os;
      os << "limits[" << i << "]: lo (" << limits_[i].lo << ") must be < hi (" << limits_[i].hi
         << ") for joint '" << joint_label(*this, i) << "'";
      throw HandSpecError(os.str());
    }
  }
  if (static_cast<int>(open_pose_.size()) != dof)
    throw HandSpecError("open_pose: expected " + std::to_string(dof) + " entries");
  if (static_cast<int>(grasp_pose_.size()) != dof)
    throw HandSpecError("grasp_pose: expected " + std::to_string(dof) + " entries");
  if (!within_limits(open_pose_)) throw HandSpecError("open_pose: outside joint limits");
  if (!within_limits(grasp_pose_)) throw HandSpecError("grasp_pose: outside joint limits");

  finger_keypoints_.assign(fingers_.size(), {});
  for (std::size_t k = 0; k < keypoints_.size(); ++k) {
    const Keypoint& kp = keypoints_[k];
    if (kp.finger == -1) continue;
    if (kp.finger < 0 || kp.finger >= static_cast<int>(fingers_.size()))
      throw HandSpecError("keypoints[" + std::to_string(k) + "]: finger index out of range");
    if (kp.link < 0 || kp.link >= static_cast<int>(fingers_[kp.finger].joints.size()))
      throw HandSpecError("keypoints[" + std::to_string(k) + "]: link index out of range");
    finger_keypoints_[kp.finger].push_back(static_cast<int>(k));
  }
  for (std::size_t f = 0; f < fingers_.size(); ++f)
    if (finger_keypoints_[f].empty())
      throw HandSpecError("keypoints: finger " + std::to_string(f) + " has no keypoint");
}

bool HandModel::within_limits(const JointVector& q, double tol) const {
  if (static_cast<int>(q.size()) != dof()) return false;
  for (int i = 0; i < dof(); ++i)
    if (!(q[i] >= limits_[i].lo - tol && q[i] <= limits_[i].hi + tol)) return false;
  return true;
}

double HandModel::lipschitz_bound(int k) const {
  const Keypoint& kp = keypoints_.at(k);
  if (kp.finger < 0) return 0.0;
  const auto& joints = fingers_[kp.finger].joints;
  // Each active joint moves the keypoint at most (lever arm) * (sum of
  // |ratio| over the joints it drives) per radian.
  double total = 0.0;
  for (int a = 0; a <= kp.link; ++a) {
    if (!joints[a].active) continue;
    double gain = 0.0;
    for (int j = a; j <= kp.link; ++j) {
      double r = 0.0;
      if (j == a) r = 1.0;
      else if (!joints[j].active && joints[j].source == a) r = std::abs(joints[j].ratio);
      if (r == 0.0) continue;
      double lever = kp.offset.norm();
      for (int i = j + 1; i <= kp.link; ++i) lever += joints[i].offset.trans().norm();
      gain += r * lever;
    }
    total += gain;
  }
  return total;
}

namespace {

template <typename Out>
void chain_fk(const HandModel& model, int f, const Transform& wrist, const JointVector& q,
              Out&& emit) {
  const auto& joints = model.fingers()[f].joints;
  Transform link = wrist;
  double angles[32];
  Transform links[32];
  const int n = static_cast<int>(joints.size());
  for (int j = 0; j < n; ++j) {
    const Joint& jt = joints[j];
    angles[j] = jt.active ? q[jt.dof] : jt.ratio * angles[jt.source];
    link = compose(compose(link, jt.offset),
                   Transform::rotation(Quaternion::from_axis_angle(jt.axis, angles[j])));
    links[j] = link;
  }
  for (int k : model.finger_keypoints(f)) {
    const Keypoint& kp = model.keypoints()[k];
    emit(k, links[kp.link].apply_point(kp.offset));
  }
}

}  // namespace

void forward_kinematics_into(const HandModel& model, const Transform& wrist, const JointVector& q,
                             std::vector<Vec3>& out) {
  out.resize(model.keypoints().size());
  for (std::size_t k = 0; k < model.keypoints().size(); ++k)
    if (model.keypoints()[k].finger < 0) out[k] = wrist.apply_point(model.keypoints()[k].offset);
  for (int f = 0; f < static_cast<int>(model.fingers().size()); ++f)
    chain_fk(model, f, wrist, q, [&](int k, const Vec3& p) { out[k] = p; });
}

void finger_kinematics_into(const HandModel& model, int finger, const Transform& wrist,
                            const JointVector& q, std::vector<Vec3>& out) {
  out.clear();
  chain_fk(model, finger, wrist, q, [&](int, const Vec3& p) { out.push_back(p); });
}

std::vector<Vec3> forward_kinematics(const HandModel& model, const HandConfig& cfg) {
  if (!model.within_limits(cfg.joint_angles))
    throw std::out_of_range("forward_kinematics: joint angles outside limits (clamp first)");
  std::vector<Vec3> out;
  forward_kinematics_into(model, Transform::from_pose(cfg.wrist_pose), cfg.joint_angles, out);
  return out;
}

JointVector clamp_to_limits(const HandModel& model, const JointVector& angles) {
  JointVector out(angles);
  for (int i = 0; i < model.dof() && i < static_cast<int>(out.size()); ++i)
    out[i] = std::clamp(out[i], model.limits()[i].lo, model.limits()[i].hi);
  return out;
}

// --- spec file -------------------------------------------------------------

namespace {

using nlohmann::json;

Vec3 read_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw HandSpecError(where + ": expected array of 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Transform read_pose(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 7)
    throw HandSpecError(where + ": expected 7-tuple [px,py,pz,qw,qx,qy,qz]");
  std::array<double, 7> a{};
  for (int i = 0; i < 7; ++i) a[i] = j[i].get<double>();
  return Transform::from_pose(Pose6D::from_array(a));
}

JointVector read_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw HandSpecError(where + ": expected array");
  JointVector v;
  for (const auto& x : j) v.push_back(x.get<double>());
  return v;
}

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw HandSpecError(where + ": missing field '" + key + "'");
  return j.at(key);
}

}  // namespace

HandModel parse_hand_spec(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw HandSpecError(origin + ": " + e.what());
  }
  try {
    std::vector<JointChain> fingers;
    std::map<std::string, std::pair<int, int>> by_name;  // name -> (finger, joint)
    const json& jf = require(doc, "fingers", origin);
    for (std::size_t f = 0; f < jf.size(); ++f) {
      const std::string where = "fingers[" + std::to_string(f) + "]";
      JointChain chain;
      chain.name = jf[f].value("name", "finger" + std::to_string(f));
      const json& jj = require(jf[f], "joints", where);
      for (std::size_t j = 0; j < jj.size(); ++j) {
        const std::string jw = where + ".joints[" + std::to_string(j) + "]";
        Joint jt;
        jt.name = jj[j].value("name", chain.name + "_" + std::to_string(j));
        jt.axis = read_vec3(require(jj[j], "axis", jw), jw + ".axis");
        jt.offset = read_pose(require(jj[j], "offset_pose", jw), jw + ".offset_pose");
        if (by_name.count(jt.name)) throw HandSpecError(jw + ": duplicate joint name '" + jt.name + "'");
        by_name[jt.name] = {static_cast<int>(f), static_cast<int>(j)};
        chain.joints.push_back(std::move(jt));
      }
      fingers.push_back(std::move(chain));
    }
    if (doc.contains("couplings")) {
      for (std::size_t c = 0; c < doc["couplings"].size(); ++c) {
        const json& jc = doc["couplings"][c];
        const std::string where = "couplings[" + std::to_string(c) + "]";
        const auto joint = require(jc, "joint", where).get<std::string>();
        const auto source = require(jc, "source", where).get<std::string>();
        if (!by_name.count(joint)) throw HandSpecError(where + ": unknown joint '" + joint + "'");
        if (!by_name.count(source)) throw HandSpecError(where + ": unknown source '" + source + "'");
        auto [fj, jj] = by_name[joint];
        auto [fs, js] = by_name[source];
        if (fj != fs) throw HandSpecError(where + ": joint and source must share a finger");
        Joint& jt = fingers[fj].joints[jj];
        jt.active = false;
        jt.source = js;
        jt.ratio = require(jc, "ratio", where).get<double>();
      }
    }
    std::vector<Keypoint> keypoints;
    const json& jk = require(doc, "keypoints", origin);
    for (std::size_t k = 0; k < jk.size(); ++k) {
      const std::string where = "keypoints[" + std::to_string(k) + "]";
      Keypoint kp;
      kp.finger = require(jk[k], "finger", where).get<int>();
      kp.link = kp.finger < 0 ? -1 : require(jk[k], "link", where).get<int>();
      kp.offset = read_vec3(require(jk[k], "offset", where), where + ".offset");
      keypoints.push_back(kp);
    }
    std::vector<JointLimit> limits;
    const json& jl = require(doc, "limits", origin);
    for (std::size_t i = 0; i < jl.size(); ++i) {
      if (!jl[i].is_array() || jl[i].size() != 2)
        throw HandSpecError("limits[" + std::to_string(i) + "]: expected [lo, hi]");
      limits.push_back({jl[i][0].get<double>(), jl[i][1].get<double>()});
    }
    return HandModel(doc.value("name", std::string("hand")), std::move(fingers),
                     std::move(keypoints), std::move(limits),
                     read_vector(require(doc, "open_pose", origin), "open_pose"),
                     read_vector(require(doc, "grasp_pose", origin), "grasp_pose"));
  } catch (const json::exception& e) {
    throw HandSpecError(origin + ": " + e.what());
  } catch (const HandSpecError& e) {
    throw HandSpecError(origin + ": " + e.what());
  }
}

HandModel load_hand_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw HandSpecError("cannot open hand spec '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_hand_spec(ss.str(), path.string());
}

}  // namespace graspedit
