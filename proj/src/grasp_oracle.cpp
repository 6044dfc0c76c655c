#include "graspedit/grasp_oracle.hpp"

#include "graspedit/objects.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <set>

namespace graspedit {

Eigen::Matrix3Xd friction_cone_edges(const ContactSet& contacts, double mu) {
  Eigen::Matrix3Xd e(3, 4 * contacts.size());
  for (std::size_t i = 0; i < contacts.size(); ++i) {
    const Vec3 n = contacts[i].normal.normalized();
    const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 t1 = n.cross(helper).normalized();
    const Vec3 t2 = n.cross(t1);
    e.col(4 * i + 0) = n + mu * t1;
    e.col(4 * i + 1) = n - mu * t1;
    e.col(4 * i + 2) = n + mu * t2;
    e.col(4 * i + 3) = n - mu * t2;
  }
  return e;
}

Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, int max_iter) {
  const int n = static_cast<int>(a.cols());
  if (max_iter <= 0) max_iter = 3 * n + 10;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(n, false);
  const double tol = 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff());

  auto solve_passive = [&](Eigen::VectorXd& z) {
    std::vector<int> idx;
    for (int j = 0; j < n; ++j)
      if (passive[j]) idx.push_back(j);
    z.setZero(n);
    if (idx.empty()) return;
    Eigen::MatrixXd ap(a.rows(), idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) ap.col(k) = a.col(idx[k]);
    const Eigen::VectorXd zp = ap.completeOrthogonalDecomposition().solve(b);
    for (std::size_t k = 0; k < idx.size(); ++k) z[idx[k]] = zp[k];
  };

  for (int outer = 0; outer < max_iter; ++outer) {
    const Eigen::VectorXd w = a.transpose() * (b - a * x);
    int best = -1;
    double wmax = tol;
    for (int j = 0; j < n; ++j)
      if (!passive[j] && w[j] > wmax) {
        wmax = w[j];
        best = j;
      }
    if (best < 0) break;
    passive[best] = true;
    for (int inner = 0; inner < max_iter; ++inner) {
      Eigen::VectorXd z;
      solve_passive(z);
      bool feasible = true;
      for (int j = 0; j < n; ++j)
        if (passive[j] && z[j] <= 0.0) feasible = false;
      if (feasible) {
        x = z;
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j)
        if (passive[j] && z[j] <= 0.0) alpha = std::min(alpha, x[j] / (x[j] - z[j]));
      x += alpha * (z - x);
      for (int j = 0; j < n; ++j)
        if (passive[j] && x[j] <= tol) {
          passive[j] = false;
          x[j] = 0.0;
        }
    }
  }
  return x;
}

bool cone_contains(const Eigen::Matrix3Xd& edges, const Vec3& direction, double tol) {
  if (edges.cols() == 0) return false;
  const Eigen::VectorXd x = nnls(edges, direction);
  return (edges * x - direction).norm() <= tol * std::max(1.0, direction.norm());
}

const std::vector<Vec3>& closure_directions() {
  static const std::vector<Vec3> d = {Vec3::UnitZ(), Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(),
                                      -Vec3::UnitY()};
  return d;
}

bool force_closure(const ContactSet& contacts, double mu) {
  if (contacts.size() < 2) return false;
  std::set<int> fingers;
  for (const Contact& c : contacts) fingers.insert(c.finger);
  if (fingers.size() < 2) return false;
  const Eigen::Matrix3Xd edges = friction_cone_edges(contacts, mu);
  for (const Vec3& d : closure_directions())
    if (!cone_contains(edges, d)) return false;
  return true;
}

bool grasp_oracle(const ContactSet& contacts, const ObjectInstance& object) {
  return force_closure(contacts, object.friction());
}

}  // namespace graspedit
