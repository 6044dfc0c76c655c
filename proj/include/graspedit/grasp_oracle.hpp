#pragma once

#include "graspedit/se3.hpp"

#include <Eigen/Core>

#include <vector>

namespace graspedit {

struct ObjectInstance;

struct Contact {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();  // inward surface normal (direction of the pushing force)
  int finger = -1;              // -1 = palm
};

using ContactSet = std::vector<Contact>;

/// Four-edge linearisation of the friction cone at each contact, one
/// column per edge.
Eigen::Matrix3Xd friction_cone_edges(const ContactSet& contacts, double mu);

/// Non-negative least squares, min |A x - b| s.t. x >= 0 (Lawson-Hanson).
Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, int max_iter = 0);

/// True when `direction` lies in the cone spanned by the columns of `edges`.
bool cone_contains(const Eigen::Matrix3Xd& edges, const Vec3& direction, double tol = 1e-9);

/// Directions the grasp must be able to push the object along: up (against
/// gravity) and the four horizontal axes.
const std::vector<Vec3>& closure_directions();

/// Linearised force closure against gravity: at least two contacts from two
/// distinct fingers (the palm counts as one), and the friction cones can
/// produce every direction in closure_directions().
bool force_closure(const ContactSet& contacts, double mu);

bool grasp_oracle(const ContactSet& contacts, const ObjectInstance& object);

}  // namespace graspedit
