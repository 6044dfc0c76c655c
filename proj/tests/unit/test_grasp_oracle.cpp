#include "graspedit/grasp_oracle.hpp"
#include "graspedit/rng.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace graspedit;

namespace {

Contact contact(const Vec3& p, const Vec3& n, int finger) { return {p, n.normalized(), finger}; }

}  // namespace

TEST_CASE("antipodal contacts on a cube close with mu = 1") {
  const ContactSet cs = {contact({0.03, 0, 0}, {-1, 0, 0}, 0), contact({-0.03, 0, 0}, {1, 0, 0}, 1)};
  CHECK(force_closure(cs, 1.0));
  Rng rng(1);
  CHECK(oracle::sampled_closure(cs, 1.0, 10000, rng));
}

TEST_CASE("single contact never closes") {
  CHECK_FALSE(force_closure({contact({0, 0, -0.03}, {0, 0, 1}, 0)}, 1.0));
}

TEST_CASE("same face, parallel normals, low friction fails") {
  const ContactSet cs = {contact({0.03, 0.01, 0}, {-1, 0, 0}, 0), contact({0.03, -0.01, 0}, {-1, 0, 0}, 1)};
  CHECK_FALSE(force_closure(cs, 0.1));
  Rng rng(2);
  CHECK_FALSE(oracle::sampled_closure(cs, 0.1, 10000, rng));
}

TEST_CASE("two contacts from one finger do not count") {
  const ContactSet cs = {contact({0.03, 0, 0}, {-1, 0, 0}, 0), contact({-0.03, 0, 0}, {1, 0, 0}, 0)};
  CHECK_FALSE(force_closure(cs, 1.0));
}

TEST_CASE("gravity needs friction: antipodal grasp without friction fails") {
  const ContactSet cs = {contact({0.03, 0, 0}, {-1, 0, 0}, 0), contact({-0.03, 0, 0}, {1, 0, 0}, 1)};
  CHECK_FALSE(force_closure(cs, 0.0));
}

TEST_CASE("friction cone edges") {
  const ContactSet cs = {contact({0, 0, 0}, {0, 0, 1}, 0)};
  const auto e = friction_cone_edges(cs, 0.5);
  REQUIRE(e.cols() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(e.col(k).z() == doctest::Approx(1.0));
    CHECK(e.col(k).head<2>().norm() == doctest::Approx(0.5));
  }
}

TEST_CASE("nnls matches brute-force enumeration of active sets") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd a(3, 5);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 5; ++j) a(i, j) = rng.normal();
    Eigen::VectorXd b(3);
    for (int i = 0; i < 3; ++i) b[i] = rng.normal();
    const Eigen::VectorXd x = nnls(a, b);
    CHECK(x.minCoeff() >= 0.0);
    double best = (a * x - b).norm();
    // Every support subset, unconstrained least squares, keep feasible ones.
    double oracle = b.norm();
    for (int mask = 1; mask < 32; ++mask) {
      std::vector<int> idx;
      for (int j = 0; j < 5; ++j)
        if (mask & (1 << j)) idx.push_back(j);
      Eigen::MatrixXd s(3, idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) s.col(k) = a.col(idx[k]);
      const Eigen::VectorXd z = s.completeOrthogonalDecomposition().solve(b);
      if (z.minCoeff() < 0.0) continue;
      oracle = std::min(oracle, (s * z - b).norm());
    }
    CHECK(best <= oracle + 1e-9);
  }
}

TEST_CASE("cone membership") {
  Eigen::Matrix3Xd e(3, 3);
  e.col(0) = Vec3::UnitX();
  e.col(1) = Vec3::UnitY();
  e.col(2) = Vec3::UnitZ();
  CHECK(cone_contains(e, Vec3(1, 2, 3)));
  CHECK_FALSE(cone_contains(e, Vec3(-1, 2, 3)));
  CHECK_FALSE(cone_contains(Eigen::Matrix3Xd(3, 0), Vec3::UnitZ()));
}

TEST_CASE("linearised test agrees with the sampling oracle on random sets") {
  Rng rng(4);
  int agree = 0, total = 0, positives = 0;
  for (int i = 0; i < 100; ++i) {
    const ContactSet cs = oracle::random_contacts(rng, 2 + static_cast<int>(rng.below(3)));
    const double mu = rng.uniform(0.2, 1.5);
    const bool fast = force_closure(cs, mu);
    positives += fast;
    agree += fast == oracle::sampled_closure(cs, mu, 10000, rng);
    ++total;
  }
  CHECK(agree == total);
  CHECK(positives > 0);
  CHECK(positives < total);
}
