#include "graspedit/neural.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace graspedit;

namespace {

NetConfig small_config() {
  NetConfig c;
  c.cloud_points = 8;
  c.encoder_widths = {6, 5};
  c.hidden = {7, 6};
  c.action_dim = 8;
  c.seed = 3;
  return c;
}

Eigen::MatrixX3d random_cloud(int n, Rng& rng) {
  Eigen::MatrixX3d m(n, 3);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) m(i, k) = rng.uniform(-1.0, 1.0);
  return m;
}

Matrix random_matrix(int r, int c, Rng& rng, double s = 1.0) {
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-s, s);
  return m;
}

// Flattens an Mlp's parameters in layer order (w column-major, then b).
std::vector<double*> mlp_params(Mlp& m) {
  std::vector<double*> p;
  for (Linear& l : m.layers) {
    for (Eigen::Index i = 0; i < l.w.size(); ++i) p.push_back(l.w.data() + i);
    for (Eigen::Index i = 0; i < l.b.size(); ++i) p.push_back(l.b.data() + i);
  }
  return p;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("mlp gradients match finite differences") {
  Rng rng(1);
  Mlp net({3, 5, 4, 2}, rng, std::sqrt(2.0), 1.0);
  const Matrix x = random_matrix(6, 3, rng);
  const Matrix r = random_matrix(6, 2, rng);
  auto loss = [&](const Mlp& m, const Matrix& in) { return (m.forward(in).array() * r.array()).sum(); };

  Mlp::Cache cache;
  net.forward(x, &cache);
  Mlp grad = net;
  for (Linear& l : grad.layers) {
    l.w.setZero();
    l.b.setZero();
  }
  const Matrix dx = net.backward(cache, r, grad);

  const double h = 1e-6;
  std::vector<double*> p = mlp_params(net), g = mlp_params(grad);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = *p[i];
    *p[i] = keep + h;
    const double up = loss(net, x);
    *p[i] = keep - h;
    const double dn = loss(net, x);
    *p[i] = keep;
    CHECK(*g[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-6).scale(1.0));
  }
  for (int i = 0; i < x.rows(); ++i)
    for (int k = 0; k < x.cols(); ++k) {
      Matrix xp = x, xm = x;
      xp(i, k) += h;
      xm(i, k) -= h;
      CHECK(dx(i, k) == doctest::Approx((loss(net, xp) - loss(net, xm)) / (2 * h)).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("single linear layer matches the closed form") {
  Rng rng(2);
  Mlp net({3, 2}, rng, 1.0, 1.0);
  net.layers[0].w << 1, 2, 3, -1, 0.5, 0;
  net.layers[0].b << 0.1, -0.2;
  Matrix x(1, 3);
  x << 1, -1, 2;
  Mlp::Cache cache;
  const Matrix y = net.forward(x, &cache);
  CHECK(y(0, 0) == doctest::Approx(1 - 2 + 6 + 0.1));
  CHECK(y(0, 1) == doctest::Approx(-1 - 0.5 - 0.2));
  Matrix dy(1, 2);
  dy << 1.0, 2.0;
  Mlp grad = net;
  grad.layers[0].w.setZero();
  grad.layers[0].b.setZero();
  const Matrix dx = net.backward(cache, dy, grad);
  Matrix want(2, 3);
  want << 1, -1, 2, 2, -2, 4;
  CHECK((grad.layers[0].w - want).norm() == 0.0);
  CHECK(grad.layers[0].b == Vector::Map(dy.data(), 2));
  CHECK(dx(0, 0) == doctest::Approx(1 * 1 + 2 * -1));
}

TEST_CASE("encoder gradients match finite differences") {
  Rng rng(4);
  SetEncoder enc(8, {6, 5}, rng);
  const Eigen::MatrixX3d cloud = random_cloud(8, rng);
  Vector c(5);
  for (int k = 0; k < 5; ++k) c[k] = rng.uniform(-1, 1);
  auto loss = [&](const SetEncoder& e) {
    Vector pooled(5);
    Eigen::VectorXi am(5);
    e.pool(cloud, pooled, am);
    return c.dot(pooled);
  };
  Vector pooled(5);
  Eigen::VectorXi am(5);
  enc.pool(cloud, pooled, am);
  SetEncoder grad = enc;
  for (Linear& l : grad.net.layers) {
    l.w.setZero();
    l.b.setZero();
  }
  enc.backward(cloud, am, c, grad);
  std::vector<double*> p = mlp_params(enc.net), g = mlp_params(grad.net);
  const double h = 1e-6;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = *p[i];
    *p[i] = keep + h;
    const double up = loss(enc);
    *p[i] = keep - h;
    const double dn = loss(enc);
    *p[i] = keep;
    CHECK(*g[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("actor-critic gradients match finite differences") {
  ActorCritic net(small_config());
  Rng rng(5);
  const int batch = 3;
  std::vector<Eigen::MatrixX3d> clouds;
  for (int i = 0; i < batch; ++i) clouds.push_back(random_cloud(8, rng));
  BatchInput in;
  for (const auto& c : clouds) in.clouds.push_back(&c);
  in.poses = random_matrix(batch, 14, rng);
  const Matrix a = random_matrix(batch, 8, rng);
  Vector b(8), v(batch);
  for (int k = 0; k < 8; ++k) b[k] = rng.uniform(-1, 1);
  for (int k = 0; k < batch; ++k) v[k] = rng.uniform(-1, 1);
  auto loss = [&](const ActorCritic& n) {
    const ForwardCache fc = forward(n, in, false);
    return (fc.mu.array() * a.array()).sum() + b.dot(n.log_std) + v.dot(fc.value);
  };
  const ForwardCache fc = forward(net, in, false);
  const Vector g = backward(net, in, fc, a, b, v).flat();
  Vector theta = net.flat();
  REQUIRE(g.size() == theta.size());
  const double h = 1e-6;
  int checked = 0;
  for (Eigen::Index i = 0; i < theta.size(); i += 3) {
    ActorCritic n = net;
    Vector t = theta;
    t[i] += h;
    n.set_flat(t);
    const double up = loss(n);
    t[i] -= 2 * h;
    n.set_flat(t);
    const double dn = loss(n);
    CHECK(g[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5).scale(1.0));
    ++checked;
  }
  CHECK(checked > 100);

  const Vector zero = backward(net, in, fc, Matrix::Zero(batch, 8), Vector::Zero(8), Vector::Zero(batch)).flat();
  CHECK(zero.isZero(0.0));
}

TEST_CASE("set encoder is a set function") {
  Rng rng(6);
  SetEncoder enc(16, {8, 12}, rng);
  const Eigen::MatrixX3d cloud = random_cloud(16, rng);
  const Vector f = enc.encode(cloud);
  std::vector<int> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    Eigen::MatrixX3d p(16, 3);
    for (int i = 0; i < 16; ++i) p.row(i) = cloud.row(perm[i]);
    CHECK((enc.encode(p) - f).cwiseAbs().maxCoeff() == 0.0);
  }
  Eigen::MatrixX3d dup = cloud;
  dup.row(15) = cloud.row(2);
  Eigen::MatrixX3d base = cloud;
  base.row(15) = cloud.row(2);
  base.row(14) = cloud.row(2);
  // Duplicating a point that is already present does not change the feature.
  CHECK((enc.encode(dup) - enc.encode(base)).cwiseAbs().maxCoeff() == 0.0);

  const Vector z = enc.encode(Eigen::MatrixX3d::Zero(16, 3));
  CHECK(z.allFinite());
  CHECK_THROWS_AS(enc.encode(random_cloud(15, rng)), std::invalid_argument);
}

TEST_CASE("serial and parallel pooling agree bit for bit") {
  ActorCritic net(small_config());
  Rng rng(7);
  std::vector<Eigen::MatrixX3d> clouds;
  for (int i = 0; i < 37; ++i) clouds.push_back(random_cloud(8, rng));
  std::vector<const Eigen::MatrixX3d*> ptr;
  for (const auto& c : clouds) ptr.push_back(&c);
  Matrix a, b;
  Eigen::MatrixXi ia, ib;
  pool_batch_serial(net.encoder, ptr, a, ia);
  pool_batch_parallel(net.encoder, ptr, b, ib);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ia == ib);
}

TEST_CASE("policy sampling") {
  const Vector scale = (Vector(3) << 0.05, 1.57, 1.0).finished();
  const std::vector<bool> all(3, true);
  SUBCASE("deterministic mode and zero mean") {
    const Vector mu = Vector::Zero(3);
    const PolicySample s = policy_sample(mu, Vector::Constant(3, -1.0), scale, all, nullptr);
    CHECK(s.action.isZero(0.0));
    Rng rng(1);
    const Vector m = (Vector(3) << 0.3, -0.2, 1.0).finished();
    const PolicySample t = policy_sample(m, Vector::Constant(3, kLogStdMin), scale, all, &rng);
    const Vector det = squash(m, scale, all);
    CHECK((t.action - det).cwiseAbs().maxCoeff() < 0.02 * 1.57);
  }
  SUBCASE("actions stay within bounds and masked dims are zero") {
    Rng rng(2);
    const std::vector<bool> mask = {true, false, true};
    for (int i = 0; i < 2000; ++i) {
      const PolicySample s = policy_sample(Vector::Zero(3), Vector::Constant(3, kLogStdMax), scale, mask, &rng);
      for (int k = 0; k < 3; ++k) CHECK(std::abs(s.action[k]) <= scale[k]);
      CHECK(s.action[1] == 0.0);
      CHECK(s.u[1] == 0.0);
    }
  }
  SUBCASE("density matches the squashed Gaussian CDF") {
    const Vector sc = Vector::Constant(1, 1.57);
    const std::vector<bool> one(1, true);
    for (double mu : {-0.7, 0.0, 0.4}) {
      for (double ls : {-1.0, 0.0}) {
        const double sigma = std::exp(ls);
        for (double a0 : {-1.2, -0.3, 0.5, 1.1}) {
          const double u = std::atanh(a0 / 1.57);
          const double lp = gaussian_log_prob(Vector::Constant(1, u), Vector::Constant(1, mu),
                                              Vector::Constant(1, ls), one) -
                            squash_log_det(Vector::Constant(1, u), sc, one);
          const double h = 1e-5;
          auto cdf = [&](double a) { return normal_cdf((std::atanh(a / 1.57) - mu) / sigma); };
          const double fd = (cdf(a0 + h) - cdf(a0 - h)) / (2 * h);
          CHECK(std::exp(lp) == doctest::Approx(fd).epsilon(1e-4));
        }
      }
    }
  }
}

TEST_CASE("adam") {
  Vector p = (Vector(3) << 1.0, -2.0, 0.5).finished();
  const Vector g = (Vector(3) << 0.3, -4.0, 0.0).finished();
  Adam opt(3, 0.01);
  opt.step(p, g);
  CHECK(p[0] == doctest::Approx(0.99));
  CHECK(p[1] == doctest::Approx(-1.99));
  CHECK(p[2] == 0.5);
  Vector q = p;
  Adam frozen(3, 0.0);
  for (int i = 0; i < 5; ++i) frozen.step(q, g);
  CHECK(q == p);
  // Minimises a quadratic.
  Vector x = Vector::Constant(2, 3.0);
  Adam a2(2, 0.05);
  for (int i = 0; i < 2000; ++i) a2.step(x, 2.0 * x);
  CHECK(x.norm() < 1e-2);
  CHECK_THROWS_AS(opt.step(p, Vector::Zero(2)), std::invalid_argument);
}

TEST_CASE("checkpoint round trip") {
  const ActorCritic net(small_config());
  const auto dir = std::filesystem::temp_directory_path() / "graspedit_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "net.ckpt";
  save_checkpoint(path, net, R"({"iteration":7})");
  std::string meta;
  const ActorCritic back = load_checkpoint(path, &meta);
  CHECK(back.flat() == net.flat());
  CHECK(back.config().action_dim == 8);
  CHECK(back.config().encoder_widths == net.config().encoder_widths);
  CHECK(meta.find("\"iteration\":7") != std::string::npos);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 8);
  CHECK_THROWS(load_checkpoint(path));
  CHECK_THROWS(load_checkpoint(dir / "missing.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("initial policy") {
  const ActorCritic net(small_config());
  CHECK(net.log_std.size() == 8);
  CHECK(net.log_std[0] == doctest::Approx(std::log(0.8)));
  CHECK(net.obs_dim() == 5 + 14);
  CHECK(net.flat().size() == static_cast<Eigen::Index>(net.num_params()));
}
