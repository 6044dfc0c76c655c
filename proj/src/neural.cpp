#include "graspedit/neural.hpp"

#include <json.hpp>

#include <Eigen/QR>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace graspedit {

Matrix orthogonal_init(int rows, int cols, double gain, Rng& rng) {
  const int n = std::max(rows, cols);
  const int m = std::min(rows, cols);
  Matrix a(n, m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < n; ++i) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(n, m);
  const Matrix r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  for (int j = 0; j < m; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  Matrix w = rows >= cols ? q : Matrix(q.transpose());
  return gain * w;
}

Mlp::Mlp(const std::vector<int>& widths, Rng& rng, double hidden_gain, double output_gain) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const bool last = l + 2 == widths.size();
    Linear layer;
    layer.w = orthogonal_init(widths[l + 1], widths[l], last ? output_gain : hidden_gain, rng);
    layer.b = Vector::Zero(widths[l + 1]);
    layers.push_back(std::move(layer));
  }
}

Matrix Mlp::forward(const Matrix& x, Cache* cache) const {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Matrix a = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = a * layers[l].w.transpose();
    z.rowwise() += layers[l].b.transpose();
    if (cache) {
      cache->inputs.push_back(a);
      cache->pre.push_back(z);
    }
    if (l + 1 < layers.size()) a = z.unaryExpr([](double v) { return elu(v); });
    else a = std::move(z);
  }
  return a;
}

Matrix Mlp::backward(const Cache& cache, const Matrix& dy, Mlp& grad) const {
  Matrix d = dy;
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    if (l + 1 < static_cast<int>(layers.size()))
      d = d.cwiseProduct(cache.pre[l].unaryExpr([](double v) { return elu_grad(v); }));
    grad.layers[l].w.noalias() += d.transpose() * cache.inputs[l];
    grad.layers[l].b += d.colwise().sum().transpose();
    d = d * layers[l].w;
  }
  return d;
}

SetEncoder::SetEncoder(int points, const std::vector<int>& widths, Rng& rng) : points_(points) {
  std::vector<int> w = {3};
  w.insert(w.end(), widths.begin(), widths.end());
  net = Mlp(w, rng, std::numbers::sqrt2, std::numbers::sqrt2);
}

namespace {

constexpr int kPointBlock = 32;
constexpr int kMaxWidth = 256;

}  // namespace

void SetEncoder::pool(const Eigen::MatrixX3d& cloud, Eigen::Ref<Vector> pooled,
                      Eigen::Ref<Eigen::VectorXi> argmax) const {
  if (cloud.rows() != points_)
    throw std::invalid_argument("SetEncoder: expected " + std::to_string(points_) + " points, got " +
                                std::to_string(cloud.rows()));
  // Points are processed in fixed-size blocks, vectorised across points:
  // every point sees exactly the same sequence of operations, so its
  // output does not depend on where it sits in the cloud.
  alignas(64) double buf_a[kMaxWidth * kPointBlock];
  alignas(64) double buf_b[kMaxWidth * kPointBlock];
  const int nl = static_cast<int>(net.layers.size());
  for (const Linear& l : net.layers)
    if (l.w.rows() > kMaxWidth) throw std::invalid_argument("SetEncoder: layer wider than 256");
  const int out = out_dim();
  pooled.setConstant(-std::numeric_limits<double>::infinity());
  argmax.setZero();
  for (int p0 = 0; p0 < points_; p0 += kPointBlock) {
    const int np = std::min(kPointBlock, points_ - p0);
    double* a = buf_a;
    double* h = buf_b;
    for (int k = 0; k < 3; ++k)
      for (int p = 0; p < kPointBlock; ++p) a[k * kPointBlock + p] = p < np ? cloud(p0 + p, k) : 0.0;
    int in = 3;
    for (int l = 0; l < nl; ++l) {
      const Linear& layer = net.layers[l];
      const int rows = static_cast<int>(layer.w.rows());
      int c = 0;
      // Four output channels per pass keep the accumulators in registers.
      for (; c + 4 <= rows; c += 4) {
        double acc[4][kPointBlock];
        for (int j = 0; j < 4; ++j)
          for (int p = 0; p < kPointBlock; ++p) acc[j][p] = layer.b[c + j];
        for (int k = 0; k < in; ++k) {
          const double* ak = a + k * kPointBlock;
          const double w0 = layer.w(c, k), w1 = layer.w(c + 1, k);
          const double w2 = layer.w(c + 2, k), w3 = layer.w(c + 3, k);
          for (int p = 0; p < kPointBlock; ++p) {
            acc[0][p] = std::fma(w0, ak[p], acc[0][p]);
            acc[1][p] = std::fma(w1, ak[p], acc[1][p]);
            acc[2][p] = std::fma(w2, ak[p], acc[2][p]);
            acc[3][p] = std::fma(w3, ak[p], acc[3][p]);
          }
        }
        std::memcpy(h + c * kPointBlock, acc, sizeof(acc));
      }
      for (; c < rows; ++c) {
        double* hc = h + c * kPointBlock;
        const double bc = layer.b[c];
        for (int p = 0; p < kPointBlock; ++p) hc[p] = bc;
        for (int k = 0; k < in; ++k) {
          const double w = layer.w(c, k);
          const double* ak = a + k * kPointBlock;
          for (int p = 0; p < kPointBlock; ++p) hc[p] = std::fma(w, ak[p], hc[p]);
        }
      }
      if (l + 1 < nl) {
        Eigen::Map<Eigen::ArrayXd, Eigen::Aligned64> v(h, rows * kPointBlock);
        v = (v > 0.0).select(v, v.exp() - 1.0);
      }
      std::swap(a, h);
      in = rows;
    }
    for (int c = 0; c < out; ++c) {
      const double* ac = a + c * kPointBlock;
      for (int p = 0; p < np; ++p)
        if (ac[p] > pooled[c]) {
          pooled[c] = ac[p];
          argmax[c] = p0 + p;
        }
    }
  }
}

Vector SetEncoder::encode(const Eigen::MatrixX3d& cloud) const {
  Vector pooled(out_dim());
  Eigen::VectorXi idx(out_dim());
  pool(cloud, pooled, idx);
  return pooled.unaryExpr([](double v) { return elu(v); });
}

void SetEncoder::backward(const Eigen::MatrixX3d& cloud,
                          const Eigen::Ref<const Eigen::VectorXi>& argmax,
                          const Eigen::Ref<const Vector>& dpooled, SetEncoder& grad) const {
  std::vector<int> rows;
  for (int c = 0; c < argmax.size(); ++c)
    if (dpooled[c] != 0.0) rows.push_back(argmax[c]);
  if (rows.empty()) return;
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  Matrix x(rows.size(), 3);
  for (std::size_t i = 0; i < rows.size(); ++i) x.row(i) = cloud.row(rows[i]);
  Matrix dy = Matrix::Zero(rows.size(), out_dim());
  for (int c = 0; c < argmax.size(); ++c) {
    if (dpooled[c] == 0.0) continue;
    const auto it = std::lower_bound(rows.begin(), rows.end(), argmax[c]);
    dy(it - rows.begin(), c) += dpooled[c];
  }
  Mlp::Cache cache;
  net.forward(x, &cache);
  net.backward(cache, dy, grad.net);
}

void pool_batch_serial(const SetEncoder& enc, const std::vector<const Eigen::MatrixX3d*>& clouds,
                       Matrix& pooled, Eigen::MatrixXi& argmax) {
  const int n = static_cast<int>(clouds.size());
  // Column per sample keeps each sample's outputs contiguous.
  pooled.resize(enc.out_dim(), n);
  argmax.resize(enc.out_dim(), n);
  for (int i = 0; i < n; ++i) enc.pool(*clouds[i], pooled.col(i), argmax.col(i));
}

void pool_batch_parallel(const SetEncoder& enc, const std::vector<const Eigen::MatrixX3d*>& clouds,
                         Matrix& pooled, Eigen::MatrixXi& argmax) {
  const int n = static_cast<int>(clouds.size());
  pooled.resize(enc.out_dim(), n);
  argmax.resize(enc.out_dim(), n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) enc.pool(*clouds[i], pooled.col(i), argmax.col(i));
}

ActorCritic::ActorCritic(const NetConfig& config) : config_(config) {
  if (config.action_dim < 1) throw std::invalid_argument("ActorCritic: action_dim must be positive");
  if (config.encoder_widths.empty()) throw std::invalid_argument("ActorCritic: empty encoder");
  Rng rng(config.seed);
  encoder = SetEncoder(config.cloud_points, config.encoder_widths, rng);
  std::vector<int> widths = {encoder.out_dim() + config.pose_dim};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  std::vector<int> aw = widths, cw = widths;
  aw.push_back(config.action_dim);
  cw.push_back(1);
  actor = Mlp(aw, rng, std::numbers::sqrt2, 0.01);
  critic = Mlp(cw, rng, std::numbers::sqrt2, 1.0);
  log_std = Vector::Constant(config.action_dim, std::log(config.init_std));
}

namespace {

template <typename F>
void visit_params(ActorCritic& net, F&& f) {
  for (Mlp* m : {&net.encoder.net, &net.actor, &net.critic})
    for (Linear& l : m->layers) {
      f(l.w.data(), l.w.size());
      f(l.b.data(), l.b.size());
    }
  f(net.log_std.data(), net.log_std.size());
}

}  // namespace

ActorCritic ActorCritic::zeros_like() const {
  ActorCritic z = *this;
  visit_params(z, [](double* p, Eigen::Index n) { std::fill(p, p + n, 0.0); });
  return z;
}

std::size_t ActorCritic::num_params() const {
  std::size_t n = 0;
  visit_params(const_cast<ActorCritic&>(*this), [&](double*, Eigen::Index k) { n += k; });
  return n;
}

Vector ActorCritic::flat() const {
  Vector v(num_params());
  std::size_t off = 0;
  visit_params(const_cast<ActorCritic&>(*this), [&](double* p, Eigen::Index k) {
    std::copy(p, p + k, v.data() + off);
    off += k;
  });
  return v;
}

void ActorCritic::set_flat(const Vector& v) {
  if (static_cast<std::size_t>(v.size()) != num_params())
    throw std::invalid_argument("ActorCritic::set_flat: size mismatch");
  std::size_t off = 0;
  visit_params(*this, [&](double* p, Eigen::Index k) {
    std::copy(v.data() + off, v.data() + off + k, p);
    off += k;
  });
}

ForwardCache forward(const ActorCritic& net, const BatchInput& in, bool parallel) {
  const int n = static_cast<int>(in.clouds.size());
  if (in.poses.rows() != n || in.poses.cols() != net.config().pose_dim)
    throw std::invalid_argument("forward: pose block has wrong shape");
  ForwardCache c;
  Matrix pooled_t;
  Eigen::MatrixXi argmax_t;
  if (parallel) pool_batch_parallel(net.encoder, in.clouds, pooled_t, argmax_t);
  else pool_batch_serial(net.encoder, in.clouds, pooled_t, argmax_t);
  c.pooled = pooled_t.transpose();
  c.argmax = argmax_t.transpose();
  const int f = net.encoder.out_dim();
  c.obs_raw.resize(n, net.obs_dim());
  c.obs_raw.leftCols(f) = c.pooled.unaryExpr([](double v) { return elu(v); });
  c.obs_raw.rightCols(net.config().pose_dim) = in.poses;
  const double clip = net.config().obs_clip;
  c.obs = c.obs_raw.cwiseMax(-clip).cwiseMin(clip);
  c.mu = net.actor.forward(c.obs, &c.actor);
  c.value = net.critic.forward(c.obs, &c.critic).col(0);
  return c;
}

ActorCritic backward(const ActorCritic& net, const BatchInput& in, const ForwardCache& cache,
                     const Matrix& dmu, const Vector& dlog_std, const Vector& dvalue) {
  ActorCritic g = net.zeros_like();
  Matrix dobs = net.actor.backward(cache.actor, dmu, g.actor);
  dobs += net.critic.backward(cache.critic, Matrix(dvalue), g.critic);
  const double clip = net.config().obs_clip;
  const int f = net.encoder.out_dim();
  for (int i = 0; i < dobs.rows(); ++i) {
    for (int k = 0; k < f; ++k) {
      const double raw = cache.obs_raw(i, k);
      const double d = (raw < -clip || raw > clip) ? 0.0 : dobs(i, k);
      dobs(i, k) = d * elu_grad(cache.pooled(i, k));
    }
    const Vector dp = dobs.row(i).head(f).transpose();
    const Eigen::VectorXi am = cache.argmax.row(i).transpose();
    net.encoder.backward(*in.clouds[i], am, dp, g.encoder);
  }
  g.log_std = dlog_std;
  return g;
}

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// log(1 - tanh(u)^2), stable for large |u|.
double log_one_minus_tanh2(double u) {
  const double a = std::abs(u);
  return 2.0 * (std::numbers::ln2 - a - std::log1p(std::exp(-2.0 * a)));
}

}  // namespace

double gaussian_log_prob(const Vector& u, const Vector& mu, const Vector& log_std,
                         const std::vector<bool>& mask) {
  double lp = 0.0;
  for (int k = 0; k < u.size(); ++k) {
    if (!mask.empty() && !mask[k]) continue;
    const double z = (u[k] - mu[k]) * std::exp(-log_std[k]);
    lp += -0.5 * z * z - log_std[k] - kHalfLog2Pi;
  }
  return lp;
}

double squash_log_det(const Vector& u, const Vector& scale, const std::vector<bool>& mask) {
  double s = 0.0;
  for (int k = 0; k < u.size(); ++k) {
    if (!mask.empty() && !mask[k]) continue;
    s += std::log(scale[k]) + log_one_minus_tanh2(u[k]);
  }
  return s;
}

Vector squash(const Vector& u, const Vector& scale, const std::vector<bool>& mask) {
  Vector a(u.size());
  for (int k = 0; k < u.size(); ++k)
    a[k] = (!mask.empty() && !mask[k]) ? 0.0 : scale[k] * std::tanh(u[k]);
  return a;
}

PolicySample policy_sample(const Vector& mu, const Vector& log_std, const Vector& scale,
                           const std::vector<bool>& mask, Rng* rng) {
  PolicySample s;
  s.u = Vector::Zero(mu.size());
  for (int k = 0; k < mu.size(); ++k) {
    if (!mask.empty() && !mask[k]) continue;
    s.u[k] = mu[k] + (rng ? std::exp(log_std[k]) * rng->normal() : 0.0);
  }
  s.action = squash(s.u, scale, mask);
  s.log_prob = gaussian_log_prob(s.u, mu, log_std, mask) - squash_log_det(s.u, scale, mask);
  return s;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

void Adam::step(Vector& params, const Vector& grad) {
  if (grad.size() != params.size() || m_.size() != params.size())
    throw std::invalid_argument("Adam::step: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ActorCritic& net,
                     const std::string& meta_json) {
  using nlohmann::json;
  const NetConfig& c = net.config();
  json h;
  h["schema"] = kCheckpointSchema;
  h["config"] = {{"cloud_points", c.cloud_points}, {"encoder_widths", c.encoder_widths},
                 {"hidden", c.hidden},             {"pose_dim", c.pose_dim},
                 {"action_dim", c.action_dim},     {"init_std", c.init_std},
                 {"obs_clip", c.obs_clip},         {"seed", c.seed}};
  h["num_params"] = net.num_params();
  h["meta"] = json::parse(meta_json);
  const std::string header = h.dump();
  const Vector p = net.flat();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed for checkpoint '" + path.string() + "'");
}

ActorCritic load_checkpoint(const std::filesystem::path& path, std::string* meta_json) {
  using nlohmann::json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 24)) throw std::runtime_error("checkpoint: corrupt header length");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  const json h = json::parse(header);
  if (h.value("schema", std::string()) != kCheckpointSchema)
    throw std::runtime_error("checkpoint: unsupported schema");
  const json& jc = h.at("config");
  NetConfig c;
  c.cloud_points = jc.at("cloud_points");
  c.encoder_widths = jc.at("encoder_widths").get<std::vector<int>>();
  c.hidden = jc.at("hidden").get<std::vector<int>>();
  c.pose_dim = jc.at("pose_dim");
  c.action_dim = jc.at("action_dim");
  c.init_std = jc.at("init_std");
  c.obs_clip = jc.at("obs_clip");
  c.seed = jc.at("seed");
  ActorCritic net(c);
  const std::size_t n = h.at("num_params");
  if (n != net.num_params()) throw std::runtime_error("checkpoint: parameter count mismatch");
  Vector p(n);
  in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated parameter block");
  net.set_flat(p);
  if (meta_json) *meta_json = h.at("meta").dump();
  return net;
}

}  // namespace graspedit
