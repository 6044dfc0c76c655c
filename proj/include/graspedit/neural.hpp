#pragma once

#include "graspedit/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace graspedit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

/// y = W x + b, W stored out x in.
struct Linear {
  Matrix w;
  Vector b;
};

/// Orthogonal matrix (rows x cols) scaled by gain.
Matrix orthogonal_init(int rows, int cols, double gain, Rng& rng);

/// Dense stack with ELU on every hidden layer and a linear output.
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;  // input of each layer (batch x in)
    std::vector<Matrix> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  Mlp(const std::vector<int>& widths, Rng& rng, double hidden_gain, double output_gain);

  int in_dim() const { return static_cast<int>(layers.front().w.cols()); }
  int out_dim() const { return static_cast<int>(layers.back().w.rows()); }

  /// x is batch x in; returns batch x out.
  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients into `grad` (same shapes) and returns
  /// d loss / d x.
  Matrix backward(const Cache& cache, const Matrix& dy, Mlp& grad) const;

  std::vector<Linear> layers;
};

/// Shared per-point network (3 -> widths..., last layer linear), max-pooled
/// over points, followed by ELU. ELU is monotone, so activating after the
/// pool equals pooling activated rows.
class SetEncoder {
 public:
  SetEncoder() = default;
  SetEncoder(int points, const std::vector<int>& widths, Rng& rng);

  int points() const { return points_; }
  int out_dim() const { return static_cast<int>(net.layers.back().w.rows()); }

  /// Pooled pre-activation and argmax row per output (lowest index on ties).
  void pool(const Eigen::MatrixX3d& cloud, Eigen::Ref<Vector> pooled,
            Eigen::Ref<Eigen::VectorXi> argmax) const;
  /// Feature vector, ELU(pool).
  Vector encode(const Eigen::MatrixX3d& cloud) const;

  /// Backward for one cloud: d loss / d pooled -> parameter gradients.
  /// Only argmax rows receive gradient.
  void backward(const Eigen::MatrixX3d& cloud, const Eigen::Ref<const Eigen::VectorXi>& argmax,
                const Eigen::Ref<const Vector>& dpooled, SetEncoder& grad) const;

  Mlp net;

 private:
  int points_ = 512;
};

/// Serial and OpenMP-parallel batch pooling; results are bit-identical.
void pool_batch_serial(const SetEncoder& enc, const std::vector<const Eigen::MatrixX3d*>& clouds,
                       Matrix& pooled, Eigen::MatrixXi& argmax);
void pool_batch_parallel(const SetEncoder& enc, const std::vector<const Eigen::MatrixX3d*>& clouds,
                         Matrix& pooled, Eigen::MatrixXi& argmax);

struct NetConfig {
  int cloud_points = 512;
  std::vector<int> encoder_widths = {64, 128};
  std::vector<int> hidden = {128, 128, 64, 64};
  int pose_dim = 14;
  int action_dim = 8;
  double init_std = 0.8;
  double obs_clip = 5.0;
  std::uint64_t seed = 0;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// One encoder shared by an actor (action means) and a critic (value).
class ActorCritic {
 public:
  ActorCritic() = default;
  explicit ActorCritic(const NetConfig& config);

  const NetConfig& config() const { return config_; }
  int obs_dim() const { return encoder.out_dim() + config_.pose_dim; }
  int action_dim() const { return config_.action_dim; }

  /// Same shapes, all zeros (gradient container).
  ActorCritic zeros_like() const;
  std::size_t num_params() const;
  Vector flat() const;
  void set_flat(const Vector& v);

  SetEncoder encoder;
  Mlp actor;
  Mlp critic;
  Vector log_std;

 private:
  NetConfig config_;
};

struct BatchInput {
  std::vector<const Eigen::MatrixX3d*> clouds;
  Matrix poses;  // batch x pose_dim
};

struct ForwardCache {
  Matrix pooled;
  Eigen::MatrixXi argmax;
  Matrix obs_raw;  // before clipping
  Matrix obs;
  Mlp::Cache actor, critic;
  Matrix mu;      // batch x action_dim
  Vector value;   // batch
};

ForwardCache forward(const ActorCritic& net, const BatchInput& in, bool parallel = true);

/// Gradients of a loss given d loss / d mu, d loss / d log_std and
/// d loss / d value, back through both heads and the shared encoder.
ActorCritic backward(const ActorCritic& net, const BatchInput& in, const ForwardCache& cache,
                     const Matrix& dmu, const Vector& dlog_std, const Vector& dvalue);

/// Tanh-squashed diagonal Gaussian over raw u; action = scale * tanh(u).
/// Masked-out dimensions (mask[k] == false) are fixed at u = 0 and excluded
/// from the density.
double gaussian_log_prob(const Vector& u, const Vector& mu, const Vector& log_std,
                         const std::vector<bool>& mask);
/// log |d action / d u| summed over active dimensions.
double squash_log_det(const Vector& u, const Vector& scale, const std::vector<bool>& mask);

struct PolicySample {
  Vector u;
  Vector action;
  double log_prob = 0.0;  // density of the rescaled action
};

/// Draws u = mu + sigma * eps (eps ~ N(0, 1)); deterministic mode uses u = mu.
PolicySample policy_sample(const Vector& mu, const Vector& log_std, const Vector& scale,
                           const std::vector<bool>& mask, Rng* rng);
Vector squash(const Vector& u, const Vector& scale, const std::vector<bool>& mask);

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Vector& params, const Vector& grad);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_ = 3e-4, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  Vector m_, v_;
  long t_ = 0;
};

inline constexpr char kCheckpointSchema[] = "graspedit.checkpoint/1";

/// uint64 little-endian header length, JSON header, then little-endian
/// float64 parameters. `meta` is stored in the header verbatim.
void save_checkpoint(const std::filesystem::path& path, const ActorCritic& net,
                     const std::string& meta_json = "{}");
ActorCritic load_checkpoint(const std::filesystem::path& path, std::string* meta_json = nullptr);

}  // namespace graspedit
