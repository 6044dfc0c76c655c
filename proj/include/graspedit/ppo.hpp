#pragma once

#include "graspedit/grasp_env.hpp"
#include "graspedit/neural.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace graspedit {

struct PPOConfig {
  double lr = 3e-4;
  double clip_eps = 0.2;
  double grad_norm_clip = 1.0;
  int epochs_per_iter = 5;
  int minibatches = 4;
  int rollout_steps_per_iter = 1;
  int batch_envs = 512;
  double init_std = 0.8;
  double value_coef = 0.5;
  double entropy_coef = 0.0;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// Which EditParams groups the policy may change; masked dimensions are
/// exactly zero in every emitted action.
struct ActionMask {
  bool xyz = true;
  bool rpy = true;
  bool q = true;

  std::vector<bool> dims(int dof) const;
  /// "xyz+rpy+q", "xyz", ... ; "none" for the empty mask.
  std::string label() const;
  /// Accepts comma or plus separated subsets of {xyz, rpy, q}, or "none".
  static ActionMask parse(const std::string& text);
  bool any() const { return xyz || rpy || q; }
};

/// The five action-space rows: none, xyz, xyz+q, xyz+rpy, xyz+rpy+q.
std::vector<ActionMask> ablation_masks();

/// Network inputs for a batch of observations.
struct ObsBatch {
  std::vector<Eigen::MatrixX3d> clouds;
  Matrix poses;

  BatchInput view() const;
  BatchInput view(const std::vector<int>& rows) const;
};

ObsBatch make_obs_batch(const std::vector<EnvInstance>& envs);

struct RolloutBatch {
  ObsBatch obs;
  Matrix u;             // raw pre-squash sample, batch x action_dim
  Matrix actions;       // rescaled EditParams vectors
  Vector gauss_log_prob;  // Gaussian part of the behaviour log density
  Vector log_prob;        // full density of the rescaled action
  Vector reward;
  Vector value;
  Vector advantages;      // normalised
  std::vector<RewardBreakdown> outcomes;

  int size() const { return static_cast<int>(reward.size()); }
};

/// (r - mean) / (std + 1e-8); all zeros when the rewards carry no signal
/// (zero variance).
Vector normalized_advantages(const Vector& reward, const Vector& value);

/// Steps every env in parallel (OpenMP) or serially; identical results.
std::vector<RewardBreakdown> step_batch(const GraspEnv& env, std::vector<EnvInstance>& envs,
                                        const std::vector<EditParams>& actions, bool parallel = true);

/// One transition per env. Sampling noise for env i comes from
/// derive_seed(seed, i).
RolloutBatch collect(const GraspEnv& env, const ActorCritic& net, const ActionMask& mask,
                     std::vector<EnvInstance>& envs, std::uint64_t seed, bool parallel = true);

struct LossParts {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

/// Clipped surrogate + value_coef * (V - r)^2 - entropy_coef * H on the
/// given rows; fills `grad` when non-null.
LossParts ppo_loss(const ActorCritic& net, const RolloutBatch& batch, const std::vector<int>& rows,
                   const PPOConfig& config, const ActionMask& mask, ActorCritic* grad,
                   bool parallel = true);

struct UpdateStats {
  double mean_reward = 0.0;
  double success_rate = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double grad_norm = 0.0;
  bool aborted = false;
};

/// PPO epochs over shuffled minibatches. On a non-finite loss the
/// parameters are restored and stats.aborted is set.
UpdateStats ppo_update(ActorCritic& net, Adam& opt, const RolloutBatch& batch,
                       const PPOConfig& config, const ActionMask& mask, std::uint64_t seed,
                       bool parallel = true);

/// Clamps log_std into [kLogStdMin, kLogStdMax].
void clamp_log_std(ActorCritic& net);

struct EvalSummary {
  int trials = 0;
  int successes = 0;
  int collisions = 0;
  std::vector<RewardBreakdown> outcomes;
  std::vector<std::size_t> object_index;

  double success_rate() const { return trials ? static_cast<double>(successes) / trials : 0.0; }
};

/// Deterministic evaluation with the mean action on collision-enabled
/// scenes; a trial succeeds when its reward is 1. A null network replays
/// the unedited demonstration.
EvalSummary evaluate_policy(const GraspEnv& env, const ActorCritic* net, const ActionMask& mask,
                            int trials, std::uint64_t seed, bool parallel = true);

/// Same as evaluate_policy on a prepared set of scenes (collision is
/// forced on).
EvalSummary evaluate_instances(const GraspEnv& env, const ActorCritic* net, const ActionMask& mask,
                               std::vector<EnvInstance> envs, bool parallel = true);

struct TrainOptions {
  int iterations = 200;
  int eval_every = 25;
  int eval_trials = 256;
  std::uint64_t seed = 0;
  ActionMask mask;
  NetConfig net;
  bool parallel = true;
  /// Stops after the first evaluation at or above this rate.
  std::optional<double> stop_at_eval;
};

struct IterationLog {
  int iteration = 0;
  double mean_reward = 0.0;
  double success_rate = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  std::optional<double> eval_success;
  double seconds = 0.0;
};

std::string to_jsonl(const IterationLog& log);

struct TrainResult {
  ActorCritic final_net;
  ActorCritic best_net;
  double best_eval = -1.0;
  int best_iteration = -1;
  std::vector<IterationLog> log;
};

/// Full training loop; `on_iteration` receives every log entry.
TrainResult train_ppo(const GraspEnv& env, const PPOConfig& config, const TrainOptions& options,
                      const std::function<void(const IterationLog&)>& on_iteration = {});

NetConfig default_net_config(const GraspEnv& env, const PPOConfig& config, std::uint64_t seed);

struct BCSample {
  Eigen::MatrixX3d cloud;
  Vector pose;    // 14
  Vector action;  // rescaled EditParams vector
};

struct SamplingResult {
  std::vector<BCSample> dataset;
  int trials = 0;
};

/// Uniform EditParams on fresh collision-enabled scenes; keeps rewarded
/// trials only. Stops after `target_successes` successes or `max_trials`.
SamplingResult sampling_baseline(const GraspEnv& env, int max_trials, int target_successes,
                                 std::uint64_t seed, const ActionMask& mask = {},
                                 bool parallel = true);

struct BCOptions {
  int epochs = 50;
  int minibatch = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Regresses squashed mean actions onto the dataset (MSE in units of the
/// action range). Returns the final epoch's mean loss. Throws on an empty
/// dataset.
double bc_train(const std::vector<BCSample>& dataset, ActorCritic& net, const Vector& scale,
                const ActionMask& mask, const BCOptions& options);

}  // namespace graspedit
