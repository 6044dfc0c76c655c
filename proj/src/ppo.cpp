#include "graspedit/ppo.hpp"

#include "graspedit/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace graspedit {

void PPOConfig::validate() const {
  if (!(lr >= 0.0)) throw std::invalid_argument("ppo: lr must be non-negative");
  if (!(clip_eps > 0.0)) throw std::invalid_argument("ppo: clip_eps must be positive");
  if (!(grad_norm_clip > 0.0)) throw std::invalid_argument("ppo: grad_norm_clip must be positive");
  if (epochs_per_iter < 1 || minibatches < 1 || rollout_steps_per_iter != 1 || batch_envs < 1)
    throw std::invalid_argument("ppo: epochs, minibatches and batch must be positive; rollout steps must be 1");
  if (batch_envs % minibatches != 0)
    throw std::invalid_argument("ppo: minibatches must divide batch_envs");
  if (!(init_std > 0.0) || value_coef < 0.0 || entropy_coef < 0.0)
    throw std::invalid_argument("ppo: init_std must be positive, coefficients non-negative");
}

std::vector<bool> ActionMask::dims(int dof) const {
  std::vector<bool> d(6 + dof, q);
  std::fill(d.begin(), d.begin() + 3, xyz);
  std::fill(d.begin() + 3, d.begin() + 6, rpy);
  return d;
}

std::string ActionMask::label() const {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += '+';
    s += name;
  };
  add(xyz, "xyz");
  add(rpy, "rpy");
  add(q, "q");
  return s.empty() ? "none" : s;
}

ActionMask ActionMask::parse(const std::string& text) {
  ActionMask m{false, false, false};
  if (text == "none" || text.empty()) return m;
  std::string tok;
  std::istringstream in(text);
  while (std::getline(in, tok, text.find('+') != std::string::npos ? '+' : ',')) {
    if (tok == "xyz") m.xyz = true;
    else if (tok == "rpy") m.rpy = true;
    else if (tok == "q") m.q = true;
    else throw std::invalid_argument("mask: unknown component '" + tok + "' (expected xyz, rpy, q)");
  }
  return m;
}

std::vector<ActionMask> ablation_masks() {
  return {{false, false, false}, {true, false, false}, {true, false, true}, {true, true, false},
          {true, true, true}};
}

BatchInput ObsBatch::view() const {
  BatchInput in;
  for (const auto& c : clouds) in.clouds.push_back(&c);
  in.poses = poses;
  return in;
}

BatchInput ObsBatch::view(const std::vector<int>& rows) const {
  BatchInput in;
  in.poses.resize(rows.size(), poses.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    in.clouds.push_back(&clouds[rows[i]]);
    in.poses.row(i) = poses.row(rows[i]);
  }
  return in;
}

ObsBatch make_obs_batch(const std::vector<EnvInstance>& envs) {
  ObsBatch b;
  b.clouds.reserve(envs.size());
  b.poses.resize(envs.size(), 14);
  for (std::size_t i = 0; i < envs.size(); ++i) {
    b.clouds.push_back(cloud_input(envs[i].obs));
    const auto ee = envs[i].obs.ee_pose0.to_array();
    const auto ob = envs[i].obs.obj_pose0.to_array();
    for (int k = 0; k < 7; ++k) {
      b.poses(i, k) = ee[k];
      b.poses(i, 7 + k) = ob[k];
    }
  }
  return b;
}

Vector normalized_advantages(const Vector& reward, const Vector& value) {
  const int n = static_cast<int>(reward.size());
  if (n == 0) return {};
  const double rmean = reward.mean();
  if ((reward.array() == rmean).all()) return Vector::Zero(n);
  const Vector a = reward - value;
  const double mean = a.mean();
  const double var = (a.array() - mean).square().sum() / n;
  return (a.array() - mean) / (std::sqrt(var) + 1e-8);
}

std::vector<RewardBreakdown> step_batch(const GraspEnv& env, std::vector<EnvInstance>& envs,
                                        const std::vector<EditParams>& actions, bool parallel) {
  if (actions.size() != envs.size()) throw std::invalid_argument("step_batch: size mismatch");
  std::vector<RewardBreakdown> out(envs.size());
  const int n = static_cast<int>(envs.size());
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 8)
    for (int i = 0; i < n; ++i) out[i] = env.step(envs[i], actions[i]);
  } else {
    for (int i = 0; i < n; ++i) out[i] = env.step(envs[i], actions[i]);
  }
  return out;
}

namespace {

Vector scale_vector(int dof) {
  const std::vector<double> s = action_scale(dof);
  return Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

RolloutBatch collect(const GraspEnv& env, const ActorCritic& net, const ActionMask& mask,
                     std::vector<EnvInstance>& envs, std::uint64_t seed, bool parallel) {
  const int n = static_cast<int>(envs.size());
  const int dof = env.hand().dof();
  if (net.action_dim() != env.action_dim())
    throw std::invalid_argument("collect: network action size does not match the hand");
  const std::vector<bool> dims = mask.dims(dof);
  const Vector scale = scale_vector(dof);

  RolloutBatch b;
  b.obs = make_obs_batch(envs);
  const ForwardCache fc = forward(net, b.obs.view(), parallel);
  b.u.resize(n, net.action_dim());
  b.actions.resize(n, net.action_dim());
  b.gauss_log_prob.resize(n);
  b.log_prob.resize(n);
  std::vector<EditParams> actions(n);
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const PolicySample s = policy_sample(fc.mu.row(i).transpose(), net.log_std, scale, dims, &rng);
    b.u.row(i) = s.u.transpose();
    b.actions.row(i) = s.action.transpose();
    b.gauss_log_prob[i] = gaussian_log_prob(s.u, fc.mu.row(i).transpose(), net.log_std, dims);
    b.log_prob[i] = s.log_prob;
    actions[i] = EditParams::from_vector(to_std(s.action));
  }
  b.outcomes = step_batch(env, envs, actions, parallel);
  b.reward.resize(n);
  for (int i = 0; i < n; ++i) b.reward[i] = b.outcomes[i].reward;
  b.value = fc.value;
  b.advantages = normalized_advantages(b.reward, b.value);
  return b;
}

LossParts ppo_loss(const ActorCritic& net, const RolloutBatch& batch, const std::vector<int>& rows,
                   const PPOConfig& config, const ActionMask& mask, ActorCritic* grad,
                   bool parallel) {
  const int m = static_cast<int>(rows.size());
  const int ad = net.action_dim();
  const std::vector<bool> dims = mask.dims(ad - 6);
  const BatchInput in = batch.obs.view(rows);
  const ForwardCache fc = forward(net, in, parallel);
  const Vector inv_var = (-2.0 * net.log_std).array().exp();

  LossParts lp;
  Matrix dmu = Matrix::Zero(m, ad);
  Vector dlog_std = Vector::Zero(ad);
  Vector dvalue(m);
  const double eps = config.clip_eps;
  for (int r = 0; r < m; ++r) {
    const int i = rows[r];
    const Vector u = batch.u.row(i).transpose();
    const Vector mu = fc.mu.row(r).transpose();
    const double lnew = gaussian_log_prob(u, mu, net.log_std, dims);
    const double ratio = std::exp(lnew - batch.gauss_log_prob[i]);
    const double a = batch.advantages[i];
    const double s1 = ratio * a;
    const double s2 = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * a;
    lp.policy -= std::min(s1, s2) / m;
    if (std::abs(ratio - 1.0) > eps) lp.clip_fraction += 1.0 / m;
    lp.approx_kl += ((ratio - 1.0) - (lnew - batch.gauss_log_prob[i])) / m;
    const double g = s1 <= s2 ? -a * ratio / m : 0.0;
    if (g != 0.0) {
      for (int k = 0; k < ad; ++k) {
        if (!dims[k]) continue;
        const double d = u[k] - mu[k];
        dmu(r, k) = g * d * inv_var[k];
        dlog_std[k] += g * (d * d * inv_var[k] - 1.0);
      }
    }
    const double verr = fc.value[r] - batch.reward[i];
    lp.value += config.value_coef * verr * verr / m;
    dvalue[r] = 2.0 * config.value_coef * verr / m;
  }
  double entropy = 0.0;
  for (int k = 0; k < ad; ++k)
    if (dims[k]) entropy += net.log_std[k] + 0.5 + 0.91893853320467274178;
  lp.entropy = entropy;
  if (config.entropy_coef != 0.0)
    for (int k = 0; k < ad; ++k)
      if (dims[k]) dlog_std[k] -= config.entropy_coef;
  lp.total = lp.policy + lp.value - config.entropy_coef * entropy;
  if (grad) *grad = backward(net, in, fc, dmu, dlog_std, dvalue);
  return lp;
}

void clamp_log_std(ActorCritic& net) {
  net.log_std = net.log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

UpdateStats ppo_update(ActorCritic& net, Adam& opt, const RolloutBatch& batch,
                       const PPOConfig& config, const ActionMask& mask, std::uint64_t seed,
                       bool parallel) {
  config.validate();
  const int n = batch.size();
  if (n % config.minibatches != 0) throw std::invalid_argument("ppo_update: minibatches must divide batch");
  UpdateStats st;
  st.mean_reward = batch.reward.mean();
  int succ = 0;
  for (const auto& o : batch.outcomes) succ += o.success;
  st.success_rate = static_cast<double>(succ) / n;

  const Vector snapshot = net.flat();
  Vector params = snapshot;
  const int mb = n / config.minibatches;
  int updates = 0;
  std::vector<int> order(n);
  for (int e = 0; e < config.epochs_per_iter; ++e) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(e)));
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (int b = 0; b < config.minibatches; ++b) {
      const std::vector<int> rows(order.begin() + b * mb, order.begin() + (b + 1) * mb);
      ActorCritic g;
      const LossParts lp = ppo_loss(net, batch, rows, config, mask, &g, parallel);
      Vector gv = g.flat();
      const double norm = gv.norm();
      if (!std::isfinite(lp.total) || !std::isfinite(norm)) {
        net.set_flat(snapshot);
        st.aborted = true;
        return st;
      }
      if (norm > config.grad_norm_clip) gv *= config.grad_norm_clip / norm;
      opt.step(params, gv);
      net.set_flat(params);
      clamp_log_std(net);
      params = net.flat();
      st.clip_fraction += lp.clip_fraction;
      st.approx_kl += lp.approx_kl;
      st.policy_loss += lp.policy;
      st.value_loss += lp.value;
      st.grad_norm += norm;
      ++updates;
    }
  }
  st.clip_fraction /= updates;
  st.approx_kl /= updates;
  st.policy_loss /= updates;
  st.value_loss /= updates;
  st.grad_norm /= updates;
  return st;
}

EvalSummary evaluate_instances(const GraspEnv& env, const ActorCritic* net, const ActionMask& mask,
                               std::vector<EnvInstance> envs, bool parallel) {
  const int trials = static_cast<int>(envs.size());
  if (trials < 1) throw std::invalid_argument("evaluate: trials must be at least 1");
  for (auto& e : envs) e.scene.collision_enabled = true;
  const int dof = env.hand().dof();
  std::vector<EditParams> actions(trials, EditParams::zero(dof));
  if (net) {
    const ObsBatch ob = make_obs_batch(envs);
    const ForwardCache fc = forward(*net, ob.view(), parallel);
    const Vector scale = scale_vector(dof);
    const std::vector<bool> dims = mask.dims(dof);
    for (int i = 0; i < trials; ++i)
      actions[i] = EditParams::from_vector(to_std(squash(fc.mu.row(i).transpose(), scale, dims)));
  }
  EvalSummary s;
  s.trials = trials;
  s.outcomes = step_batch(env, envs, actions, parallel);
  for (int i = 0; i < trials; ++i) {
    s.successes += s.outcomes[i].reward == 1.0;
    s.collisions += s.outcomes[i].collided;
    s.object_index.push_back(envs[i].object_index);
  }
  return s;
}

EvalSummary evaluate_policy(const GraspEnv& env, const ActorCritic* net, const ActionMask& mask,
                            int trials, std::uint64_t seed, bool parallel) {
  if (trials < 1) throw std::invalid_argument("evaluate: trials must be at least 1");
  return evaluate_instances(env, net, mask, env.reset(trials, seed), parallel);
}

std::string to_jsonl(const IterationLog& log) {
  nlohmann::json j = {{"iteration", log.iteration},         {"mean_reward", log.mean_reward},
                      {"success_rate", log.success_rate},   {"clip_fraction", log.clip_fraction},
                      {"kl", log.approx_kl},                {"policy_loss", log.policy_loss},
                      {"value_loss", log.value_loss},       {"seconds", log.seconds}};
  if (log.eval_success) j["eval_success"] = *log.eval_success;
  return j.dump();
}

NetConfig default_net_config(const GraspEnv& env, const PPOConfig& config, std::uint64_t seed) {
  NetConfig c;
  c.action_dim = env.action_dim();
  c.init_std = config.init_std;
  c.seed = seed;
  return c;
}

TrainResult train_ppo(const GraspEnv& env, const PPOConfig& config, const TrainOptions& options,
                      const std::function<void(const IterationLog&)>& on_iteration) {
  config.validate();
  if (options.iterations < 1) throw std::invalid_argument("train: iterations must be positive");
  TrainResult res;
  ActorCritic net(options.net);
  if (net.action_dim() != env.action_dim())
    throw std::invalid_argument("train: network action size does not match the hand");
  Adam opt(net.num_params(), config.lr);
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t eval_seed = derive_seed(options.seed, 0xe7a1);
  for (int it = 0; it < options.iterations; ++it) {
    std::vector<EnvInstance> envs = env.reset(config.batch_envs, derive_seed(options.seed, 3 * it + 1));
    const RolloutBatch batch =
        collect(env, net, options.mask, envs, derive_seed(options.seed, 3 * it + 2), options.parallel);
    const UpdateStats st =
        ppo_update(net, opt, batch, config, options.mask, derive_seed(options.seed, 3 * it + 3), options.parallel);
    IterationLog log;
    log.iteration = it;
    log.mean_reward = st.mean_reward;
    log.success_rate = st.success_rate;
    log.clip_fraction = st.clip_fraction;
    log.approx_kl = st.approx_kl;
    log.policy_loss = st.policy_loss;
    log.value_loss = st.value_loss;
    const bool last = it + 1 == options.iterations;
    if (options.eval_every > 0 && ((it + 1) % options.eval_every == 0 || last)) {
      const EvalSummary ev =
          evaluate_policy(env, &net, options.mask, options.eval_trials, eval_seed, options.parallel);
      log.eval_success = ev.success_rate();
      if (ev.success_rate() > res.best_eval) {
        res.best_eval = ev.success_rate();
        res.best_iteration = it;
        res.best_net = net;
      }
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back(log);
    if (on_iteration) on_iteration(log);
    if (options.stop_at_eval && log.eval_success && *log.eval_success >= *options.stop_at_eval) break;
  }
  res.final_net = net;
  if (res.best_iteration < 0) res.best_net = net;
  return res;
}

SamplingResult sampling_baseline(const GraspEnv& env, int max_trials, int target_successes,
                                 std::uint64_t seed, const ActionMask& mask, bool parallel) {
  if (max_trials < 0 || target_successes < 0)
    throw std::invalid_argument("sampling_baseline: budgets must be non-negative");
  SamplingResult res;
  const int dof = env.hand().dof();
  const std::vector<double> scale = action_scale(dof);
  const std::vector<bool> dims = mask.dims(dof);
  constexpr int kChunk = 1024;
  for (int chunk = 0; res.trials < max_trials && static_cast<int>(res.dataset.size()) < target_successes;
       ++chunk) {
    const int n = std::min(kChunk, max_trials - res.trials);
    std::vector<EnvInstance> envs = env.reset(n, derive_seed(seed, 2 * chunk));
    for (auto& e : envs) e.scene.collision_enabled = true;
    std::vector<EditParams> actions(n);
    for (int i = 0; i < n; ++i) {
      Rng rng(derive_seed(derive_seed(seed, 2 * chunk + 1), i));
      std::vector<double> v(scale.size(), 0.0);
      for (std::size_t k = 0; k < v.size(); ++k)
        if (dims[k]) v[k] = rng.uniform(-scale[k], scale[k]);
      actions[i] = EditParams::from_vector(v);
    }
    const auto out = step_batch(env, envs, actions, parallel);
    const ObsBatch ob = make_obs_batch(envs);
    for (int i = 0; i < n && static_cast<int>(res.dataset.size()) < target_successes; ++i) {
      ++res.trials;
      if (!(out[i].reward > 0.0)) continue;
      const std::vector<double> a = actions[i].to_vector();
      res.dataset.push_back({ob.clouds[i], ob.poses.row(i).transpose(),
                             Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size()))});
    }
  }
  return res;
}

double bc_train(const std::vector<BCSample>& dataset, ActorCritic& net, const Vector& scale,
                const ActionMask& mask, const BCOptions& options) {
  if (dataset.empty()) throw std::invalid_argument("bc_train: empty dataset");
  const int n = static_cast<int>(dataset.size());
  const int ad = net.action_dim();
  const std::vector<bool> dims = mask.dims(ad - 6);
  Adam opt(net.num_params(), options.lr);
  Vector params = net.flat();
  std::vector<int> order(n);
  double epoch_loss = 0.0;
  for (int e = 0; e < options.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(e)));
    std::shuffle(order.begin(), order.end(), rng.engine());
    epoch_loss = 0.0;
    for (int start = 0; start < n; start += options.minibatch) {
      const int m = std::min(options.minibatch, n - start);
      BatchInput in;
      in.poses.resize(m, net.config().pose_dim);
      for (int r = 0; r < m; ++r) {
        const BCSample& s = dataset[order[start + r]];
        in.clouds.push_back(&s.cloud);
        in.poses.row(r) = s.pose.transpose();
      }
      const ForwardCache fc = forward(net, in);
      Matrix dmu = Matrix::Zero(m, ad);
      double loss = 0.0;
      for (int r = 0; r < m; ++r) {
        const BCSample& s = dataset[order[start + r]];
        for (int k = 0; k < ad; ++k) {
          if (!dims[k]) continue;
          const double t = std::tanh(fc.mu(r, k));
          const double err = t - s.action[k] / scale[k];
          loss += err * err / m;
          dmu(r, k) = 2.0 * err * (1.0 - t * t) / m;
        }
      }
      ActorCritic g = backward(net, in, fc, dmu, Vector::Zero(ad), Vector::Zero(m));
      Vector gv = g.flat();
      const double norm = gv.norm();
      if (norm > 1.0) gv /= norm;
      opt.step(params, gv);
      net.set_flat(params);
      epoch_loss += loss * m / n;
    }
  }
  return epoch_loss;
}

}  // namespace graspedit
