#include "graspedit/experiment.hpp"

#include "graspedit/rng.hpp"

#include <json.hpp>

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace graspedit {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path = p;
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text, const std::filesystem::path& base) {
  ExperimentConfig c;
  c.base = base;
  json j;
  try {
    j = json::parse(text);
    const json& env = j.at("env");
    c.env = EnvConfig::from_json(env.dump(), base);
    if (env.contains("test_dataset")) c.test_dataset = resolve(base, env["test_dataset"].get<std::string>());
    c.ppo.batch_envs = c.env.batch;
    if (j.contains("ppo")) {
      const json& p = j["ppo"];
      read(p, "lr", c.ppo.lr);
      read(p, "clip_eps", c.ppo.clip_eps);
      read(p, "grad_norm_clip", c.ppo.grad_norm_clip);
      read(p, "epochs_per_iter", c.ppo.epochs_per_iter);
      read(p, "minibatches", c.ppo.minibatches);
      read(p, "rollout_steps_per_iter", c.ppo.rollout_steps_per_iter);
      read(p, "init_std", c.ppo.init_std);
      read(p, "value_coef", c.ppo.value_coef);
      read(p, "entropy_coef", c.ppo.entropy_coef);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      read(t, "iterations", c.train.iterations);
      read(t, "eval_every", c.train.eval_every);
      read(t, "eval_trials", c.train.eval_trials);
      if (t.contains("mask")) c.train.mask = ActionMask::parse(t["mask"].get<std::string>());
    }
    if (j.contains("eval")) {
      read(j["eval"], "trials", c.eval.trials);
      read(j["eval"], "per_object_trials", c.eval.per_object_trials);
    }
    if (j.contains("baseline")) {
      const json& b = j["baseline"];
      read(b, "max_trials", c.baseline.max_trials);
      read(b, "target_successes", c.baseline.target_successes);
      read(b, "bc_epochs", c.baseline.bc.epochs);
      read(b, "bc_minibatch", c.baseline.bc.minibatch);
      read(b, "bc_lr", c.baseline.bc.lr);
    }
    if (j.contains("objects")) {
      const json& o = j["objects"];
      read(o, "train", c.objects.train);
      read(o, "test", c.objects.test);
      read(o, "seed", c.objects.seed);
      if (o.contains("families")) {
        c.objects.families.clear();
        for (const auto& f : o["families"]) c.objects.families.push_back(parse_family(f.get<std::string>()));
      }
    }
    if (j.contains("demo_script")) {
      const json& d = j["demo_script"];
      if (d.contains("approach")) c.demo_script.approach = parse_approach(d["approach"].get<std::string>());
      read(d, "standoff", c.demo_script.standoff);
      read(d, "depth_offset", c.demo_script.depth_offset);
      read(d, "lift", c.demo_script.lift);
    }
    read(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("experiment config: ") + e.what());
  }
  c.ppo.validate();
  if (c.train.iterations < 1 || c.train.eval_every < 1 || c.train.eval_trials < 1)
    throw std::invalid_argument("experiment config: train budgets must be positive");
  if (c.eval.trials < 1) throw std::invalid_argument("experiment config: eval.trials must be positive");
  j["seed"] = c.seed;
  c.json_text = j.dump();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str(), path.parent_path());
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  json j = json::parse(json_text);
  j["seed"] = s;
  json_text = j.dump();
}

std::vector<std::string> ExperimentConfig::missing_assets(bool need_demo) const {
  std::vector<std::string> missing;
  auto check = [&](const char* what, const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) missing.push_back(std::string(what) + " '" + p.string() + "'");
  };
  check("dataset", env.dataset);
  check("hand", env.hand);
  if (need_demo) check("demo", env.demo);
  if (test_dataset) check("test dataset", *test_dataset);
  return missing;
}

std::string ExperimentConfig::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : json_text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

GraspEnv make_env(const ExperimentConfig& config, bool held_out) {
  const auto missing = config.missing_assets();
  if (!missing.empty()) {
    std::string msg = "missing assets:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw std::runtime_error(msg);
  }
  if (held_out && !config.test_dataset) throw std::invalid_argument("config has no env.test_dataset");
  return GraspEnv(load_dataset(held_out ? *config.test_dataset : config.env.dataset),
                  load_hand_spec(config.env.hand), load_demo(config.env.demo), config.env.options);
}

TrainOptions train_options(const ExperimentConfig& config, const GraspEnv& env) {
  TrainOptions o;
  o.iterations = config.train.iterations;
  o.eval_every = config.train.eval_every;
  o.eval_trials = config.train.eval_trials;
  o.seed = config.seed;
  o.mask = config.train.mask;
  o.net = default_net_config(env, config.ppo, config.seed);
  return o;
}

std::string format_rate(int successes, int trials) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", trials ? static_cast<double>(successes) / trials : 0.0);
  return buf;
}

void write_markdown(std::ostream& out, const Report& report) {
  out << "# " << report.title << "\n\n";
  out << "- seed: " << report.seed << "\n";
  out << "- config fingerprint: " << report.fingerprint << "\n";
  for (const auto& [k, v] : report.meta) out << "- " << k << ": " << v << "\n";
  for (const ReportTable& t : report.tables) {
    out << "\n## " << t.name << "\n\n|";
    for (const auto& c : t.columns) out << ' ' << c << " |";
    out << "\n|";
    for (std::size_t i = 0; i < t.columns.size(); ++i) out << " --- |";
    out << '\n';
    for (const auto& row : t.rows) {
      out << '|';
      for (const auto& cell : row) out << ' ' << cell << " |";
      out << '\n';
    }
  }
  out << "\n## config\n\n```json\n" << json::parse(report.config_json).dump(2) << "\n```\n";
}

void write_csv(std::ostream& out, const Report& report, const ReportTable& table) {
  out << "# seed=" << report.seed << "\n# config_fingerprint=" << report.fingerprint
      << "\n# config=" << report.config_json << '\n';
  for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

void write_report(const std::filesystem::path& dir, const Report& report) {
  std::filesystem::create_directories(dir);
  std::ofstream md(dir / "report.md");
  if (!md) throw std::runtime_error("cannot write report in '" + dir.string() + "'");
  write_markdown(md, report);
  for (const ReportTable& t : report.tables) {
    std::ofstream csv(dir / (t.name + ".csv"));
    write_csv(csv, report, t);
  }
}

std::vector<EnvInstance> per_object_instances(const GraspEnv& env, int per_object, std::uint64_t seed) {
  if (per_object < 1) throw std::invalid_argument("per_object_instances: need at least one trial");
  std::vector<EnvInstance> envs;
  const double h = 0.5 * env.options().region;
  for (std::size_t o = 0; o < env.dataset().size(); ++o)
    for (int k = 0; k < per_object; ++k) {
      Rng rng(derive_seed(derive_seed(seed, o), static_cast<std::uint64_t>(k)));
      const double x = rng.uniform(-h, h);
      const double y = rng.uniform(-h, h);
      const double yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
      envs.push_back(env.make_instance(o, x, y, yaw, true));
    }
  return envs;
}

Report eval_report(const ExperimentConfig& config, const GraspEnv& env, const ActorCritic* net,
                   const ActionMask& mask, int trials, int per_object_trials, bool parallel) {
  if (trials < 100 || per_object_trials < 100)
    throw std::invalid_argument("eval: every reported cell needs at least 100 trials");
  if (net && (net->action_dim() != env.action_dim() ||
              net->config().cloud_points != static_cast<int>(env.dataset().objects[0]->point_cloud.size())))
    throw std::invalid_argument("eval: checkpoint action/cloud dimensions do not match the hand and dataset");
  Report r;
  r.title = net ? "Policy evaluation" : "Replay-only evaluation";
  r.config_json = config.json_text;
  r.fingerprint = config.fingerprint();
  r.seed = config.seed;
  r.meta.push_back({"mask", mask.label()});
  const EvalSummary all = evaluate_policy(env, net, mask, trials, derive_seed(config.seed, 0xe7a1), parallel);
  const EvalSummary per = evaluate_instances(
      env, net, mask, per_object_instances(env, per_object_trials, derive_seed(config.seed, 0x0b1e)), parallel);

  const std::vector<std::string> cols = {"cell", "trials", "successes", "success_rate", "collisions"};
  auto row = [](const std::string& name, int n, int s, int c) {
    return std::vector<std::string>{name, std::to_string(n), std::to_string(s), format_rate(s, n),
                                    std::to_string(c)};
  };
  ReportTable dataset{"dataset", cols, {row("all", all.trials, all.successes, all.collisions)}};
  std::map<std::string, std::array<int, 3>> fam;
  ReportTable objects{"objects", cols, {}};
  const std::size_t n_obj = env.dataset().size();
  for (std::size_t o = 0; o < n_obj; ++o) {
    int s = 0, c = 0;
    for (int k = 0; k < per_object_trials; ++k) {
      const RewardBreakdown& b = per.outcomes[o * per_object_trials + k];
      s += b.reward == 1.0;
      c += b.collided;
    }
    const ObjectAsset& a = *env.dataset().objects[o];
    objects.rows.push_back(row(a.id, per_object_trials, s, c));
    auto& f = fam[to_string(a.family)];
    f[0] += per_object_trials;
    f[1] += s;
    f[2] += c;
  }
  ReportTable families{"families", cols, {}};
  for (const auto& [name, v] : fam) families.rows.push_back(row(name, v[0], v[1], v[2]));
  r.tables = {dataset, families, objects};
  return r;
}

SamplingBC run_sampling_bc(const GraspEnv& env, const NetConfig& net_config,
                           const BaselineSection& options, std::uint64_t seed, bool parallel) {
  SamplingBC out;
  const SamplingResult s =
      sampling_baseline(env, options.max_trials, options.target_successes, derive_seed(seed, 0x5a),
                        ActionMask{}, parallel);
  out.dataset_size = static_cast<int>(s.dataset.size());
  out.sampling_trials = s.trials;
  out.net = ActorCritic(net_config);
  const std::vector<double> sc = action_scale(env.hand().dof());
  const Vector scale = Eigen::Map<const Vector>(sc.data(), static_cast<Eigen::Index>(sc.size()));
  BCOptions bc = options.bc;
  bc.seed = derive_seed(seed, 0xbc);
  out.bc_loss = bc_train(s.dataset, out.net, scale, ActionMask{}, bc);
  return out;
}

}  // namespace graspedit
