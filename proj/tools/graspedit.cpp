#include "graspedit/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace graspedit;
namespace fs = std::filesystem;

namespace {

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> trials;
  std::vector<std::string> masks;
  std::string checkpoint;
  std::string hand;
  std::string approach;
  std::optional<double> depth_offset;
  bool replay = false;
  bool held_out = false;
};

ExperimentConfig load_config(const Args& a) {
  ExperimentConfig c = ExperimentConfig::load(a.config);
  if (a.seed) c.set_seed(*a.seed);
  return c;
}

ActionMask mask_or(const Args& a, const ActionMask& fallback) {
  if (a.masks.size() > 1) throw std::invalid_argument("only one --mask is accepted here");
  return a.masks.empty() ? fallback : ActionMask::parse(a.masks.front());
}

std::string checkpoint_meta(const ExperimentConfig& c, const ActionMask& mask, int iteration, double eval) {
  nlohmann::json m = {{"config", nlohmann::json::parse(c.json_text)},
                      {"seed", c.seed},
                      {"mask", mask.label()},
                      {"iteration", iteration},
                      {"eval_success", eval}};
  return m.dump();
}

TrainResult train(const ExperimentConfig& c, const GraspEnv& env, const ActionMask& mask,
                  std::ostream* log) {
  TrainOptions o = train_options(c, env);
  o.mask = mask;
  return train_ppo(env, c.ppo, o, [&](const IterationLog& l) {
    if (log) *log << to_jsonl(l) << '\n' << std::flush;
    if (l.eval_success)
      std::cerr << "[" << mask.label() << "] iteration " << l.iteration << " eval " << *l.eval_success
                << '\n';
  });
}

int cmd_gen_objects(const Args& a) {
  if (a.out.empty()) throw std::invalid_argument("gen-objects: --out is required");
  ObjectsSection o;
  if (!a.config.empty()) o = load_config(a).objects;
  if (a.seed) o.seed = *a.seed;
  const fs::path out = a.out;
  write_dataset(out / "train", generate_dataset(o.train, o.families, o.seed, "train"));
  if (o.test > 0) write_dataset(out / "test", generate_dataset(o.test, o.families, derive_seed(o.seed, 1), "test"));
  std::cout << "wrote " << o.train << " train and " << o.test << " held-out objects to " << out << '\n';
  return 0;
}

int cmd_record_demo(const Args& a) {
  if (a.out.empty()) throw std::invalid_argument("record-demo: --out is required");
  DemoScript script;
  fs::path hand_path = a.hand;
  if (!a.config.empty()) {
    const ExperimentConfig c = load_config(a);
    script = c.demo_script;
    if (hand_path.empty()) hand_path = c.env.hand;
  }
  if (hand_path.empty()) throw std::invalid_argument("record-demo: --hand or --config is required");
  if (!a.approach.empty()) script.approach = parse_approach(a.approach);
  if (a.depth_offset) script.depth_offset = *a.depth_offset;
  const HandModel hand = load_hand_spec(hand_path);
  Scene scene;
  scene.object = place_on_table(make_reference_cube(), 0.0, 0.0, 0.0);
  const Demonstration demo = record_scripted_demo(scene, hand, script);
  save_demo(a.out, demo);
  std::cout << "recorded " << to_string(script.approach) << " demo for " << hand.name() << ": T_D="
            << demo.last_step() << " T_lift=" << demo.t_lift << " -> " << a.out << '\n';
  return 0;
}

int cmd_train(const Args& a) {
  if (a.config.empty() || a.out.empty()) throw std::invalid_argument("train: --config and --out are required");
  const ExperimentConfig c = load_config(a);
  const GraspEnv env = make_env(c);
  const ActionMask mask = mask_or(a, c.train.mask);
  const fs::path out = a.out;
  fs::create_directories(out);
  std::ofstream log(out / "train_log.jsonl");
  const TrainResult r = train(c, env, mask, &log);
  save_checkpoint(out / "best.ckpt", r.best_net, checkpoint_meta(c, mask, r.best_iteration, r.best_eval));
  save_checkpoint(out / "final.ckpt", r.final_net,
                  checkpoint_meta(c, mask, c.train.iterations - 1, r.log.back().eval_success.value_or(-1.0)));
  std::cout << "best eval " << r.best_eval << " at iteration " << r.best_iteration << "; checkpoints in "
            << out << '\n';
  return 0;
}

int cmd_eval(const Args& a) {
  if (a.config.empty() || a.out.empty()) throw std::invalid_argument("eval: --config and --out are required");
  if (a.checkpoint.empty() && !a.replay) throw std::invalid_argument("eval: give --checkpoint or --replay");
  const ExperimentConfig c = load_config(a);
  const int trials = a.trials.value_or(c.eval.trials);
  if (trials < 1) throw std::invalid_argument("eval: --trials must be positive");
  const GraspEnv env = make_env(c, a.held_out);
  std::optional<ActorCritic> net;
  ActionMask mask = ActionMask::parse("none");
  if (!a.replay) {
    std::string meta;
    net = load_checkpoint(a.checkpoint, &meta);
    mask = ActionMask::parse(nlohmann::json::parse(meta).value("mask", std::string("xyz+rpy+q")));
  }
  mask = mask_or(a, mask);
  Report r = eval_report(c, env, net ? &*net : nullptr, mask, trials, c.eval.per_object_trials);
  r.meta.push_back({"split", a.held_out ? "held-out" : "train"});
  if (net) r.meta.push_back({"checkpoint", a.checkpoint});
  write_report(a.out, r);
  std::cout << r.title << ": success " << r.tables[0].rows[0][3] << " over " << trials << " trials -> "
            << a.out << '\n';
  return 0;
}

std::vector<std::string> mask_columns(const ActionMask& m) {
  return {m.xyz ? "x" : "", m.rpy ? "x" : "", m.q ? "x" : ""};
}

int cmd_ablate(const Args& a) {
  if (a.config.empty() || a.out.empty()) throw std::invalid_argument("ablate: --config and --out are required");
  const ExperimentConfig c = load_config(a);
  const GraspEnv env = make_env(c);
  std::optional<GraspEnv> test;
  if (c.test_dataset) test.emplace(make_env(c, true));
  const int trials = a.trials.value_or(c.eval.trials);
  if (trials < 100) throw std::invalid_argument("ablate: every reported cell needs at least 100 trials");
  std::vector<ActionMask> masks;
  for (const auto& m : a.masks) masks.push_back(ActionMask::parse(m));
  if (masks.empty()) masks = ablation_masks();
  const fs::path out = a.out;
  fs::create_directories(out);

  Report r;
  r.title = "Action-space ablation";
  r.config_json = c.json_text;
  r.fingerprint = c.fingerprint();
  r.seed = c.seed;
  r.meta.push_back({"iterations", std::to_string(c.train.iterations)});
  r.meta.push_back({"eval trials per cell", std::to_string(trials)});
  ReportTable t{"ablation", {"dxyz", "drpy", "dq", "mask", "train_success", "train_trials"}, {}};
  if (test) {
    t.columns.push_back("test_success");
    t.columns.push_back("test_trials");
  }
  const std::uint64_t eval_seed = derive_seed(c.seed, 0xab1a);
  for (const ActionMask& m : masks) {
    std::optional<ActorCritic> net;
    if (m.any()) {
      std::ofstream log(out / ("train_log_" + m.label() + ".jsonl"));
      net = train(c, env, m, &log).best_net;
      save_checkpoint(out / (m.label() + ".ckpt"), *net, checkpoint_meta(c, m, -1, -1.0));
    }
    const ActorCritic* p = net ? &*net : nullptr;
    const EvalSummary tr = evaluate_policy(env, p, m, trials, eval_seed);
    std::vector<std::string> row = mask_columns(m);
    row.insert(row.end(), {m.label(), format_rate(tr.successes, tr.trials), std::to_string(tr.trials)});
    if (test) {
      const EvalSummary te = evaluate_policy(*test, p, m, trials, eval_seed);
      row.insert(row.end(), {format_rate(te.successes, te.trials), std::to_string(te.trials)});
    }
    std::cerr << "[ablate] " << m.label() << " train " << row[4] << '\n';
    t.rows.push_back(row);
  }
  r.tables = {t};
  write_report(out, r);
  write_markdown(std::cout, r);
  return 0;
}

int cmd_baseline(const Args& a) {
  if (a.config.empty() || a.out.empty()) throw std::invalid_argument("baseline: --config and --out are required");
  const ExperimentConfig c = load_config(a);
  const GraspEnv env = make_env(c);
  const int trials = a.trials.value_or(c.eval.trials);
  if (trials < 100) throw std::invalid_argument("baseline: every reported cell needs at least 100 trials");
  const fs::path out = a.out;
  fs::create_directories(out);
  const ActionMask full;

  ActorCritic rl;
  if (!a.checkpoint.empty()) {
    rl = load_checkpoint(a.checkpoint);
  } else {
    std::ofstream log(out / "train_log_rl.jsonl");
    rl = train(c, env, full, &log).best_net;
    save_checkpoint(out / "rl.ckpt", rl, checkpoint_meta(c, full, -1, -1.0));
  }
  if (rl.action_dim() != env.action_dim())
    throw std::invalid_argument("baseline: checkpoint action dimension does not match the hand");
  const SamplingBC bc = run_sampling_bc(env, default_net_config(env, c.ppo, c.seed), c.baseline, c.seed);
  save_checkpoint(out / "bc.ckpt", bc.net, checkpoint_meta(c, full, -1, -1.0));

  const std::uint64_t eval_seed = derive_seed(c.seed, 0xba5e);
  const EvalSummary eb = evaluate_policy(env, &bc.net, full, trials, eval_seed);
  const EvalSummary er = evaluate_policy(env, &rl, full, trials, eval_seed);
  Report r;
  r.title = "Sampling + BC vs RL";
  r.config_json = c.json_text;
  r.fingerprint = c.fingerprint();
  r.seed = c.seed;
  r.meta.push_back({"bc dataset size", std::to_string(bc.dataset_size)});
  r.meta.push_back({"sampling trials", std::to_string(bc.sampling_trials)});
  r.tables = {{"baseline",
               {"method", "success_rate", "trials", "bc_dataset_size"},
               {{"sampling+bc", format_rate(eb.successes, eb.trials), std::to_string(eb.trials),
                 std::to_string(bc.dataset_size)},
                {"rl", format_rate(er.successes, er.trials), std::to_string(er.trials), ""}}}};
  write_report(out, r);
  write_markdown(std::cout, r);
  return 0;
}

void apply_worker_env() {
  if (const char* w = std::getenv("GRASPEDIT_WORKERS")) {
    const int n = std::atoi(w);
    if (n < 1) throw std::invalid_argument("GRASPEDIT_WORKERS must be a positive integer");
    omp_set_num_threads(n);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Demonstration-editing grasp benchmark"};
  app.require_subcommand(1);
  Args a;
  auto common = [&](CLI::App* s) {
    s->add_option("--config", a.config, "experiment config JSON");
    s->add_option("--seed", a.seed, "seed override");
    s->add_option("--out", a.out, "output path");
  };
  auto* gen = app.add_subcommand("gen-objects", "generate train and held-out object datasets");
  common(gen);
  auto* rec = app.add_subcommand("record-demo", "record a scripted demonstration on the reference cube");
  common(rec);
  rec->add_option("--hand", a.hand, "hand spec JSON");
  rec->add_option("--approach", a.approach, "top or side");
  rec->add_option("--depth-offset", a.depth_offset, "fingertip offset past the object centre (m)");
  auto* tr = app.add_subcommand("train", "train a PPO editing policy");
  common(tr);
  tr->add_option("--mask", a.masks, "action groups, e.g. xyz+rpy");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint or the unedited demo");
  common(ev);
  ev->add_option("--trials", a.trials, "dataset-level trials");
  ev->add_option("--checkpoint", a.checkpoint, "policy checkpoint");
  ev->add_option("--mask", a.masks, "override the checkpoint's mask");
  ev->add_flag("--replay", a.replay, "replay the demonstration without edits");
  ev->add_flag("--held-out", a.held_out, "use env.test_dataset");
  auto* ab = app.add_subcommand("ablate", "train and evaluate one policy per action mask");
  common(ab);
  ab->add_option("--trials", a.trials, "trials per cell");
  ab->add_option("--mask", a.masks, "rows to run (repeatable); default all five");
  auto* bl = app.add_subcommand("baseline", "sampling + behaviour cloning against RL");
  common(bl);
  bl->add_option("--trials", a.trials, "trials per cell");
  bl->add_option("--checkpoint", a.checkpoint, "trained RL checkpoint (trained when omitted)");
  CLI11_PARSE(app, argc, argv);
  try {
    apply_worker_env();
    if (*gen) return cmd_gen_objects(a);
    if (*rec) return cmd_record_demo(a);
    if (*tr) return cmd_train(a);
    if (*ev) return cmd_eval(a);
    if (*ab) return cmd_ablate(a);
    if (*bl) return cmd_baseline(a);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
