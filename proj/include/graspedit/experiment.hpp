#pragma once

#include "graspedit/grasp_env.hpp"
#include "graspedit/objects.hpp"
#include "graspedit/ppo.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace graspedit {

struct TrainSection {
  int iterations = 200;
  int eval_every = 25;
  int eval_trials = 500;
  ActionMask mask;
};

struct EvalSection {
  int trials = 500;             // dataset-level cell
  int per_object_trials = 100;  // stratified per-object cells
};

struct BaselineSection {
  int max_trials = 400000;
  int target_successes = 5000;
  BCOptions bc;
};

struct ObjectsSection {
  int train = 20;
  int test = 10;
  std::vector<ObjectFamily> families = all_families();
  std::uint64_t seed = 7;
};

/// One JSON file drives every CLI verb. Relative paths resolve against the
/// file's directory.
struct ExperimentConfig {
  std::string json_text;  // canonical (sorted, compact) form, seed included
  std::filesystem::path base;
  EnvConfig env;
  std::optional<std::filesystem::path> test_dataset;
  PPOConfig ppo;
  TrainSection train;
  EvalSection eval;
  BaselineSection baseline;
  ObjectsSection objects;
  DemoScript demo_script;
  std::uint64_t seed = 0;

  static ExperimentConfig load(const std::filesystem::path& path);
  static ExperimentConfig from_json(const std::string& text, const std::filesystem::path& base = {});

  /// Re-canonicalises json_text after a seed override.
  void set_seed(std::uint64_t s);
  /// Every configured asset path that does not exist.
  std::vector<std::string> missing_assets(bool need_demo = true) const;
  /// 64-bit FNV-1a of json_text, 16 hex digits.
  std::string fingerprint() const;
};

/// Loads dataset (or the held-out one), hand and demo. Throws listing every
/// missing asset.
GraspEnv make_env(const ExperimentConfig& config, bool held_out = false);

TrainOptions train_options(const ExperimentConfig& config, const GraspEnv& env);

struct ReportTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

struct Report {
  std::string title;
  std::string config_json;
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<ReportTable> tables;
};

/// Four decimals; CSV and markdown use the same strings.
std::string format_rate(int successes, int trials);

void write_markdown(std::ostream& out, const Report& report);
/// Header comment lines carry seed, fingerprint and config.
void write_csv(std::ostream& out, const Report& report, const ReportTable& table);
/// <dir>/report.md plus <dir>/<table>.csv for each table.
void write_report(const std::filesystem::path& dir, const Report& report);

/// Stratified scenes: `per_object` random placements of every object.
std::vector<EnvInstance> per_object_instances(const GraspEnv& env, int per_object, std::uint64_t seed);

/// Dataset, per-family and per-object success cells. A null net replays the
/// demonstration. Cells hold at least 100 trials.
Report eval_report(const ExperimentConfig& config, const GraspEnv& env, const ActorCritic* net,
                   const ActionMask& mask, int trials, int per_object_trials, bool parallel = true);

struct SamplingBC {
  ActorCritic net;
  int dataset_size = 0;
  int sampling_trials = 0;
  double bc_loss = 0.0;
};

/// Sampling baseline followed by behaviour cloning on its successes.
SamplingBC run_sampling_bc(const GraspEnv& env, const NetConfig& net_config,
                           const BaselineSection& options, std::uint64_t seed, bool parallel = true);

}  // namespace graspedit
