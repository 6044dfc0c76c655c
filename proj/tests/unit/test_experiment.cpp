#include "graspedit/experiment.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace graspedit;

namespace {

const char* kConfig = R"({
  "seed": 3,
  "env": {"dataset": "objs/manifest.json", "test_dataset": "held/manifest.json",
          "hand": "hand.json", "demo": "demo.json", "batch": 32},
  "ppo": {"lr": 0.001, "minibatches": 2},
  "train": {"iterations": 10, "mask": "xyz+q"},
  "eval": {"trials": 200},
  "objects": {"families": ["box", "flat-plate"]}
})";

std::string smoke_path() { return GRASPEDIT_DATA_DIR "/../configs/smoke.json"; }

}  // namespace

TEST_CASE("experiment config parsing") {
  const ExperimentConfig c = ExperimentConfig::from_json(kConfig, "/cfg");
  CHECK(c.seed == 3);
  CHECK(c.env.batch == 32);
  CHECK(c.ppo.batch_envs == 32);
  CHECK(c.ppo.lr == 0.001);
  CHECK(c.ppo.minibatches == 2);
  CHECK(c.train.iterations == 10);
  CHECK(c.train.mask.label() == "xyz+q");
  CHECK(c.eval.trials == 200);
  CHECK(c.objects.families.size() == 2);
  CHECK(c.env.dataset == std::filesystem::path("/cfg/objs/manifest.json"));
  REQUIRE(c.test_dataset);
  CHECK(*c.test_dataset == std::filesystem::path("/cfg/held/manifest.json"));
  CHECK(c.missing_assets().size() == 4);

  CHECK_THROWS_AS(ExperimentConfig::from_json("{}"), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"env":{"dataset":"a","hand":"b","demo":"c"},
                                                  "train":{"iterations":0}})"),
                  std::invalid_argument);
}

TEST_CASE("fingerprint tracks the seed") {
  ExperimentConfig a = ExperimentConfig::from_json(kConfig, "/cfg");
  const ExperimentConfig b = ExperimentConfig::from_json(kConfig, "/elsewhere");
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint().size() == 16);
  const std::string before = a.fingerprint();
  a.set_seed(4);
  CHECK(a.fingerprint() != before);
  CHECK(a.json_text.find("\"seed\":4") != std::string::npos);
}

TEST_CASE("make_env names missing assets") {
  const ExperimentConfig c = ExperimentConfig::from_json(kConfig, "/nonexistent");
  try {
    make_env(c);
    FAIL("expected an exception");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find("hand.json") != std::string::npos);
    CHECK(msg.find("objs/manifest.json") != std::string::npos);
  }
}

TEST_CASE("rates are formatted identically in every output") {
  CHECK(format_rate(1, 3) == "0.3333");
  CHECK(format_rate(0, 0) == "0.0000");
  Report r;
  r.title = "t";
  r.config_json = "{\"seed\":1}";
  r.fingerprint = "00ff";
  r.seed = 1;
  r.tables.push_back({"cells", {"name", "success"}, {{"a", format_rate(5, 8)}, {"b", format_rate(2, 3)}}});
  std::ostringstream md, csv;
  write_markdown(md, r);
  write_csv(csv, r, r.tables[0]);
  for (const char* v : {"0.6250", "0.6667"}) {
    CHECK(md.str().find(v) != std::string::npos);
    CHECK(csv.str().find(v) != std::string::npos);
  }
  CHECK(md.str().find("\"seed\": 1") != std::string::npos);
  CHECK(csv.str().find("00ff") != std::string::npos);
  CHECK(csv.str().find("name,success") != std::string::npos);
}

TEST_CASE("evaluation report on the smoke config") {
  const ExperimentConfig c = ExperimentConfig::load(smoke_path());
  REQUIRE(c.missing_assets().empty());
  const GraspEnv env = make_env(c);
  CHECK_THROWS_AS(eval_report(c, env, nullptr, {}, 50, 100), std::invalid_argument);
  CHECK_THROWS_AS(eval_report(c, env, nullptr, {}, 100, 99), std::invalid_argument);
  const Report r = eval_report(c, env, nullptr, {}, 100, 100);
  REQUIRE(r.tables.size() == 3);
  CHECK(r.fingerprint == c.fingerprint());
  CHECK(r.tables[2].rows.size() == env.dataset().size());

  const auto dir = std::filesystem::temp_directory_path() / "graspedit_report_test";
  std::filesystem::remove_all(dir);
  write_report(dir, r);
  CHECK(std::filesystem::exists(dir / "report.md"));
  for (const ReportTable& t : r.tables) CHECK(std::filesystem::exists(dir / (t.name + ".csv")));
  std::filesystem::remove_all(dir);

  const auto cells = per_object_instances(env, 100, 5);
  CHECK(cells.size() == 100 * env.dataset().size());
}
