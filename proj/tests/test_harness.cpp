#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "semcur/harness.hpp"

using namespace semcur;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c;
  c.num_seeds = 1;
  c.split = {2, 2, 2};
  c.scene.width = 32;
  c.scene.height = 32;
  c.scene.num_rooms = {2, 3};
  c.scene.num_objects = {4, 6};
  c.train.total_steps = 2 * 100 * 2;
  c.train.episode_len = 100;
  c.collect = {2, 50};
  c.eval = {30, 1, 50};
  c.roster = {"random", "coverage", "greedy_object_count"};
  c.output_dir = out.string();
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("semcur_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("method names round trip") {
  for (const auto& n : default_roster()) CHECK(method_from_string(n).name() == n);
  CHECK(method_from_string("greedy_curiosity").type == Method::Type::Greedy);
  CHECK_THROWS(method_from_string("none"));
  CHECK_THROWS(method_from_string("greedy_none"));
  CHECK_THROWS(method_from_string("walk"));
}

TEST_CASE("experiment config JSON round trip and validation") {
  ExperimentConfig c;
  c.base_seed = 17;
  c.roster = {"random", "greedy_coverage"};
  c.eval.poses_per_scene = 12;
  c.train.lr = 0.5;
  c.full_scale = true;
  CHECK(experiment_config_from_json(nlohmann::json::parse(to_json(c).dump())) == c);
  CHECK(experiment_config_from_json(nlohmann::json::object()) == ExperimentConfig{});

  // Partial train blocks keep the remaining defaults.
  const auto partial = experiment_config_from_json({{"train", {{"lr", 0.01}}}});
  CHECK(partial.train.lr == 0.01);
  CHECK(partial.train.epochs == ExperimentConfig::desk_train_config().epochs);

  CHECK_THROWS(experiment_config_from_json({{"num_seed", 3}}));
  CHECK_THROWS(experiment_config_from_json({{"roster", {"random", "random"}}}));
  CHECK_THROWS(experiment_config_from_json({{"roster", nlohmann::json::array()}}));
  CHECK_THROWS(experiment_config_from_json({{"workers", 0}}));
  CHECK_THROWS(experiment_config_from_json({{"detector_noise", 1.0}}));
}

TEST_CASE("collection sizes, logs and dataset agree") {
  ExperimentConfig cfg = tiny_config(scratch("collect"));
  cfg.collect = {5, 300};
  const SeedContext ctx = make_seed_context(cfg, 0);
  const RandomAgent agent;
  const CollectResult r = collect(agent, ctx.train, ctx.pretrained, cfg.collect, env_config(cfg), 9);
  REQUIRE(r.logs.size() == 10);
  std::size_t records = 0, detections = 0;
  for (const auto& log : r.logs) {
    records += log.records.size();
    for (const auto& rec : log.records) {
      detections += rec.detections.size();
      for (const auto& d : rec.detections) {
        CHECK(d.true_class == ctx.train[static_cast<std::size_t>(log.scene)].objects()[static_cast<std::size_t>(d.object_id)].class_id);
        CHECK(d.bucket >= 0);
        CHECK(d.bucket < kNumBuckets);
      }
    }
  }
  CHECK(records == 3000);
  CHECK(r.dataset.samples.size() == detections);
  for (const auto& s : r.dataset.samples) CHECK(s.label == s.true_class);

  // JSONL round trip preserves everything the later stages read.
  const auto back = trajectories_from_jsonl(trajectory_jsonl(r.logs));
  REQUIRE(back.size() == r.logs.size());
  CHECK(trajectory_jsonl(back) == trajectory_jsonl(r.logs));
  CHECK(dataset_from_logs(back).samples == r.dataset.samples);

  const CollectResult again = collect(agent, ctx.train, ctx.pretrained, cfg.collect, env_config(cfg), 9, 4);
  CHECK(trajectory_jsonl(again.logs) == trajectory_jsonl(r.logs));
}

TEST_CASE("logged accuracy recount") {
  std::vector<TrajectoryLog> logs(1);
  StepRecord rec;
  rec.detections = {{0, 0, 0, 1.0, 0}, {1, 0, 3, 1.0, 0}, {2, 0, 2, 1.0, 2}, {2, 1, 2, 1.0, 2}};
  logs[0].records.push_back(rec);
  const EvalResult r = logged_accuracy(logs, 5);
  CHECK(*r.per_class[0] == doctest::Approx(0.5));
  CHECK(*r.per_class[2] == doctest::Approx(1.0));
  CHECK_FALSE(r.per_class[1].has_value());
  CHECK(r.macro_mean == doctest::Approx(0.75));
  logs[0].records[0].detections.push_back({0, 0, 0, 1.0, 7});
  CHECK_THROWS(logged_accuracy(logs, 5));
}

TEST_CASE("non-contiguous logs are rejected") {
  StepRecord r;
  r.step = 1;
  CHECK_THROWS(trajectories_from_jsonl(to_json(r, 0, 0).dump() + "\n"));
}

TEST_CASE("CSV tables round trip and medians") {
  const std::vector<Table1Row> t{{"random", 0.125, 300, 41}, {"coverage", 0.25, 500, 20}};
  const auto back = parse_table1_csv(table1_csv(t));
  REQUIRE(back.size() == 2);
  CHECK(back[1].method == "coverage");
  CHECK(back[1].explored_area == 500);

  const std::vector<AccuracyRow> a{{"random", {0.5, std::nullopt, 1.0}, 0.75}, {"pretrained", {std::nullopt, std::nullopt, std::nullopt}, std::nullopt}};
  const std::string csv = accuracy_csv(a, 3);
  CHECK(csv == "method,class_0,class_1,class_2,mean\nrandom,0.5,,1,0.75\npretrained,,,,\n");
  const auto pa = parse_accuracy_csv(csv);
  CHECK_FALSE(pa[0].per_class[1].has_value());
  CHECK(*pa[0].mean == 0.75);
  CHECK_FALSE(pa[1].mean.has_value());

  const auto m = median_table1({{{"a", 1, 10, 0}}, {{"a", 3, 30, 0}}, {{"a", 2, 50, 0}}});
  CHECK(m[0].sc_reward == 2);
  CHECK(m[0].explored_area == 30);
  const auto ma = median_accuracy({{{"a", {0.2}, 0.2}}, {{"a", {0.6}, 0.6}}});
  CHECK(*ma[0].mean == doctest::Approx(0.4));
}

TEST_CASE("sha256 known vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("split hygiene") {
  ExperimentConfig cfg = tiny_config(scratch("split"));
  cfg.split = {8, 6, 3};
  for (int k = 0; k < 3; ++k) {
    const SeedContext ctx = make_seed_context(cfg, k);
    CHECK(is_disjoint(ctx.split));
    std::set<std::uint64_t> all;
    for (const auto* v : {&ctx.split.unlabeled, &ctx.split.train, &ctx.split.test}) all.insert(v->begin(), v->end());
    CHECK(all.size() == 17);
    for (std::size_t i = 0; i < ctx.train.size(); ++i) CHECK(ctx.train[i].seed() == ctx.split.train[i]);
    for (std::size_t i = 0; i < ctx.test.size(); ++i) CHECK(ctx.test[i].seed() == ctx.split.test[i]);
  }
}

TEST_CASE("identity detector: every table is perfect") {
  ExperimentConfig cfg = tiny_config(scratch("identity"));
  cfg.detector_noise = 0.0;
  const Manifest m = run_all(cfg);
  CHECK(m.status == "ok");
  const fs::path root(cfg.output_dir);
  for (const char* t : {"table2.csv", "table3.csv"}) {
    for (const auto& row : parse_accuracy_csv(slurp(root / t))) {
      INFO(t << " " << row.method);
      REQUIRE(row.mean.has_value());
      CHECK(*row.mean == 1.0);
    }
  }
  fs::remove_all(root);
}

TEST_CASE("run-all layout, roster override and reproducibility") {
  ExperimentConfig cfg = tiny_config(scratch("layout"));
  const Manifest m = run_all(cfg);
  const fs::path root(cfg.output_dir);
  for (const char* f : {"table1.csv", "table2.csv", "table3.csv", "report.json", "manifest.json",
                        "seed_0/policies/coverage.json", "seed_0/curves/coverage.csv", "seed_0/logs/random.jsonl",
                        "seed_0/models/pretrained.json", "seed_0/models/greedy_object_count.json",
                        "seed_0/maps/random.ppm"})
    CHECK_MESSAGE(fs::exists(root / f), f);
  CHECK(m.files.count("table1.csv") == 1);
  CHECK(m.files.count("manifest.json") == 0);
  const auto manifest = nlohmann::json::parse(slurp(root / "manifest.json"));
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["files"].size() == m.files.size());

  const auto t1 = parse_table1_csv(slurp(root / "table1.csv"));
  CHECK(t1.size() == 3);
  const auto t3 = parse_accuracy_csv(slurp(root / "table3.csv"));
  CHECK(t3.size() == 4);
  CHECK(t3.front().method == "pretrained");

  // A random-only roster reproduces the random row of the full run.
  ExperimentConfig solo = cfg;
  solo.roster = {"random"};
  solo.output_dir = scratch("solo").string();
  run_all(solo);
  const auto s1 = parse_table1_csv(slurp(fs::path(solo.output_dir) / "table1.csv"));
  REQUIRE(s1.size() == 1);
  CHECK(s1[0].method == "random");
  CHECK(s1[0].sc_reward == t1[0].sc_reward);
  CHECK(s1[0].explored_area == t1[0].explored_area);
  CHECK(slurp(fs::path(solo.output_dir) / "seed_0/logs/random.jsonl") == slurp(root / "seed_0/logs/random.jsonl"));

  // Worker count does not change any artifact.
  ExperimentConfig wide = cfg;
  wide.workers = 4;
  wide.output_dir = scratch("wide").string();
  CHECK(run_all(wide).files == m.files);

  for (const auto& d : {root, fs::path(solo.output_dir), fs::path(wide.output_dir)}) fs::remove_all(d);
}

TEST_CASE("a failing stage leaves a FAILED manifest") {
  ExperimentConfig cfg = tiny_config(scratch("failing"));
  cfg.roster = {"random"};
  const fs::path root(cfg.output_dir);
  fs::create_directories(root / "seed_0" / "table1.csv");  // a directory where the table must go
  try {
    run_all(cfg);
    FAIL("run_all should have thrown");
  } catch (const StageError& e) {
    CHECK(e.stage() == "eval");
  }
  const auto j = nlohmann::json::parse(slurp(root / "manifest.json"));
  CHECK(j["status"] == "FAILED");
  CHECK(j["failed_stage"] == "eval");
  CHECK(j["files"].size() > 0);
  fs::remove_all(root);
}

TEST_CASE("stages fail cleanly on missing inputs") {
  ExperimentConfig cfg = tiny_config(scratch("missing"));
  const SeedContext ctx = make_seed_context(cfg, 0);
  CHECK_THROWS(load_agent(cfg, ctx, method_from_string("coverage")));
  CHECK_THROWS(stage_finetune(cfg, ctx, "random"));
  CHECK_THROWS(stage_table2(cfg, ctx));
  fs::remove_all(cfg.output_dir);
}
