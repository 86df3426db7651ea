#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semcur/detector.hpp"
#include "semcur/explore.hpp"
#include "semcur/policy.hpp"
#include "semcur/scene.hpp"
#include "semcur/semmap.hpp"
#include "semcur/sim.hpp"

namespace semcur {

struct SplitSizes {
  int unlabeled = 8;
  int train = 6;
  int test = 3;
  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

struct CollectParams {
  int trajectories_per_scene = 5;
  int steps_per_trajectory = 300;
  friend bool operator==(const CollectParams&, const CollectParams&) = default;
};

struct EvalParams {
  int poses_per_scene = 500;
  // Table 1 episodes, run on the unlabeled scenes.
  int episodes_per_scene = 2;
  int episode_steps = 300;
  friend bool operator==(const EvalParams&, const EvalParams&) = default;
};

// A roster entry: a learned policy, a greedy lookahead agent, or random.
struct Method {
  enum class Type { Random, Learned, Greedy };
  Type type = Type::Random;
  RewardKind kind = RewardKind::None;

  std::string name() const;
  friend bool operator==(const Method&, const Method&) = default;
};

// Names: "random", a reward kind ("semantic_curiosity", "coverage",
// "object_count", "curiosity") for learned policies, or "greedy_<kind>".
Method method_from_string(const std::string& name);
std::vector<std::string> default_roster();

struct ExperimentConfig {
  std::uint64_t base_seed = 0;
  int num_seeds = 5;
  SplitSizes split;
  SceneSpec scene;  // seed field is ignored; each scene takes its split seed
  SensorParams sensor;
  RewardConfig reward;
  TrainConfig train = desk_train_config();
  double detector_noise = 0.35;
  CollectParams collect;
  EvalParams eval;
  std::vector<std::string> roster = default_roster();
  std::string output_dir = "out";
  int workers = 1;
  bool full_scale = false;

  static TrainConfig desk_train_config();
  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

struct DetectionRecord {
  int object_id = -1;
  int bucket = 0;
  int predicted_class = -1;
  double confidence = 0.0;
  int true_class = -1;
  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct StepRecord {
  int step = 0;
  Pose pose;  // after the action
  Action action = Action::Forward;
  StepRewards rewards;
  std::vector<DetectionRecord> detections;
};

struct TrajectoryLog {
  int scene = 0;  // index into the scene list
  int trajectory = 0;
  Pose start;
  std::vector<StepRecord> records;
};

nlohmann::json to_json(const StepRecord& r, int scene, int trajectory);
std::string trajectory_jsonl(const std::vector<TrajectoryLog>& logs);
std::vector<TrajectoryLog> trajectories_from_jsonl(const std::string& text);

struct LabeledDataset {
  std::vector<LabeledSample> samples;
};

struct CollectResult {
  LabeledDataset dataset;
  std::vector<TrajectoryLog> logs;
};

// Rolls the agent through every scene; each detection of each step becomes
// one oracle-labeled sample. The detector stays at `model` throughout.
CollectResult collect(const Agent& agent, const std::vector<Scene>& scenes, const DetectorModel& model,
                      const CollectParams& params, const EnvConfig& env_cfg, std::uint64_t seed, int workers = 1);

LabeledDataset dataset_from_logs(const std::vector<TrajectoryLog>& logs);

// Pretrained-detector accuracy on the collected detections.
EvalResult logged_accuracy(const std::vector<TrajectoryLog>& logs, int num_classes);

struct Table1Row {
  std::string method;
  double sc_reward = 0.0;
  double explored_area = 0.0;
  double num_detections = 0.0;
};

struct AccuracyRow {
  std::string method;
  std::vector<std::optional<double>> per_class;
  std::optional<double> mean;
};

struct EpisodeMetrics {
  double sc_reward = 0.0;
  double explored_area = 0.0;
  double num_detections = 0.0;
};

// One evaluation episode. Start pose and action rng are fixed by
// (seed, scene, episode), so every method sees the same starts.
EpisodeMetrics run_episode(const Agent& agent, const Scene& scene, const BlindDetector& detector,
                           const EnvConfig& env_cfg, int steps, std::uint64_t seed, int scene_index, int episode,
                           SemanticMap* final_map = nullptr);

Table1Row table1_row(const std::string& method, const Agent& agent, const std::vector<Scene>& scenes,
                     const BlindDetector& detector, const EnvConfig& env_cfg, const EvalParams& params,
                     std::uint64_t seed, int workers = 1);

AccuracyRow accuracy_row(const std::string& method, const EvalResult& r);

std::string table1_csv(const std::vector<Table1Row>& rows);
std::string accuracy_csv(const std::vector<AccuracyRow>& rows, int num_classes);
std::vector<Table1Row> parse_table1_csv(const std::string& text);
std::vector<AccuracyRow> parse_accuracy_csv(const std::string& text);

// Element-wise median over seeds; rows are matched by method name.
std::vector<Table1Row> median_table1(const std::vector<std::vector<Table1Row>>& per_seed);
std::vector<AccuracyRow> median_accuracy(const std::vector<std::vector<AccuracyRow>>& per_seed);

std::string format_double(double v);
std::string sha256_hex(const std::string& bytes);

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage " + stage + " failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Everything one seed's pipeline needs, derived purely from the config.
struct SeedContext {
  int index = 0;
  std::uint64_t seed = 0;
  SceneSplit split;
  std::vector<Scene> unlabeled;
  std::vector<Scene> train;
  std::vector<Scene> test;
  DetectorModel pretrained;
  std::filesystem::path dir;
};

SeedContext make_seed_context(const ExperimentConfig& cfg, int index);
EnvConfig env_config(const ExperimentConfig& cfg);

// Stages for one seed. Each reads its inputs from and writes its outputs to
// ctx.dir, so they can run separately from the CLI.
void stage_gen_scenes(const ExperimentConfig& cfg, const SeedContext& ctx);
TrainResult stage_train_policy(const ExperimentConfig& cfg, const SeedContext& ctx, RewardKind kind);
std::unique_ptr<Agent> load_agent(const ExperimentConfig& cfg, const SeedContext& ctx, const Method& m);
CollectResult stage_collect(const ExperimentConfig& cfg, const SeedContext& ctx, const std::string& method);
DetectorModel stage_finetune(const ExperimentConfig& cfg, const SeedContext& ctx, const std::string& method);
std::vector<Table1Row> stage_table1(const ExperimentConfig& cfg, const SeedContext& ctx);
std::vector<AccuracyRow> stage_table2(const ExperimentConfig& cfg, const SeedContext& ctx);
std::vector<AccuracyRow> stage_table3(const ExperimentConfig& cfg, const SeedContext& ctx);

// Aggregates per-seed tables into the output root as medians over seeds.
void stage_report(const ExperimentConfig& cfg);

struct Manifest {
  std::string status = "ok";
  std::string failed_stage;
  std::string error;
  std::map<std::string, std::string> files;  // path relative to output dir -> sha256
};

Manifest build_manifest(const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& root, const Manifest& m);

// gen-scenes -> train -> collect -> finetune -> tables -> report, per seed.
// On failure writes manifest.json with status FAILED and throws StageError.
Manifest run_all(const ExperimentConfig& cfg);

}  // namespace semcur
