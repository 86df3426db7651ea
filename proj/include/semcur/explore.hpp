#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "semcur/detector.hpp"
#include "semcur/policy.hpp"
#include "semcur/semmap.hpp"
#include "semcur/sim.hpp"

namespace semcur {

// Layout: [ray depths (R) | predicted-class indicators (C) | fraction new |
// last action one-hot (3) | bias].
inline Eigen::Index feature_dim(int num_rays, int num_classes) { return num_rays + num_classes + 5; }

struct FrameInfo {
  std::int64_t delta_sem = 0;
  std::int64_t detection_cells = 0;  // cells across all detections this frame
};

Eigen::VectorXd featurize(const Observation& obs, const std::vector<PredictedDetection>& detections,
                          const FrameInfo& frame, std::optional<Action> last_action, int num_classes,
                          double max_range);

// Linear forward model of the next depth scan from (depth, action one-hot).
struct ForwardModel {
  Eigen::MatrixXd weights;  // R x (R + 3)
  double lr = 0.1;

  static ForwardModel zeros(int num_rays, double lr = 0.1) {
    return {Eigen::MatrixXd::Zero(num_rays, num_rays + kNumActions), lr};
  }
  Eigen::VectorXd input(const Eigen::VectorXd& depth, Action a) const;
  Eigen::VectorXd predict(const Eigen::VectorXd& depth, Action a) const { return weights * input(depth, a); }
};

double fm_reward(const ForwardModel& fm, const Eigen::VectorXd& depth, Action a, const Eigen::VectorXd& next_depth);
ForwardModel fm_update(const ForwardModel& fm, const Eigen::VectorXd& depth, Action a,
                       const Eigen::VectorXd& next_depth);

struct EnvConfig {
  SensorParams sensor;
  RewardConfig reward;
  int episode_len = 500;
  double fm_lr = 0.1;
};

struct StepRewards {
  double semantic_curiosity = 0.0;
  double coverage = 0.0;
  double object_count = 0.0;
  double prediction_error = 0.0;

  double get(RewardKind k) const;
};

struct StepOutcome {
  Observation obs;
  std::vector<PredictedDetection> detections;
  MapDelta delta;
  StepRewards rewards;
  bool done = false;
};

// One exploration episode in one scene, seen through a label-free detector.
// Copyable: greedy lookahead simulates candidate actions on copies.
class ExplorationEnv {
 public:
  ExplorationEnv(const Scene& scene, const BlindDetector& detector, EnvConfig cfg);

  // Fresh map at `start`; the first frame is integrated without reward.
  void reset(const Pose& start);
  void reset(std::uint64_t episode_seed) { reset(random_free_pose(*scene_, episode_seed)); }

  StepOutcome step(Action a);

  const Scene& scene() const { return *scene_; }
  const Pose& pose() const { return pose_; }
  const SemanticMap& map() const { return map_; }
  const Eigen::VectorXd& features() const { return features_; }
  const Eigen::VectorXd& depth() const { return depth_; }
  const Observation& observation() const { return obs_; }
  const std::vector<PredictedDetection>& detections() const { return detections_; }
  const ForwardModel& forward_model() const { return fm_; }
  std::optional<Action> last_action() const { return last_action_; }
  int episode_step() const { return t_; }
  const EnvConfig& config() const { return cfg_; }
  std::int64_t initial_sum() const { return initial_sum_; }
  std::int64_t initial_explored() const { return initial_explored_; }

 private:
  void observe(FrameInfo* frame, MapDelta* delta);

  const Scene* scene_;
  const BlindDetector* detector_;
  EnvConfig cfg_;
  Pose pose_;
  SemanticMap map_;
  ForwardModel fm_;
  Observation obs_;
  std::vector<PredictedDetection> detections_;
  Eigen::VectorXd depth_;
  Eigen::VectorXd features_;
  std::optional<Action> last_action_;
  int t_ = 0;
  std::int64_t initial_sum_ = 0;
  std::int64_t initial_explored_ = 0;
};

Eigen::VectorXd depth_vector(const Observation& obs, double max_range);

// Immediate reward of each action (Forward, TurnLeft, TurnRight), each
// simulated on a copy of the environment. depth > 1 adds the best
// continuation of the remaining depth.
Eigen::Vector3d lookahead_rewards(const ExplorationEnv& env, RewardKind kind, int depth = 1);

// Argmax of lookahead_rewards; ties prefer Forward, then TurnLeft, then TurnRight.
Action greedy_policy(const ExplorationEnv& env, RewardKind kind, int depth = 1);

// BFS distance (in cells, over explored free cells) to the nearest explored
// free cell bordering unexplored space; -1 where unreachable.
std::vector<int> frontier_distance(const Scene& scene, const SemanticMap& map);

// Step toward the nearest frontier, or nullopt when already on one or none
// is reachable.
std::optional<Action> frontier_action(const ExplorationEnv& env);

class Agent {
 public:
  virtual ~Agent() = default;
  virtual Action choose(const ExplorationEnv& env, Rng& rng) = 0;
  virtual std::unique_ptr<Agent> clone() const = 0;
};

class RandomAgent final : public Agent {
 public:
  Action choose(const ExplorationEnv&, Rng& rng) override;
  std::unique_ptr<Agent> clone() const override { return std::make_unique<RandomAgent>(*this); }
};

class PolicyAgent final : public Agent {
 public:
  explicit PolicyAgent(PolicyParams params) : params_(std::move(params)) {}
  Action choose(const ExplorationEnv& env, Rng& rng) override;
  std::unique_ptr<Agent> clone() const override { return std::make_unique<PolicyAgent>(*this); }

 private:
  PolicyParams params_;
};

// Greedy lookahead on one reward kind. When every action scores exactly zero
// the agent steps toward the nearest frontier instead, or takes a uniformly
// random action if no frontier is reachable, so it never parks against a wall.
class GreedyAgent final : public Agent {
 public:
  GreedyAgent(RewardKind kind, int depth = 1) : kind_(kind), depth_(depth) {}
  Action choose(const ExplorationEnv& env, Rng& rng) override;
  std::unique_ptr<Agent> clone() const override { return std::make_unique<GreedyAgent>(*this); }

 private:
  RewardKind kind_;
  int depth_;
};

struct CurveRow {
  std::int64_t update = 0;
  std::int64_t env_steps = 0;
  double mean_reward = 0.0;
  double entropy = 0.0;
  double value_loss = 0.0;
};

struct TrainResult {
  PolicyParams params;
  std::vector<CurveRow> curve;
};

// Runs fn(i) for i in [0, n) on up to `workers` threads. Callers reduce
// results in index order, so output never depends on the worker count.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

// Unsupervised policy training: one environment per scene, detector frozen,
// reward of the requested kind only.
TrainResult train_policy(const std::vector<Scene>& scenes, const BlindDetector& detector, RewardKind kind,
                         const TrainConfig& cfg, const EnvConfig& env_cfg, std::uint64_t seed, int workers = 1);

std::string curve_csv(const std::vector<CurveRow>& curve);

}  // namespace semcur
