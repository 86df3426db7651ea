#include "semcur/explore.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace semcur {

Eigen::VectorXd depth_vector(const Observation& obs, double max_range) {
  Eigen::VectorXd d(static_cast<Eigen::Index>(obs.rays.size()));
  for (std::size_t i = 0; i < obs.rays.size(); ++i)
    d(static_cast<Eigen::Index>(i)) = std::clamp(obs.rays[i].distance / max_range, 0.0, 1.0);
  return d;
}

Eigen::VectorXd featurize(const Observation& obs, const std::vector<PredictedDetection>& detections,
                          const FrameInfo& frame, std::optional<Action> last_action, int num_classes,
                          double max_range) {
  const auto R = static_cast<Eigen::Index>(obs.rays.size());
  Eigen::VectorXd f = Eigen::VectorXd::Zero(feature_dim(static_cast<int>(R), num_classes));
  f.head(R) = depth_vector(obs, max_range);
  for (const auto& d : detections) {
    if (d.predicted_class >= 0 && d.predicted_class < num_classes) f(R + d.predicted_class) = 1.0;
  }
  const Eigen::Index tail = R + num_classes;
  f(tail) = frame.detection_cells > 0
                ? std::clamp(static_cast<double>(frame.delta_sem) / static_cast<double>(frame.detection_cells), 0.0, 1.0)
                : 0.0;
  if (last_action) f(tail + 1 + static_cast<int>(*last_action)) = 1.0;
  f(tail + 4) = 1.0;
  return f;
}

Eigen::VectorXd ForwardModel::input(const Eigen::VectorXd& depth, Action a) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(depth.size() + kNumActions);
  x.head(depth.size()) = depth;
  x(depth.size() + static_cast<int>(a)) = 1.0;
  return x;
}

double fm_reward(const ForwardModel& fm, const Eigen::VectorXd& depth, Action a, const Eigen::VectorXd& next_depth) {
  return (fm.predict(depth, a) - next_depth).squaredNorm() / static_cast<double>(next_depth.size());
}

ForwardModel fm_update(const ForwardModel& fm, const Eigen::VectorXd& depth, Action a,
                       const Eigen::VectorXd& next_depth) {
  ForwardModel out = fm;
  const Eigen::VectorXd x = fm.input(depth, a);
  const Eigen::VectorXd err = fm.weights * x - next_depth;
  out.weights.noalias() -= (fm.lr * 2.0 / static_cast<double>(next_depth.size())) * err * x.transpose();
  return out;
}

double StepRewards::get(RewardKind k) const {
  switch (k) {
    case RewardKind::SemanticCuriosity: return semantic_curiosity;
    case RewardKind::Coverage: return coverage;
    case RewardKind::ObjectCount: return object_count;
    case RewardKind::PredictionError: return prediction_error;
    case RewardKind::None: return 0.0;
  }
  return 0.0;
}

ExplorationEnv::ExplorationEnv(const Scene& scene, const BlindDetector& detector, EnvConfig cfg)
    : scene_(&scene),
      detector_(&detector),
      cfg_(cfg),
      map_(detector.num_classes(), scene.width(), scene.height()),
      fm_(ForwardModel::zeros(cfg.sensor.num_rays, cfg.fm_lr)) {}

void ExplorationEnv::observe(FrameInfo* frame, MapDelta* delta) {
  obs_ = render(*scene_, pose_, cfg_.sensor);
  detections_ = detector_->detect(*scene_, obs_, pose_, cfg_.sensor.max_range);
  const MapDelta d = integrate_frame(map_, obs_, detections_, pose_);
  FrameInfo fi;
  fi.delta_sem = d.semantic;
  for (const auto& det : detections_) fi.detection_cells += static_cast<std::int64_t>(det.cells.size());
  depth_ = depth_vector(obs_, cfg_.sensor.max_range);
  features_ = featurize(obs_, detections_, fi, last_action_, detector_->num_classes(), cfg_.sensor.max_range);
  if (frame) *frame = fi;
  if (delta) *delta = d;
}

void ExplorationEnv::reset(const Pose& start) {
  pose_ = start;
  map_ = SemanticMap(detector_->num_classes(), scene_->width(), scene_->height());
  last_action_.reset();
  t_ = 0;
  observe(nullptr, nullptr);
  initial_sum_ = map_.sum();
  initial_explored_ = map_.explored_count();
}

StepOutcome ExplorationEnv::step(Action a) {
  const Eigen::VectorXd prev_depth = depth_;
  pose_ = semcur::step(*scene_, pose_, a, cfg_.sensor);
  last_action_ = a;
  ++t_;
  StepOutcome out;
  observe(nullptr, &out.delta);
  out.rewards.semantic_curiosity = semantic_curiosity_reward(out.delta.semantic, cfg_.reward);
  out.rewards.coverage = coverage_reward(out.delta.explored);
  out.rewards.object_count = object_count_reward(detections_);
  out.rewards.prediction_error = fm_reward(fm_, prev_depth, a, depth_);
  fm_ = fm_update(fm_, prev_depth, a, depth_);
  out.obs = obs_;
  out.detections = detections_;
  out.done = t_ >= cfg_.episode_len;
  return out;
}

Eigen::Vector3d lookahead_rewards(const ExplorationEnv& env, RewardKind kind, int depth) {
  Eigen::Vector3d r;
  for (Action a : kAllActions) {
    ExplorationEnv sim = env;
    double value = sim.step(a).rewards.get(kind);
    if (depth > 1) value += lookahead_rewards(sim, kind, depth - 1).maxCoeff();
    r(static_cast<int>(a)) = value;
  }
  return r;
}

namespace {

Action argmax_with_tiebreak(const Eigen::Vector3d& r) {
  int best = 0;
  for (int k = 1; k < kNumActions; ++k)
    if (r(k) > r(best)) best = k;
  return static_cast<Action>(best);
}

}  // namespace

std::vector<int> frontier_distance(const Scene& scene, const SemanticMap& map) {
  const int W = scene.width();
  const int H = scene.height();
  std::vector<int> dist(static_cast<std::size_t>(W) * H, -1);
  std::vector<Cell> queue;
  auto known_free = [&](Cell c) { return scene.in_bounds(c) && map.explored(c) && scene.at(c).is_free(); };
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const Cell c{x, y};
      if (!known_free(c)) continue;
      for (Cell n : {Cell{x + 1, y}, Cell{x - 1, y}, Cell{x, y + 1}, Cell{x, y - 1}}) {
        if (scene.in_bounds(n) && !map.explored(n)) {
          dist[scene.index(c)] = 0;
          queue.push_back(c);
          break;
        }
      }
    }
  }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const Cell c = queue[head];
    const int d = dist[scene.index(c)];
    for (Cell n : {Cell{c.x + 1, c.y}, Cell{c.x - 1, c.y}, Cell{c.x, c.y + 1}, Cell{c.x, c.y - 1}}) {
      if (known_free(n) && dist[scene.index(n)] < 0) {
        dist[scene.index(n)] = d + 1;
        queue.push_back(n);
      }
    }
  }
  return dist;
}

std::optional<Action> frontier_action(const ExplorationEnv& env) {
  const Scene& scene = env.scene();
  const auto dist = frontier_distance(scene, env.map());
  const Pose& pose = env.pose();
  const int here = dist[scene.index(pose.cell())];
  if (here <= 0) return std::nullopt;

  // Heading whose forward step lands closest to a frontier; prefer the
  // current heading, then the smallest rotation.
  int best_heading = -1;
  int best_dist = here;
  for (int turn = 0; turn <= kNumHeadings / 2; ++turn) {
    for (int sign : {1, -1}) {
      if (turn == 0 && sign < 0) continue;
      const int h = ((pose.heading + sign * turn) % kNumHeadings + kNumHeadings) % kNumHeadings;
      const Pose moved = semcur::step(scene, {pose.x, pose.y, h}, Action::Forward, env.config().sensor);
      if (moved.cell() == pose.cell()) continue;
      const int d = dist[scene.index(moved.cell())];
      if (d >= 0 && d < best_dist) {
        best_dist = d;
        best_heading = h;
      }
    }
  }
  if (best_heading < 0) return std::nullopt;
  if (best_heading == pose.heading) return Action::Forward;
  const int right = ((best_heading - pose.heading) % kNumHeadings + kNumHeadings) % kNumHeadings;
  return right <= kNumHeadings / 2 ? Action::TurnRight : Action::TurnLeft;
}

Action greedy_policy(const ExplorationEnv& env, RewardKind kind, int depth) {
  return argmax_with_tiebreak(lookahead_rewards(env, kind, depth));
}

Action RandomAgent::choose(const ExplorationEnv&, Rng& rng) {
  return static_cast<Action>(uniform_index(rng, kNumActions));
}

Action PolicyAgent::choose(const ExplorationEnv& env, Rng& rng) { return act(params_, env.features(), rng).action; }

Action GreedyAgent::choose(const ExplorationEnv& env, Rng& rng) {
  if (kind_ == RewardKind::None) return static_cast<Action>(uniform_index(rng, kNumActions));
  const Eigen::Vector3d r = lookahead_rewards(env, kind_, depth_);
  if (!(r.array() == 0.0).all()) return argmax_with_tiebreak(r);
  if (auto a = frontier_action(env)) return *a;
  return static_cast<Action>(uniform_index(rng, kNumActions));
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(std::min(threads, n));
  for (std::size_t t = 0; t < std::min(threads, n); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

TrainResult train_policy(const std::vector<Scene>& scenes, const BlindDetector& detector, RewardKind kind,
                         const TrainConfig& cfg, const EnvConfig& env_cfg, std::uint64_t seed, int workers) {
  if (kind == RewardKind::None) throw std::invalid_argument("train_policy: reward kind 'none' cannot be trained");
  if (scenes.empty()) throw std::invalid_argument("train_policy: no scenes");
  cfg.validate();

  EnvConfig ecfg = env_cfg;
  ecfg.episode_len = cfg.episode_len;
  ecfg.reward.kind = kind;

  const std::size_t n_envs = cfg.num_envs > 0 ? static_cast<std::size_t>(cfg.num_envs) : scenes.size();
  std::vector<ExplorationEnv> envs;
  std::vector<Rng> rngs;
  std::vector<std::uint64_t> episodes(n_envs, 0);
  envs.reserve(n_envs);
  for (std::size_t i = 0; i < n_envs; ++i) {
    envs.emplace_back(scenes[i % scenes.size()], detector, ecfg);
    envs.back().reset(hash_combine(seed, 0xe915ULL, i, episodes[i]));
    rngs.emplace_back(hash_combine(seed, 0xac7ULL, i));
  }

  TrainResult result;
  result.params = PolicyParams::zeros(feature_dim(ecfg.sensor.num_rays, detector.num_classes()));
  const std::int64_t per_update = static_cast<std::int64_t>(cfg.horizon) * static_cast<std::int64_t>(n_envs);
  const std::int64_t n_updates = cfg.total_steps / per_update;

  std::vector<RolloutSegment> segments(n_envs);
  for (std::int64_t u = 0; u < n_updates; ++u) {
    const PolicyParams& params = result.params;
    parallel_for(n_envs, workers, [&](std::size_t i) {
      RolloutSegment& seg = segments[i];
      seg.steps.clear();
      seg.steps.reserve(static_cast<std::size_t>(cfg.horizon));
      ExplorationEnv& env = envs[i];
      for (int k = 0; k < cfg.horizon; ++k) {
        RolloutStep st;
        st.features = env.features();
        const ActOutput out = act(params, st.features, rngs[i]);
        const StepOutcome o = env.step(out.action);
        st.action = out.action;
        st.log_prob = out.log_prob;
        st.value = out.value;
        st.reward = o.rewards.get(kind);
        st.done = o.done;
        seg.steps.push_back(std::move(st));
        if (o.done) env.reset(hash_combine(seed, 0xe915ULL, i, ++episodes[i]));
      }
      seg.bootstrap_value = seg.steps.back().done ? 0.0 : params.value_weights.dot(env.features());
    });
    UpdateStats stats;
    result.params = policy_update(result.params, segments, cfg, &stats);
    result.curve.push_back({u + 1, (u + 1) * per_update, stats.mean_reward, stats.entropy, stats.value_loss});
  }
  return result;
}

std::string curve_csv(const std::vector<CurveRow>& curve) {
  std::ostringstream os;
  os << "update,env_steps,mean_reward,entropy,value_loss\n";
  char buf[160];
  for (const CurveRow& r : curve) {
    std::snprintf(buf, sizeof buf, "%lld,%lld,%.10g,%.10g,%.10g\n", static_cast<long long>(r.update),
                  static_cast<long long>(r.env_steps), r.mean_reward, r.entropy, r.value_loss);
    os << buf;
  }
  return os.str();
}

}  // namespace semcur
