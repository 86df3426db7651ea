#include "semcur/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

namespace semcur {

namespace fs = std::filesystem;

namespace {

constexpr RewardKind kLearnableKinds[] = {RewardKind::SemanticCuriosity, RewardKind::Coverage,
                                          RewardKind::ObjectCount, RewardKind::PredictionError};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << bytes;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

nlohmann::json pose_json(const Pose& p) { return nlohmann::json::array({p.x, p.y, p.heading}); }
Pose pose_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<int>()}; }

fs::path scene_path(const SeedContext& ctx, const char* set, std::uint64_t seed) {
  return ctx.dir / "scenes" / (std::string(set) + "_" + std::to_string(seed) + ".json");
}
fs::path policy_path(const SeedContext& ctx, RewardKind k) {
  return ctx.dir / "policies" / (std::string(to_string(k)) + ".json");
}
fs::path log_path(const SeedContext& ctx, const std::string& m) { return ctx.dir / "logs" / (m + ".jsonl"); }
fs::path model_path(const SeedContext& ctx, const std::string& m) { return ctx.dir / "models" / (m + ".json"); }

template <typename F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

std::string Method::name() const {
  switch (type) {
    case Type::Random: return "random";
    case Type::Learned: return to_string(kind);
    case Type::Greedy: return std::string("greedy_") + to_string(kind);
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "random") return {Method::Type::Random, RewardKind::None};
  const std::string prefix = "greedy_";
  const bool greedy = name.rfind(prefix, 0) == 0;
  const RewardKind k = reward_kind_from_string(greedy ? name.substr(prefix.size()) : name);
  if (k == RewardKind::None) throw std::invalid_argument("unknown method: " + name);
  return {greedy ? Method::Type::Greedy : Method::Type::Learned, k};
}

std::vector<std::string> default_roster() {
  return {"random",           "semantic_curiosity",        "coverage",        "object_count",
          "curiosity",        "greedy_semantic_curiosity", "greedy_coverage", "greedy_object_count"};
}

TrainConfig ExperimentConfig::desk_train_config() {
  TrainConfig t;
  t.lr = 0.03;
  t.epochs = 4;
  t.total_steps = 200000;
  return t;
}

void ExperimentConfig::validate() const {
  if (num_seeds < 1) throw std::invalid_argument("config: num_seeds must be >= 1");
  if (split.unlabeled < 1 || split.train < 1 || split.test < 1)
    throw std::invalid_argument("config: every split size must be >= 1");
  scene.validate();
  sensor.validate();
  reward.validate();
  train.validate();
  if (!(detector_noise >= 0.0 && detector_noise < 1.0)) throw std::invalid_argument("config: detector_noise in [0, 1)");
  if (collect.trajectories_per_scene < 0 || collect.steps_per_trajectory < 0)
    throw std::invalid_argument("config: collect counts must be >= 0");
  if (eval.poses_per_scene < 1 || eval.episodes_per_scene < 1 || eval.episode_steps < 0)
    throw std::invalid_argument("config: eval counts out of range");
  if (roster.empty()) throw std::invalid_argument("config: empty roster");
  std::set<std::string> seen;
  for (const auto& m : roster) {
    method_from_string(m);
    if (!seen.insert(m).second) throw std::invalid_argument("config: duplicate roster entry " + m);
  }
  if (workers < 1) throw std::invalid_argument("config: workers must be >= 1");
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {
      {"base_seed", c.base_seed},
      {"num_seeds", c.num_seeds},
      {"split", {{"unlabeled", c.split.unlabeled}, {"train", c.split.train}, {"test", c.split.test}}},
      {"scene", to_json(c.scene)},
      {"sensor",
       {{"fov_deg", c.sensor.fov_deg},
        {"num_rays", c.sensor.num_rays},
        {"max_range", c.sensor.max_range},
        {"forward_step", c.sensor.forward_step}}},
      {"reward", {{"lambda_sc", c.reward.lambda_sc}, {"kind", to_string(c.reward.kind)}}},
      {"train", to_json(c.train)},
      {"detector_noise", c.detector_noise},
      {"collect",
       {{"trajectories_per_scene", c.collect.trajectories_per_scene},
        {"steps_per_trajectory", c.collect.steps_per_trajectory}}},
      {"eval",
       {{"poses_per_scene", c.eval.poses_per_scene},
        {"episodes_per_scene", c.eval.episodes_per_scene},
        {"episode_steps", c.eval.episode_steps}}},
      {"roster", c.roster},
      {"output_dir", c.output_dir},
      {"workers", c.workers},
      {"full_scale", c.full_scale},
  };
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"base_seed", "num_seeds",      "split",  "scene",   "sensor",
                                           "reward",    "train",          "detector_noise", "collect", "eval",
                                           "roster",    "output_dir",     "workers", "full_scale"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument("config: unknown key '" + key + "'");

  ExperimentConfig c;
  c.base_seed = j.value("base_seed", c.base_seed);
  c.num_seeds = j.value("num_seeds", c.num_seeds);
  if (j.contains("split")) {
    const auto& s = j["split"];
    c.split.unlabeled = s.value("unlabeled", c.split.unlabeled);
    c.split.train = s.value("train", c.split.train);
    c.split.test = s.value("test", c.split.test);
  }
  if (j.contains("scene")) c.scene = scene_spec_from_json(j["scene"]);
  if (j.contains("sensor")) {
    const auto& s = j["sensor"];
    c.sensor.fov_deg = s.value("fov_deg", c.sensor.fov_deg);
    c.sensor.num_rays = s.value("num_rays", c.sensor.num_rays);
    c.sensor.max_range = s.value("max_range", c.sensor.max_range);
    c.sensor.forward_step = s.value("forward_step", c.sensor.forward_step);
  }
  if (j.contains("reward")) {
    const auto& r = j["reward"];
    c.reward.lambda_sc = r.value("lambda_sc", c.reward.lambda_sc);
    if (r.contains("kind")) c.reward.kind = reward_kind_from_string(r["kind"].get<std::string>());
  }
  if (j.contains("train")) {
    // Fields missing from the file keep the desk-scale defaults.
    nlohmann::json t = to_json(c.train);
    t.update(j["train"]);
    c.train = train_config_from_json(t);
  }
  c.detector_noise = j.value("detector_noise", c.detector_noise);
  if (j.contains("collect")) {
    const auto& s = j["collect"];
    c.collect.trajectories_per_scene = s.value("trajectories_per_scene", c.collect.trajectories_per_scene);
    c.collect.steps_per_trajectory = s.value("steps_per_trajectory", c.collect.steps_per_trajectory);
  }
  if (j.contains("eval")) {
    const auto& s = j["eval"];
    c.eval.poses_per_scene = s.value("poses_per_scene", c.eval.poses_per_scene);
    c.eval.episodes_per_scene = s.value("episodes_per_scene", c.eval.episodes_per_scene);
    c.eval.episode_steps = s.value("episode_steps", c.eval.episode_steps);
  }
  if (j.contains("roster")) c.roster = j["roster"].get<std::vector<std::string>>();
  c.output_dir = j.value("output_dir", c.output_dir);
  c.workers = j.value("workers", c.workers);
  c.full_scale = j.value("full_scale", c.full_scale);
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  return experiment_config_from_json(nlohmann::json::parse(read_file(path)));
}

nlohmann::json to_json(const StepRecord& r, int scene, int trajectory) {
  nlohmann::json dets = nlohmann::json::array();
  for (const auto& d : r.detections)
    dets.push_back({{"object_id", d.object_id},
                    {"bucket", d.bucket},
                    {"predicted_class", d.predicted_class},
                    {"confidence", d.confidence},
                    {"true_class", d.true_class}});
  return {{"scene", scene},
          {"trajectory", trajectory},
          {"step", r.step},
          {"pose", pose_json(r.pose)},
          {"action", static_cast<int>(r.action)},
          {"rewards",
           {{"semantic_curiosity", r.rewards.semantic_curiosity},
            {"coverage", r.rewards.coverage},
            {"object_count", r.rewards.object_count},
            {"curiosity", r.rewards.prediction_error}}},
          {"detections", std::move(dets)}};
}

std::string trajectory_jsonl(const std::vector<TrajectoryLog>& logs) {
  std::string out;
  for (const auto& log : logs) {
    for (const auto& r : log.records) {
      out += to_json(r, log.scene, log.trajectory).dump();
      out += '\n';
    }
  }
  return out;
}

std::vector<TrajectoryLog> trajectories_from_jsonl(const std::string& text) {
  std::vector<TrajectoryLog> logs;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const int scene = j.at("scene").get<int>();
    const int traj = j.at("trajectory").get<int>();
    if (logs.empty() || logs.back().scene != scene || logs.back().trajectory != traj) {
      logs.push_back({scene, traj, {}, {}});
    }
    StepRecord r;
    r.step = j.at("step").get<int>();
    if (r.step != static_cast<int>(logs.back().records.size()))
      throw std::runtime_error("trajectory log: non-contiguous step index");
    r.pose = pose_from(j.at("pose"));
    r.action = static_cast<Action>(j.at("action").get<int>());
    const auto& rw = j.at("rewards");
    r.rewards.semantic_curiosity = rw.at("semantic_curiosity").get<double>();
    r.rewards.coverage = rw.at("coverage").get<double>();
    r.rewards.object_count = rw.at("object_count").get<double>();
    r.rewards.prediction_error = rw.at("curiosity").get<double>();
    for (const auto& d : j.at("detections"))
      r.detections.push_back({d.at("object_id").get<int>(), d.at("bucket").get<int>(),
                              d.at("predicted_class").get<int>(), d.at("confidence").get<double>(),
                              d.at("true_class").get<int>()});
    logs.back().records.push_back(std::move(r));
  }
  return logs;
}

CollectResult collect(const Agent& agent, const std::vector<Scene>& scenes, const DetectorModel& model,
                      const CollectParams& params, const EnvConfig& env_cfg, std::uint64_t seed, int workers) {
  const BlindDetector blind(model);
  EnvConfig ecfg = env_cfg;
  ecfg.episode_len = std::max(1, params.steps_per_trajectory);
  std::vector<std::vector<TrajectoryLog>> per_scene(scenes.size());

  parallel_for(scenes.size(), workers, [&](std::size_t si) {
    auto local = agent.clone();
    const Scene& scene = scenes[si];
    for (int t = 0; t < params.trajectories_per_scene; ++t) {
      ExplorationEnv env(scene, blind, ecfg);
      env.reset(hash_combine(seed, 0xc011ULL, si, t));
      Rng rng(hash_combine(seed, 0xc012ULL, si, t));
      TrajectoryLog log{static_cast<int>(si), t, env.pose(), {}};
      log.records.reserve(static_cast<std::size_t>(params.steps_per_trajectory));
      for (int k = 0; k < params.steps_per_trajectory; ++k) {
        const Action a = local->choose(env, rng);
        const StepOutcome o = env.step(a);
        StepRecord r;
        r.step = k;
        r.pose = env.pose();
        r.action = a;
        r.rewards = o.rewards;
        for (const auto& d : detect(model, scene, o.obs, env.pose(), ecfg.sensor.max_range))
          r.detections.push_back({d.object_id, d.bucket.encode(), d.predicted_class, d.confidence, d.true_class});
        log.records.push_back(std::move(r));
      }
      per_scene[si].push_back(std::move(log));
    }
  });

  CollectResult out;
  for (auto& logs : per_scene)
    for (auto& log : logs) out.logs.push_back(std::move(log));
  out.dataset = dataset_from_logs(out.logs);
  return out;
}

LabeledDataset dataset_from_logs(const std::vector<TrajectoryLog>& logs) {
  LabeledDataset ds;
  for (const auto& log : logs)
    for (const auto& r : log.records)
      for (const auto& d : r.detections) ds.samples.push_back({d.true_class, d.bucket, d.true_class});
  return ds;
}

EvalResult logged_accuracy(const std::vector<TrajectoryLog>& logs, int num_classes) {
  std::vector<std::int64_t> n(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::int64_t> ok(static_cast<std::size_t>(num_classes), 0);
  for (const auto& log : logs) {
    for (const auto& r : log.records) {
      for (const auto& d : r.detections) {
        if (d.true_class < 0 || d.true_class >= num_classes)
          throw std::runtime_error("trajectory log: true class out of range");
        ++n[static_cast<std::size_t>(d.true_class)];
        if (d.predicted_class == d.true_class) ++ok[static_cast<std::size_t>(d.true_class)];
      }
    }
  }
  return summarize_accuracy(n, ok);
}

EpisodeMetrics run_episode(const Agent& agent, const Scene& scene, const BlindDetector& detector,
                           const EnvConfig& env_cfg, int steps, std::uint64_t seed, int scene_index, int episode,
                           SemanticMap* final_map) {
  EnvConfig ecfg = env_cfg;
  ecfg.episode_len = std::max(1, steps);
  ExplorationEnv env(scene, detector, ecfg);
  env.reset(hash_combine(seed, 0x7ab1ULL, scene_index, episode));
  Rng rng(hash_combine(seed, 0x7ab2ULL, scene_index, episode));
  auto local = agent.clone();
  EpisodeMetrics m;
  for (int t = 0; t < steps; ++t) {
    const StepOutcome o = env.step(local->choose(env, rng));
    m.sc_reward += o.rewards.semantic_curiosity;
    m.num_detections += o.rewards.object_count;
  }
  m.explored_area = static_cast<double>(env.map().explored_count());
  if (final_map) *final_map = env.map();
  return m;
}

Table1Row table1_row(const std::string& method, const Agent& agent, const std::vector<Scene>& scenes,
                     const BlindDetector& detector, const EnvConfig& env_cfg, const EvalParams& params,
                     std::uint64_t seed, int workers) {
  const std::size_t per_scene = static_cast<std::size_t>(params.episodes_per_scene);
  std::vector<EpisodeMetrics> runs(scenes.size() * per_scene);
  parallel_for(runs.size(), workers, [&](std::size_t i) {
    const std::size_t si = i / per_scene;
    runs[i] = run_episode(agent, scenes[si], detector, env_cfg, params.episode_steps, seed, static_cast<int>(si),
                          static_cast<int>(i % per_scene));
  });
  Table1Row row{method, 0.0, 0.0, 0.0};
  for (const auto& m : runs) {
    row.sc_reward += m.sc_reward;
    row.explored_area += m.explored_area;
    row.num_detections += m.num_detections;
  }
  const double n = static_cast<double>(runs.size());
  row.sc_reward /= n;
  row.explored_area /= n;
  row.num_detections /= n;
  return row;
}

AccuracyRow accuracy_row(const std::string& method, const EvalResult& r) {
  AccuracyRow row{method, r.per_class, std::nullopt};
  if (std::any_of(r.per_class.begin(), r.per_class.end(), [](const auto& v) { return v.has_value(); }))
    row.mean = r.macro_mean;
  return row;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string table1_csv(const std::vector<Table1Row>& rows) {
  std::string out = "method,sc_reward,explored_area,num_detections\n";
  for (const auto& r : rows)
    out += r.method + "," + format_double(r.sc_reward) + "," + format_double(r.explored_area) + "," +
           format_double(r.num_detections) + "\n";
  return out;
}

std::string accuracy_csv(const std::vector<AccuracyRow>& rows, int num_classes) {
  std::string out = "method";
  for (int c = 0; c < num_classes; ++c) out += ",class_" + std::to_string(c);
  out += ",mean\n";
  for (const auto& r : rows) {
    out += r.method;
    for (int c = 0; c < num_classes; ++c) {
      out += ",";
      const auto idx = static_cast<std::size_t>(c);
      if (idx < r.per_class.size() && r.per_class[idx]) out += format_double(*r.per_class[idx]);
    }
    out += ",";
    if (r.mean) out += format_double(*r.mean);
    out += "\n";
  }
  return out;
}

std::vector<Table1Row> parse_table1_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  if (line != "method,sc_reward,explored_area,num_detections") throw std::runtime_error("table1: bad header");
  std::vector<Table1Row> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw std::runtime_error("table1: bad row: " + line);
    rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
  }
  return rows;
}

std::vector<AccuracyRow> parse_accuracy_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header.front() != "method" || header.back() != "mean")
    throw std::runtime_error("accuracy table: bad header");
  const std::size_t C = header.size() - 2;
  std::vector<AccuracyRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != C + 2) throw std::runtime_error("accuracy table: bad row: " + line);
    AccuracyRow r{f[0], {}, std::nullopt};
    for (std::size_t c = 0; c < C; ++c)
      r.per_class.push_back(f[c + 1].empty() ? std::nullopt : std::optional<double>(std::stod(f[c + 1])));
    if (!f.back().empty()) r.mean = std::stod(f.back());
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<Table1Row> median_table1(const std::vector<std::vector<Table1Row>>& per_seed) {
  std::vector<Table1Row> out;
  if (per_seed.empty()) return out;
  for (const auto& proto : per_seed.front()) {
    std::vector<double> sc, area, det;
    for (const auto& rows : per_seed) {
      for (const auto& r : rows) {
        if (r.method != proto.method) continue;
        sc.push_back(r.sc_reward);
        area.push_back(r.explored_area);
        det.push_back(r.num_detections);
      }
    }
    out.push_back({proto.method, median(sc), median(area), median(det)});
  }
  return out;
}

std::vector<AccuracyRow> median_accuracy(const std::vector<std::vector<AccuracyRow>>& per_seed) {
  std::vector<AccuracyRow> out;
  if (per_seed.empty()) return out;
  for (const auto& proto : per_seed.front()) {
    AccuracyRow r{proto.method, {}, std::nullopt};
    std::vector<std::vector<double>> cls(proto.per_class.size());
    std::vector<double> means;
    for (const auto& rows : per_seed) {
      for (const auto& row : rows) {
        if (row.method != proto.method) continue;
        for (std::size_t c = 0; c < cls.size() && c < row.per_class.size(); ++c)
          if (row.per_class[c]) cls[c].push_back(*row.per_class[c]);
        if (row.mean) means.push_back(*row.mean);
      }
    }
    for (auto& v : cls) r.per_class.push_back(v.empty() ? std::nullopt : std::optional<double>(median(v)));
    if (!means.empty()) r.mean = median(means);
    out.push_back(std::move(r));
  }
  return out;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

SeedContext make_seed_context(const ExperimentConfig& cfg, int index) {
  SeedContext ctx;
  ctx.index = index;
  ctx.seed = cfg.base_seed + static_cast<std::uint64_t>(index);
  ctx.split = make_split(ctx.seed, cfg.split.unlabeled, cfg.split.train, cfg.split.test);
  if (!is_disjoint(ctx.split)) throw std::logic_error("scene split overlaps");
  auto build = [&](const std::vector<std::uint64_t>& seeds) {
    std::vector<Scene> scenes;
    for (auto s : seeds) {
      SceneSpec spec = cfg.scene;
      spec.seed = s;
      scenes.push_back(generate_scene(spec));
    }
    return scenes;
  };
  ctx.unlabeled = build(ctx.split.unlabeled);
  ctx.train = build(ctx.split.train);
  ctx.test = build(ctx.split.test);
  ctx.pretrained = pretrained_model(cfg.scene.num_classes, kNumBuckets, cfg.detector_noise, ctx.seed);
  ctx.dir = fs::path(cfg.output_dir) / ("seed_" + std::to_string(index));
  return ctx;
}

EnvConfig env_config(const ExperimentConfig& cfg) {
  EnvConfig e;
  e.sensor = cfg.sensor;
  e.reward = cfg.reward;
  return e;
}

void stage_gen_scenes(const ExperimentConfig&, const SeedContext& ctx) {
  auto dump = [&](const char* set, const std::vector<std::uint64_t>& seeds, const std::vector<Scene>& scenes) {
    for (std::size_t i = 0; i < seeds.size(); ++i) write_file(scene_path(ctx, set, seeds[i]), to_json(scenes[i]).dump() + "\n");
  };
  dump("unlabeled", ctx.split.unlabeled, ctx.unlabeled);
  dump("train", ctx.split.train, ctx.train);
  dump("test", ctx.split.test, ctx.test);
  write_file(model_path(ctx, "pretrained"), to_json(ctx.pretrained).dump() + "\n");
}

TrainResult stage_train_policy(const ExperimentConfig& cfg, const SeedContext& ctx, RewardKind kind) {
  const BlindDetector blind(ctx.pretrained);
  TrainResult r = train_policy(ctx.unlabeled, blind, kind, cfg.train, env_config(cfg),
                               hash_combine(ctx.seed, 0x7a1aULL, static_cast<int>(kind)), cfg.workers);
  nlohmann::json j = to_json(r.params);
  j["reward"] = to_string(kind);
  j["train_config"] = to_json(cfg.train);
  write_file(policy_path(ctx, kind), j.dump() + "\n");
  write_file(ctx.dir / "curves" / (std::string(to_string(kind)) + ".csv"), curve_csv(r.curve));
  return r;
}

std::unique_ptr<Agent> load_agent(const ExperimentConfig&, const SeedContext& ctx, const Method& m) {
  switch (m.type) {
    case Method::Type::Random: return std::make_unique<RandomAgent>();
    case Method::Type::Greedy: return std::make_unique<GreedyAgent>(m.kind);
    case Method::Type::Learned: {
      const fs::path p = policy_path(ctx, m.kind);
      if (!fs::exists(p)) throw std::runtime_error("policy not trained: " + p.string());
      return std::make_unique<PolicyAgent>(policy_from_json(nlohmann::json::parse(read_file(p))));
    }
  }
  throw std::logic_error("unreachable");
}

CollectResult stage_collect(const ExperimentConfig& cfg, const SeedContext& ctx, const std::string& method) {
  const auto agent = load_agent(cfg, ctx, method_from_string(method));
  CollectResult r = collect(*agent, ctx.train, ctx.pretrained, cfg.collect, env_config(cfg),
                            hash_combine(ctx.seed, 0xc01ULL), cfg.workers);
  write_file(log_path(ctx, method), trajectory_jsonl(r.logs));
  return r;
}

DetectorModel stage_finetune(const ExperimentConfig&, const SeedContext& ctx, const std::string& method) {
  const fs::path p = log_path(ctx, method);
  if (!fs::exists(p)) throw std::runtime_error("no trajectories collected: " + p.string());
  const LabeledDataset ds = dataset_from_logs(trajectories_from_jsonl(read_file(p)));
  DetectorModel m = finetune(ctx.pretrained, ds.samples);
  write_file(model_path(ctx, method), to_json(m).dump() + "\n");
  return m;
}

std::vector<Table1Row> stage_table1(const ExperimentConfig& cfg, const SeedContext& ctx) {
  const BlindDetector blind(ctx.pretrained);
  const EnvConfig ecfg = env_config(cfg);
  const std::uint64_t eval_seed = hash_combine(ctx.seed, 0x7ab1eULL);
  std::vector<Table1Row> rows;
  fs::create_directories(ctx.dir / "maps");
  for (const auto& name : cfg.roster) {
    const auto agent = load_agent(cfg, ctx, method_from_string(name));
    rows.push_back(table1_row(name, *agent, ctx.unlabeled, blind, ecfg, cfg.eval, eval_seed, cfg.workers));
    SemanticMap map;
    run_episode(*agent, ctx.unlabeled.front(), blind, ecfg, cfg.eval.episode_steps, eval_seed, 0, 0, &map);
    render_map(map, ctx.dir / "maps" / (name + ".ppm"));
  }
  write_file(ctx.dir / "table1.csv", table1_csv(rows));
  return rows;
}

std::vector<AccuracyRow> stage_table2(const ExperimentConfig& cfg, const SeedContext& ctx) {
  std::vector<AccuracyRow> rows;
  for (const auto& name : cfg.roster) {
    const fs::path p = log_path(ctx, name);
    if (!fs::exists(p)) throw std::runtime_error("no trajectories collected: " + p.string());
    rows.push_back(accuracy_row(name, logged_accuracy(trajectories_from_jsonl(read_file(p)), cfg.scene.num_classes)));
  }
  write_file(ctx.dir / "table2.csv", accuracy_csv(rows, cfg.scene.num_classes));
  return rows;
}

std::vector<AccuracyRow> stage_table3(const ExperimentConfig& cfg, const SeedContext& ctx) {
  const std::uint64_t eval_seed = hash_combine(ctx.seed, 0xe7a1ULL);
  std::vector<AccuracyRow> rows;
  const EvalResult base = evaluate(ctx.pretrained, ctx.test, cfg.eval.poses_per_scene, eval_seed, cfg.sensor);
  rows.push_back(accuracy_row("pretrained", base));
  for (const auto& name : cfg.roster) {
    const fs::path p = model_path(ctx, name);
    if (!fs::exists(p)) throw std::runtime_error("no finetuned model: " + p.string());
    const EvalResult r =
        evaluate(model_from_json(nlohmann::json::parse(read_file(p))), ctx.test, cfg.eval.poses_per_scene, eval_seed,
                 cfg.sensor);
    if (r.pose_digest != base.pose_digest) throw std::logic_error("evaluation poses differ between methods");
    rows.push_back(accuracy_row(name, r));
  }
  write_file(ctx.dir / "table3.csv", accuracy_csv(rows, cfg.scene.num_classes));
  return rows;
}

void stage_report(const ExperimentConfig& cfg) {
  const fs::path root(cfg.output_dir);
  std::vector<std::vector<Table1Row>> t1;
  std::vector<std::vector<AccuracyRow>> t2, t3;
  for (int k = 0; k < cfg.num_seeds; ++k) {
    const fs::path dir = root / ("seed_" + std::to_string(k));
    t1.push_back(parse_table1_csv(read_file(dir / "table1.csv")));
    t2.push_back(parse_accuracy_csv(read_file(dir / "table2.csv")));
    t3.push_back(parse_accuracy_csv(read_file(dir / "table3.csv")));
  }
  write_file(root / "table1.csv", table1_csv(median_table1(t1)));
  write_file(root / "table2.csv", accuracy_csv(median_accuracy(t2), cfg.scene.num_classes));
  write_file(root / "table3.csv", accuracy_csv(median_accuracy(t3), cfg.scene.num_classes));

  // Echo of the run-invariant part of the config: worker count and output
  // location do not change results, so they stay out of the hashed files.
  nlohmann::json echo = to_json(cfg);
  echo.erase("workers");
  echo.erase("output_dir");
  nlohmann::json meta = {{"config", echo},
                         {"aggregate", "median over seeds"},
                         {"split", {{"unlabeled", cfg.split.unlabeled}, {"train", cfg.split.train}, {"test", cfg.split.test}}}};
  if (cfg.full_scale) meta["full_split"] = {{"unlabeled", 72}, {"train", 50}, {"test", 11}};
  nlohmann::json seeds = nlohmann::json::array();
  for (int k = 0; k < cfg.num_seeds; ++k) {
    const SceneSplit s = make_split(cfg.base_seed + static_cast<std::uint64_t>(k), cfg.split.unlabeled,
                                    cfg.split.train, cfg.split.test);
    seeds.push_back({{"seed", cfg.base_seed + static_cast<std::uint64_t>(k)},
                     {"unlabeled", s.unlabeled},
                     {"train", s.train},
                     {"test", s.test}});
  }
  meta["seeds"] = std::move(seeds);
  write_file(root / "report.json", meta.dump(2) + "\n");
}

Manifest build_manifest(const fs::path& root) {
  Manifest m;
  if (!fs::exists(root)) return m;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    if (rel == "manifest.json") continue;
    m.files[rel] = sha256_hex(read_file(e.path()));
  }
  return m;
}

void write_manifest(const fs::path& root, const Manifest& m) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& [path, hash] : m.files) files.push_back({{"path", path}, {"sha256", hash}});
  nlohmann::json j = {{"status", m.status}, {"files", files}};
  if (m.status != "ok") {
    j["failed_stage"] = m.failed_stage;
    j["error"] = m.error;
  }
  write_file(root / "manifest.json", j.dump(2) + "\n");
}

Manifest run_all(const ExperimentConfig& cfg) {
  const fs::path root(cfg.output_dir);
  try {
    run_stage("config", [&] {
      cfg.validate();
      fs::create_directories(root);
    });
    for (int k = 0; k < cfg.num_seeds; ++k) {
      const SeedContext ctx = run_stage("gen-scenes", [&] {
        SeedContext c = make_seed_context(cfg, k);
        stage_gen_scenes(cfg, c);
        return c;
      });
      for (RewardKind kind : kLearnableKinds) {
        const std::string name = to_string(kind);
        if (std::find(cfg.roster.begin(), cfg.roster.end(), name) == cfg.roster.end()) continue;
        run_stage("train-policy", [&] { stage_train_policy(cfg, ctx, kind); });
      }
      for (const auto& name : cfg.roster) {
        run_stage("collect", [&] { stage_collect(cfg, ctx, name); });
        run_stage("finetune", [&] { stage_finetune(cfg, ctx, name); });
      }
      run_stage("eval", [&] {
        stage_table1(cfg, ctx);
        stage_table3(cfg, ctx);
      });
      run_stage("report", [&] { stage_table2(cfg, ctx); });
    }
    run_stage("report", [&] { stage_report(cfg); });
  } catch (const StageError& e) {
    Manifest m = build_manifest(root);
    m.status = "FAILED";
    m.failed_stage = e.stage();
    m.error = e.what();
    try {
      write_manifest(root, m);
    } catch (...) {
    }
    throw;
  }
  Manifest m = build_manifest(root);
  write_manifest(root, m);
  return m;
}

}  // namespace semcur
