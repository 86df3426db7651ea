#include "semcur/detector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "semcur/rng.hpp"

namespace semcur {

ViewBucket ViewBucket::decode(int code) {
  if (code < 0 || code >= kNumBuckets) throw std::out_of_range("view bucket code out of range");
  return {code % kNumSectors, static_cast<RangeBand>(code / kNumSectors)};
}

ViewBucket view_bucket(const Pose& pose, const Eigen::Vector2d& center, double max_range) {
  const Eigen::Vector2d d = pose.position() - center;
  double bearing = std::atan2(d.y(), d.x()) * 180.0 / std::numbers::pi;
  double shifted = std::fmod(bearing + 22.5, 360.0);
  if (shifted < 0) shifted += 360.0;
  const int sector = std::min(kNumSectors - 1, static_cast<int>(shifted / 45.0));
  const RangeBand band = d.norm() < 0.5 * max_range ? RangeBand::Near : RangeBand::Far;
  return {sector, band};
}

DetectorModel::DetectorModel(int num_classes, int num_buckets, Eigen::MatrixXd prior, double smoothing)
    : num_classes_(num_classes),
      num_buckets_(num_buckets),
      smoothing_(smoothing),
      confusion_(prior),
      prior_(std::move(prior)),
      counts_(CountMatrix::Zero(static_cast<Eigen::Index>(num_classes) * num_buckets, num_classes)) {
  if (prior_.rows() != counts_.rows() || prior_.cols() != num_classes)
    throw std::invalid_argument("prior has wrong shape");
}

void DetectorModel::recompute_rows() {
  for (Eigen::Index r = 0; r < confusion_.rows(); ++r) {
    const Eigen::RowVectorXd counts = counts_.row(r).cast<double>();
    Eigen::RowVectorXd row = (counts + smoothing_ * prior_.row(r)) / (counts.sum() + smoothing_);
    confusion_.row(r) = row / row.sum();
  }
}

int confusable_partner(int cls, int num_classes) {
  if (num_classes == 5) {
    // chair, bed, toilet, couch, potted plant
    static constexpr int kPartner[5] = {3, 3, 0, 0, 0};
    return kPartner[cls];
  }
  return (cls + 1) % num_classes;
}

DetectorModel pretrained_model(int num_classes, int num_buckets, double noise, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("pretrained_model needs at least 2 classes");
  if (!(noise >= 0.0 && noise < 1.0)) throw std::invalid_argument("noise must be in [0, 1)");

  Rng rng(hash_combine(0xde7ec7ULL, seed));
  const Eigen::Index rows = static_cast<Eigen::Index>(num_classes) * num_buckets;
  Eigen::MatrixXd prior = Eigen::MatrixXd::Zero(rows, num_classes);

  std::vector<char> confused(static_cast<std::size_t>(rows), 0);
  for (Eigen::Index r = 0; r < rows; ++r) confused[static_cast<std::size_t>(r)] = uniform01(rng) < noise;

  // Every class gets at least one bucket that is right and one that is wrong.
  if (noise > 0.0 && num_buckets >= 2) {
    for (int c = 0; c < num_classes; ++c) {
      auto first = confused.begin() + static_cast<std::ptrdiff_t>(c) * num_buckets;
      auto last = first + num_buckets;
      const auto n_confused = std::count(first, last, 1);
      if (n_confused == 0) first[static_cast<std::ptrdiff_t>(uniform_index(rng, static_cast<std::uint64_t>(num_buckets)))] = 1;
      if (n_confused == num_buckets) first[static_cast<std::ptrdiff_t>(uniform_index(rng, static_cast<std::uint64_t>(num_buckets)))] = 0;
    }
  }

  for (int c = 0; c < num_classes; ++c) {
    const int partner = confusable_partner(c, num_classes);
    for (int b = 0; b < num_buckets; ++b) {
      const Eigen::Index r = static_cast<Eigen::Index>(c) * num_buckets + b;
      const double v = uniform01(rng);
      auto row = prior.row(r);
      if (!confused[static_cast<std::size_t>(r)]) {
        // True class keeps at least 0.8; the loss goes mostly to the partner.
        const double loss = std::min(0.2, noise * v);
        row(c) = 1.0 - loss;
        row(partner) += 0.75 * loss;
        const double spread = 0.25 * loss / (num_classes - 1);
        for (int k = 0; k < num_classes; ++k)
          if (k != c) row(k) += spread;
      } else {
        const double partner_mass = 0.55 + 0.35 * v;
        const double spread = num_classes > 2 ? 0.05 : 0.0;
        row(partner) = partner_mass;
        for (int k = 0; k < num_classes; ++k)
          if (k != c && k != partner) row(k) = spread / (num_classes - 2);
        row(c) = 1.0 - partner_mass - spread;
      }
      row /= row.sum();
    }
  }
  return DetectorModel(num_classes, num_buckets, std::move(prior));
}

namespace {

int sample_row(const Eigen::Ref<const Eigen::RowVectorXd>& row, double u) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < row.size(); ++k) {
    acc += row(k);
    if (u < acc) return static_cast<int>(k);
  }
  // u landed in the round-off tail; return the last class with mass.
  for (Eigen::Index k = row.size() - 1; k >= 0; --k)
    if (row(k) > 0.0) return static_cast<int>(k);
  return 0;
}

}  // namespace

std::vector<Detection> detect(const DetectorModel& model, const Scene& scene, const Observation& obs,
                              const Pose& pose, double max_range) {
  // Object ids in ray order of first appearance are irrelevant; output is
  // sorted by object id.
  std::map<int, Detection> by_object;
  for (const RayHit& ray : obs.rays) {
    if (ray.kind != RayHit::Kind::Object) continue;
    by_object.try_emplace(ray.object_id);
  }
  for (auto& [id, det] : by_object) {
    const ObjectInstance& obj = scene.objects()[static_cast<std::size_t>(id)];
    det.object_id = id;
    det.true_class = obj.class_id;
    det.bucket = view_bucket(pose, obj.center(), max_range);
    const int b = det.bucket.encode();
    const double u = uniform01(hash_combine(scene.seed(), static_cast<std::uint64_t>(id),
                                            static_cast<std::uint64_t>(b),
                                            static_cast<std::uint64_t>(model.version())));
    const auto row = model.row(obj.class_id, b);
    det.predicted_class = sample_row(row, u);
    det.confidence = row(det.predicted_class);
    for (const VisibleCell& vc : obs.visible_cells) {
      if (vc.kind.is_object() && vc.kind.object == id) det.cells.push_back(vc.cell);
    }
  }

  std::vector<Detection> out;
  out.reserve(by_object.size());
  for (auto& [id, det] : by_object) out.push_back(std::move(det));

  // A cell claimed by several detections goes to the most confident one
  // (ties: lower object id). Footprints are disjoint, so this only matters
  // for callers that hand-build overlapping scenes.
  std::map<Cell, std::size_t> owner;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (Cell c : out[i].cells) {
      auto [it, inserted] = owner.try_emplace(c, i);
      if (!inserted && out[i].confidence > out[it->second].confidence) it->second = i;
    }
  }
  if (owner.size() != std::accumulate(out.begin(), out.end(), std::size_t{0},
                                      [](std::size_t n, const Detection& d) { return n + d.cells.size(); })) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::erase_if(out[i].cells, [&](Cell c) { return owner.at(c) != i; });
    }
  }
  return out;
}

std::vector<PredictedDetection> BlindDetector::detect(const Scene& scene, const Observation& obs, const Pose& pose,
                                                      double max_range) const {
  auto full = semcur::detect(*model_, scene, obs, pose, max_range);
  std::vector<PredictedDetection> out;
  out.reserve(full.size());
  for (Detection& d : full) {
    out.push_back({d.object_id, d.predicted_class, d.confidence, d.bucket, std::move(d.cells)});
  }
  return out;
}

DetectorModel finetune(const DetectorModel& model, const std::vector<LabeledSample>& samples) {
  DetectorModel out = model;
  for (const LabeledSample& s : samples) {
    if (s.true_class < 0 || s.true_class >= model.num_classes() || s.label < 0 || s.label >= model.num_classes())
      throw FinetuneError("finetune sample has class out of range: " + std::to_string(s.true_class) + "/" +
                          std::to_string(s.label));
    if (s.bucket < 0 || s.bucket >= model.num_buckets())
      throw FinetuneError("finetune sample has bucket out of range: " + std::to_string(s.bucket));
    out.counts_(out.row_index(s.true_class, s.bucket), s.label) += 1;
  }
  out.recompute_rows();
  out.version_ += 1;
  return out;
}

EvalResult summarize_accuracy(const std::vector<std::int64_t>& detections, const std::vector<std::int64_t>& correct) {
  EvalResult r;
  r.detections = detections;
  r.correct = correct;
  r.per_class.resize(detections.size());
  double total = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < detections.size(); ++c) {
    if (detections[c] == 0) continue;
    const double acc = static_cast<double>(correct[c]) / static_cast<double>(detections[c]);
    r.per_class[c] = acc;
    total += acc;
    ++present;
  }
  r.macro_mean = present > 0 ? total / present : 0.0;
  return r;
}

EvalResult evaluate(const DetectorModel& model, const std::vector<Scene>& scenes, int n_poses_per_scene,
                    std::uint64_t seed, const SensorParams& sensor) {
  if (n_poses_per_scene < 1) throw std::invalid_argument("n_poses_per_scene must be >= 1");
  const auto C = static_cast<std::size_t>(model.num_classes());
  std::vector<std::int64_t> detections(C, 0), correct(C, 0);
  std::uint64_t digest = hash_combine(seed);
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (int k = 0; k < n_poses_per_scene; ++k) {
      const Pose pose = random_free_pose(scenes[s], hash_combine(seed, 0xe7a1ULL, s, static_cast<std::uint64_t>(k)));
      digest = hash_combine(digest, std::bit_cast<std::uint64_t>(pose.x), std::bit_cast<std::uint64_t>(pose.y),
                            static_cast<std::uint64_t>(pose.heading));
      const Observation obs = render(scenes[s], pose, sensor);
      for (const Detection& d : detect(model, scenes[s], obs, pose, sensor.max_range)) {
        const auto c = static_cast<std::size_t>(d.true_class);
        ++detections[c];
        if (d.predicted_class == d.true_class) ++correct[c];
      }
    }
  }
  EvalResult r = summarize_accuracy(detections, correct);
  r.pose_digest = digest;
  return r;
}

nlohmann::json to_json(const DetectorModel& model) {
  auto rows_of = [](const auto& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  return {{"num_classes", model.num_classes()},
          {"num_buckets", model.num_buckets()},
          {"version", model.version()},
          {"smoothing", model.smoothing()},
          {"rows", rows_of(model.confusion())},
          {"prior", rows_of(model.prior())},
          {"counts", rows_of(model.counts())}};
}

DetectorModel model_from_json(const nlohmann::json& j) {
  const int C = j.at("num_classes").get<int>();
  const int B = j.at("num_buckets").get<int>();
  const Eigen::Index rows = static_cast<Eigen::Index>(C) * B;
  auto read = [&](const nlohmann::json& src, auto& m) {
    if (static_cast<Eigen::Index>(src.size()) != rows) throw std::invalid_argument("detector json: wrong row count");
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& row = src.at(static_cast<std::size_t>(r));
      if (static_cast<int>(row.size()) != C) throw std::invalid_argument("detector json: wrong column count");
      for (int c = 0; c < C; ++c) row.at(static_cast<std::size_t>(c)).get_to(m(r, c));
    }
  };
  Eigen::MatrixXd prior(rows, C);
  read(j.at("prior"), prior);
  DetectorModel m(C, B, prior, j.at("smoothing").get<double>());
  read(j.at("rows"), m.confusion_);
  read(j.at("counts"), m.counts_);
  m.version_ = j.at("version").get<int>();
  return m;
}

}  // namespace semcur
