#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "semcur/scene.hpp"
#include "semcur/sim.hpp"

namespace semcur {

inline constexpr int kNumSectors = 8;
inline constexpr int kNumBuckets = 2 * kNumSectors;
inline constexpr double kDefaultSmoothing = 8.0;

enum class RangeBand : std::uint8_t { Near = 0, Far = 1 };

// Discretized viewpoint of the agent relative to an object: 45 degree sector
// of the object-to-agent bearing and a near/far band split at max_range / 2.
struct ViewBucket {
  int sector = 0;
  RangeBand band = RangeBand::Near;

  int encode() const { return sector + kNumSectors * static_cast<int>(band); }
  static ViewBucket decode(int code);
  friend bool operator==(const ViewBucket&, const ViewBucket&) = default;
};

ViewBucket view_bucket(const Pose& pose, const Eigen::Vector2d& center, double max_range);

struct LabeledSample {
  int true_class = 0;
  int bucket = 0;
  int label = 0;
  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

// Per (class, bucket) categorical confusion model. Row (c, b) is the
// distribution of predicted classes for a true class c seen from bucket b.
class DetectorModel {
 public:
  using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

  DetectorModel() = default;
  DetectorModel(int num_classes, int num_buckets, Eigen::MatrixXd prior, double smoothing = kDefaultSmoothing);

  int num_classes() const { return num_classes_; }
  int num_buckets() const { return num_buckets_; }
  int version() const { return version_; }
  double smoothing() const { return smoothing_; }

  Eigen::Index row_index(int cls, int bucket) const { return static_cast<Eigen::Index>(cls) * num_buckets_ + bucket; }
  auto row(int cls, int bucket) const { return confusion_.row(row_index(cls, bucket)); }
  auto prior_row(int cls, int bucket) const { return prior_.row(row_index(cls, bucket)); }
  auto count_row(int cls, int bucket) const { return counts_.row(row_index(cls, bucket)); }

  const Eigen::MatrixXd& confusion() const { return confusion_; }
  const Eigen::MatrixXd& prior() const { return prior_; }
  const CountMatrix& counts() const { return counts_; }

  // Rows are (counts + smoothing * prior) / (sum(counts) + smoothing).
  void recompute_rows();

  friend DetectorModel finetune(const DetectorModel&, const std::vector<LabeledSample>&);
  friend DetectorModel model_from_json(const nlohmann::json& j);

 private:
  int num_classes_ = 0;
  int num_buckets_ = 0;
  int version_ = 0;
  double smoothing_ = kDefaultSmoothing;
  Eigen::MatrixXd confusion_;
  Eigen::MatrixXd prior_;
  CountMatrix counts_;
};

// Designated confusable partner for each class. With the default five
// classes (chair, bed, toilet, couch, potted plant) chair and couch are
// mutually confused, bed and plant drift to couch/chair, toilet to chair.
int confusable_partner(int cls, int num_classes);

DetectorModel pretrained_model(int num_classes, int num_buckets = kNumBuckets, double noise = 0.35,
                               std::uint64_t seed = 0);

struct Detection {
  int object_id = -1;
  int true_class = -1;
  int predicted_class = -1;
  double confidence = 0.0;
  ViewBucket bucket;
  std::vector<Cell> cells;
};

std::vector<Detection> detect(const DetectorModel& model, const Scene& scene, const Observation& obs,
                              const Pose& pose, double max_range = SensorParams{}.max_range);

// What the label-free phases see of a detection: no ground-truth class.
struct PredictedDetection {
  int object_id = -1;
  int predicted_class = -1;
  double confidence = 0.0;
  ViewBucket bucket;
  std::vector<Cell> cells;
};

// Detector handle for unsupervised policy training. It exposes predictions
// only; nothing reachable through it yields a true class.
class BlindDetector {
 public:
  explicit BlindDetector(const DetectorModel& model) : model_(&model) {}

  int num_classes() const { return model_->num_classes(); }
  int version() const { return model_->version(); }
  std::vector<PredictedDetection> detect(const Scene& scene, const Observation& obs, const Pose& pose,
                                         double max_range) const;

 private:
  const DetectorModel* model_;
};

class FinetuneError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

DetectorModel finetune(const DetectorModel& model, const std::vector<LabeledSample>& samples);

struct EvalResult {
  std::vector<std::optional<double>> per_class;  // nullopt: class never detected
  std::vector<std::int64_t> detections;
  std::vector<std::int64_t> correct;
  double macro_mean = 0.0;
  std::uint64_t pose_digest = 0;  // identifies the sampled pose set
};

// Per-class accuracy from raw tallies; absent classes are excluded from the
// macro mean.
EvalResult summarize_accuracy(const std::vector<std::int64_t>& detections, const std::vector<std::int64_t>& correct);

EvalResult evaluate(const DetectorModel& model, const std::vector<Scene>& scenes, int n_poses_per_scene,
                    std::uint64_t seed, const SensorParams& sensor = {});

nlohmann::json to_json(const DetectorModel& model);
DetectorModel model_from_json(const nlohmann::json& j);

}  // namespace semcur
