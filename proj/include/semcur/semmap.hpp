#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "semcur/detector.hpp"
#include "semcur/scene.hpp"
#include "semcur/sim.hpp"

namespace semcur {

// Top-down binary semantic map: bit (c, x, y) is set once class c has been
// predicted at cell (x, y) in any frame of the episode. Bits are never
// cleared. The explored mask marks every cell that has been in view.
class SemanticMap {
 public:
  SemanticMap() = default;
  SemanticMap(int num_classes, int width, int height);

  int num_classes() const { return num_classes_; }
  int width() const { return width_; }
  int height() const { return height_; }

  bool bit(int channel, Cell c) const { return tensor_[offset(channel, c)] != 0; }
  bool explored(Cell c) const { return explored_[static_cast<std::size_t>(c.y) * width_ + c.x] != 0; }
  std::int64_t sum() const { return sum_cache_; }
  std::int64_t explored_count() const { return explored_cache_; }

  const std::vector<std::uint8_t>& tensor() const { return tensor_; }
  const std::vector<std::uint8_t>& explored_mask() const { return explored_; }

  // Independent full recount, used to audit the caches.
  std::int64_t recount() const;
  std::int64_t recount_channel(int channel) const;

  bool set_bit(int channel, Cell c);
  bool set_explored(Cell c);

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }

 private:
  std::size_t offset(int channel, Cell c) const {
    return (static_cast<std::size_t>(channel) * height_ + c.y) * width_ + c.x;
  }

  int num_classes_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> tensor_;
  std::vector<std::uint8_t> explored_;
  std::int64_t sum_cache_ = 0;
  std::int64_t explored_cache_ = 0;
};

struct EgoPoint {
  int channel = 0;
  Eigen::Vector2d ego;  // agent frame: +x ahead, +y to the right
};
using EgoProjection = std::vector<EgoPoint>;

struct GeoPoint {
  int channel = 0;
  Cell cell;
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

// Detection cells are taken at their centers and expressed in the agent
// frame (translate by -position, rotate by -heading).
template <typename DetectionT>
EgoProjection ego_project(const std::vector<DetectionT>& detections, const Pose& pose);

std::vector<GeoPoint> to_geocentric(const EgoProjection& proj, const Pose& pose, int width, int height);

struct MapDelta {
  std::int64_t semantic = 0;
  std::int64_t explored = 0;
};

MapDelta update(SemanticMap& map, const std::vector<GeoPoint>& geo, const std::vector<VisibleCell>& visible);

// Convenience: full per-frame pipeline (ego projection, geocentric
// registration, pooling).
template <typename DetectionT>
MapDelta integrate_frame(SemanticMap& map, const Observation& obs, const std::vector<DetectionT>& detections,
                         const Pose& pose) {
  return update(map, to_geocentric(ego_project(detections, pose), pose, map.width(), map.height()),
                obs.visible_cells);
}

enum class RewardKind { SemanticCuriosity, Coverage, ObjectCount, PredictionError, None };

const char* to_string(RewardKind k);
RewardKind reward_kind_from_string(const std::string& s);

struct RewardConfig {
  double lambda_sc = 2.5e-3;
  RewardKind kind = RewardKind::SemanticCuriosity;
  void validate() const;
  friend bool operator==(const RewardConfig&, const RewardConfig&) = default;
};

inline double semantic_curiosity_reward(std::int64_t delta_sem, const RewardConfig& cfg) {
  return cfg.lambda_sc * static_cast<double>(delta_sem);
}
inline double coverage_reward(std::int64_t delta_explored) { return static_cast<double>(delta_explored); }
template <typename DetectionT>
double object_count_reward(const std::vector<DetectionT>& detections) {
  return static_cast<double>(detections.size());
}

struct InconsistencyStats {
  std::vector<int> channels_per_object;  // 0 for objects never labeled
  std::vector<int> histogram;            // index k: objects with k distinct channels
  double mean_observed = 0.0;            // mean over objects with >= 1 channel
  int observed = 0;
};

InconsistencyStats inconsistency_stats(const SemanticMap& map, const Scene& scene);

inline constexpr std::array<std::array<std::uint8_t, 3>, 5> kChannelPalette{{
    {230, 25, 75},    // red
    {60, 180, 75},    // green
    {0, 130, 200},    // blue
    {255, 225, 25},   // yellow
    {145, 30, 180},   // purple
}};
inline constexpr std::array<std::uint8_t, 3> kExploredColor{200, 200, 200};

// Binary P6 pixmap, one pixel per cell. Cells with several channels are
// drawn as diagonal stripes cycling through their channels.
std::vector<std::uint8_t> encode_map_ppm(const SemanticMap& map);
void render_map(const SemanticMap& map, const std::filesystem::path& path);

}  // namespace semcur
