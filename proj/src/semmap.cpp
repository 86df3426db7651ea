#include "semcur/semmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace semcur {

SemanticMap::SemanticMap(int num_classes, int width, int height)
    : num_classes_(num_classes),
      width_(width),
      height_(height),
      tensor_(static_cast<std::size_t>(num_classes) * width * height, 0),
      explored_(static_cast<std::size_t>(width) * height, 0) {}

std::int64_t SemanticMap::recount() const {
  std::int64_t n = 0;
  for (std::uint8_t v : tensor_) n += v;
  return n;
}

std::int64_t SemanticMap::recount_channel(int channel) const {
  std::int64_t n = 0;
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) n += bit(channel, {x, y}) ? 1 : 0;
  return n;
}

bool SemanticMap::set_bit(int channel, Cell c) {
  auto& v = tensor_[offset(channel, c)];
  if (v) return false;
  v = 1;
  ++sum_cache_;
  return true;
}

bool SemanticMap::set_explored(Cell c) {
  auto& v = explored_[static_cast<std::size_t>(c.y) * width_ + c.x];
  if (v) return false;
  v = 1;
  ++explored_cache_;
  return true;
}

namespace {

// Rotation by the pose heading, built from the exact heading table.
Eigen::Matrix2d heading_rotation(int heading) {
  const Eigen::Vector2d f = heading_vector(heading);
  Eigen::Matrix2d r;
  r << f.x(), -f.y(), f.y(), f.x();
  return r;
}

}  // namespace

template <typename DetectionT>
EgoProjection ego_project(const std::vector<DetectionT>& detections, const Pose& pose) {
  EgoProjection proj;
  const Eigen::Matrix2d to_ego = heading_rotation(pose.heading).transpose();
  for (const DetectionT& d : detections) {
    for (Cell c : d.cells) {
      const Eigen::Vector2d world(c.x + 0.5, c.y + 0.5);
      proj.push_back({d.predicted_class, to_ego * (world - pose.position())});
    }
  }
  return proj;
}

template EgoProjection ego_project<Detection>(const std::vector<Detection>&, const Pose&);
template EgoProjection ego_project<PredictedDetection>(const std::vector<PredictedDetection>&, const Pose&);

std::vector<GeoPoint> to_geocentric(const EgoProjection& proj, const Pose& pose, int width, int height) {
  std::vector<GeoPoint> out;
  out.reserve(proj.size());
  const Eigen::Matrix2d to_world = heading_rotation(pose.heading);
  for (const EgoPoint& p : proj) {
    const Eigen::Vector2d world = to_world * p.ego + pose.position();
    // Points are cell centers; nearest cell index is round(coord - 0.5).
    int x = static_cast<int>(std::lround(world.x() - 0.5));
    int y = static_cast<int>(std::lround(world.y() - 0.5));
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    out.push_back({p.channel, {x, y}});
  }
  return out;
}

MapDelta update(SemanticMap& map, const std::vector<GeoPoint>& geo, const std::vector<VisibleCell>& visible) {
  MapDelta d;
  for (const GeoPoint& g : geo) {
    if (!map.in_bounds(g.cell) || g.channel < 0 || g.channel >= map.num_classes())
      throw std::out_of_range("map update outside the map");
    d.semantic += map.set_bit(g.channel, g.cell) ? 1 : 0;
  }
  for (const VisibleCell& v : visible) {
    if (!map.in_bounds(v.cell)) throw std::out_of_range("visible cell outside the map");
    d.explored += map.set_explored(v.cell) ? 1 : 0;
  }
  return d;
}

const char* to_string(RewardKind k) {
  switch (k) {
    case RewardKind::SemanticCuriosity: return "semantic_curiosity";
    case RewardKind::Coverage: return "coverage";
    case RewardKind::ObjectCount: return "object_count";
    case RewardKind::PredictionError: return "curiosity";
    case RewardKind::None: return "none";
  }
  return "?";
}

RewardKind reward_kind_from_string(const std::string& s) {
  for (RewardKind k : {RewardKind::SemanticCuriosity, RewardKind::Coverage, RewardKind::ObjectCount,
                       RewardKind::PredictionError, RewardKind::None}) {
    if (s == to_string(k)) return k;
  }
  if (s == "prediction_error") return RewardKind::PredictionError;
  throw std::invalid_argument("unknown reward kind: " + s);
}

void RewardConfig::validate() const {
  if (!(lambda_sc > 0.0)) throw std::invalid_argument("lambda_sc must be positive");
}

InconsistencyStats inconsistency_stats(const SemanticMap& map, const Scene& scene) {
  InconsistencyStats s;
  s.histogram.assign(static_cast<std::size_t>(map.num_classes()) + 1, 0);
  double total = 0.0;
  for (const ObjectInstance& o : scene.objects()) {
    int channels = 0;
    for (int c = 0; c < map.num_classes(); ++c) {
      for (Cell cell : o.footprint()) {
        if (map.bit(c, cell)) {
          ++channels;
          break;
        }
      }
    }
    s.channels_per_object.push_back(channels);
    ++s.histogram[static_cast<std::size_t>(channels)];
    if (channels > 0) {
      ++s.observed;
      total += channels;
    }
  }
  s.mean_observed = s.observed > 0 ? total / s.observed : 0.0;
  return s;
}

std::vector<std::uint8_t> encode_map_ppm(const SemanticMap& map) {
  const std::string header =
      "P6\n" + std::to_string(map.width()) + " " + std::to_string(map.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<std::size_t>(map.width()) * map.height() * 3);
  std::vector<int> channels;
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      channels.clear();
      for (int c = 0; c < map.num_classes(); ++c)
        if (map.bit(c, {x, y})) channels.push_back(c);
      std::array<std::uint8_t, 3> rgb{0, 0, 0};
      if (!channels.empty()) {
        const int c = channels[static_cast<std::size_t>(x + y) % channels.size()];
        rgb = kChannelPalette[static_cast<std::size_t>(c) % kChannelPalette.size()];
      } else if (map.explored({x, y})) {
        rgb = kExploredColor;
      }
      out.insert(out.end(), rgb.begin(), rgb.end());
    }
  }
  return out;
}

void render_map(const SemanticMap& map, const std::filesystem::path& path) {
  const auto bytes = encode_map_ppm(map);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace semcur
