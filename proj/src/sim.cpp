#include "semcur/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "semcur/rng.hpp"

namespace semcur {

namespace {

constexpr double kHalfSqrt3 = 0.86602540378443864676;

// Exact unit vectors for the 12 headings; axis-aligned entries carry no
// trigonometric round-off.
constexpr std::array<std::array<double, 2>, kNumHeadings> kHeadingTable{{
    {1.0, 0.0},
    {kHalfSqrt3, 0.5},
    {0.5, kHalfSqrt3},
    {0.0, 1.0},
    {-0.5, kHalfSqrt3},
    {-kHalfSqrt3, 0.5},
    {-1.0, 0.0},
    {-kHalfSqrt3, -0.5},
    {-0.5, -kHalfSqrt3},
    {0.0, -1.0},
    {0.5, -kHalfSqrt3},
    {kHalfSqrt3, -0.5},
}};

int wrap_heading(int h) { return ((h % kNumHeadings) + kNumHeadings) % kNumHeadings; }

}  // namespace

Eigen::Vector2d heading_vector(int heading) {
  const auto& v = kHeadingTable[static_cast<std::size_t>(wrap_heading(heading))];
  return {v[0], v[1]};
}

Cell Pose::cell() const {
  return {static_cast<int>(std::floor(x)), static_cast<int>(std::floor(y))};
}

bool is_valid(const Scene& scene, const Pose& pose) {
  const Cell c = pose.cell();
  return pose.heading >= 0 && pose.heading < kNumHeadings && scene.in_bounds(c) && scene.at(c).is_free();
}

const char* to_string(Action a) {
  switch (a) {
    case Action::Forward: return "forward";
    case Action::TurnLeft: return "turn_left";
    case Action::TurnRight: return "turn_right";
  }
  return "?";
}

void SensorParams::validate() const {
  if (num_rays < 1 || num_rays % 2 == 0) throw std::invalid_argument("num_rays must be odd");
  if (max_range < 1.0) throw std::invalid_argument("max_range must be >= 1");
  if (!(fov_deg > 0.0 && fov_deg < 360.0)) throw std::invalid_argument("fov must be in (0, 360)");
  if (!(forward_step > 0.0)) throw std::invalid_argument("forward_step must be positive");
}

Pose step(const Scene& scene, const Pose& pose, Action action, const SensorParams& params) {
  Pose next = pose;
  switch (action) {
    case Action::TurnLeft: next.heading = wrap_heading(pose.heading - 1); break;
    case Action::TurnRight: next.heading = wrap_heading(pose.heading + 1); break;
    case Action::Forward: {
      const Eigen::Vector2d p = pose.position() + params.forward_step * heading_vector(pose.heading);
      const Pose cand{p.x(), p.y(), pose.heading};
      if (scene.in_bounds(cand.cell()) && scene.at(cand.cell()).is_free()) next = cand;
      break;
    }
  }
  return next;
}

Observation render(const Scene& scene, const Pose& pose, const SensorParams& params) {
  Observation obs;
  obs.rays.reserve(static_cast<std::size_t>(params.num_rays));
  std::vector<Cell> seen;
  seen.reserve(static_cast<std::size_t>(params.num_rays) * 24);

  const double base = pose.heading * kHeadingStepDeg;
  const double spacing = params.num_rays > 1 ? params.fov_deg / (params.num_rays - 1) : 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  const Cell origin = pose.cell();
  seen.push_back(origin);

  for (int i = 0; i < params.num_rays; ++i) {
    const double offset = -0.5 * params.fov_deg + i * spacing;
    // The center ray reuses the exact heading table entry.
    Eigen::Vector2d dir;
    if (2 * i + 1 == params.num_rays) {
      dir = heading_vector(pose.heading);
    } else {
      const double rad = (base + offset) * std::numbers::pi / 180.0;
      dir = {std::cos(rad), std::sin(rad)};
    }

    RayHit hit;
    hit.angle_offset_deg = offset;
    Cell c = origin;
    const int step_x = dir.x() > 0 ? 1 : -1;
    const int step_y = dir.y() > 0 ? 1 : -1;
    const double delta_x = dir.x() != 0.0 ? std::abs(1.0 / dir.x()) : inf;
    const double delta_y = dir.y() != 0.0 ? std::abs(1.0 / dir.y()) : inf;
    double t_x = dir.x() != 0.0 ? (step_x > 0 ? (c.x + 1 - pose.x) : (pose.x - c.x)) * delta_x : inf;
    double t_y = dir.y() != 0.0 ? (step_y > 0 ? (c.y + 1 - pose.y) : (pose.y - c.y)) * delta_y : inf;

    for (;;) {
      double t;
      if (t_x <= t_y) {
        t = t_x;
        t_x += delta_x;
        c.x += step_x;
      } else {
        t = t_y;
        t_y += delta_y;
        c.y += step_y;
      }
      if (t > params.max_range || !scene.in_bounds(c)) {
        hit.kind = RayHit::Kind::MaxRange;
        hit.distance = params.max_range;
        break;
      }
      const CellKind& k = scene.at(c);
      seen.push_back(c);
      if (!k.is_free()) {
        hit.kind = k.is_wall() ? RayHit::Kind::Wall : RayHit::Kind::Object;
        hit.object_id = k.is_object() ? scene.objects()[static_cast<std::size_t>(k.object)].id : -1;
        hit.distance = std::max(t, 1e-9);
        hit.cell = c;
        break;
      }
    }
    obs.rays.push_back(hit);
  }

  std::sort(seen.begin(), seen.end(), [](Cell a, Cell b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  obs.visible_cells.reserve(seen.size());
  for (Cell c : seen) obs.visible_cells.push_back({c, scene.at(c)});
  return obs;
}

Pose random_free_pose(const Scene& scene, std::uint64_t rng_seed) {
  const auto free = scene.free_cells();
  if (free.empty()) throw std::invalid_argument("scene has no free cell");
  Rng rng(hash_combine(0x905eULL, rng_seed));
  const Cell c = free[uniform_index(rng, free.size())];
  const int heading = static_cast<int>(uniform_index(rng, kNumHeadings));
  return {c.x + 0.5, c.y + 0.5, heading};
}

}  // namespace semcur
