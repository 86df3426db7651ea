#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "semcur/scene.hpp"

namespace semcur {

inline constexpr int kNumHeadings = 12;
inline constexpr double kHeadingStepDeg = 360.0 / kNumHeadings;

// Heading h points along (cos(30h deg), sin(30h deg)) in grid coordinates
// (+x east, +y south). Heading 0 is +x; TurnRight increments the heading.
Eigen::Vector2d heading_vector(int heading);

struct Pose {
  double x = 0.0;
  double y = 0.0;
  int heading = 0;

  Cell cell() const;
  Eigen::Vector2d position() const { return {x, y}; }
  friend bool operator==(const Pose&, const Pose&) = default;
};

bool is_valid(const Scene& scene, const Pose& pose);

enum class Action : std::uint8_t { Forward = 0, TurnLeft = 1, TurnRight = 2 };
inline constexpr int kNumActions = 3;
inline constexpr std::array<Action, kNumActions> kAllActions{Action::Forward, Action::TurnLeft,
                                                            Action::TurnRight};
const char* to_string(Action a);

struct SensorParams {
  double fov_deg = 90.0;
  int num_rays = 31;
  double max_range = 16.0;
  double forward_step = 1.0;

  void validate() const;
  friend bool operator==(const SensorParams&, const SensorParams&) = default;
};

struct RayHit {
  enum class Kind : std::uint8_t { Wall, Object, MaxRange };
  double angle_offset_deg = 0.0;
  double distance = 0.0;
  Kind kind = Kind::MaxRange;
  int object_id = -1;
  Cell cell{-1, -1};  // struck cell, when kind != MaxRange
};

struct VisibleCell {
  Cell cell;
  CellKind kind;
};

struct Observation {
  std::vector<RayHit> rays;
  // Sorted by (y, x), unique.
  std::vector<VisibleCell> visible_cells;
};

Pose step(const Scene& scene, const Pose& pose, Action action, const SensorParams& params = {});

Observation render(const Scene& scene, const Pose& pose, const SensorParams& params = {});

Pose random_free_pose(const Scene& scene, std::uint64_t rng_seed);

}  // namespace semcur
