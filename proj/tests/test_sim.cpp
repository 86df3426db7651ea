#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "semcur/rng.hpp"
#include "semcur/sim.hpp"

using namespace semcur;
using semcur::testing::open_room;

namespace {

bool opaque(const Scene& s, Cell c) { return !s.at(c).is_free(); }

// True if some point of `target` (edges included) is reachable from `from` by a
// straight segment that crosses no opaque cell before entering `target`.
// Dense sampling, independent of the renderer's grid traversal.
bool line_of_sight(const Scene& s, const Eigen::Vector2d& from, Cell target) {
  constexpr int kGrid = 9;
  constexpr int kSamples = 400;
  auto coord = [](int g) { return std::clamp(static_cast<double>(g) / (kGrid - 1), 1e-7, 1.0 - 1e-7); };
  for (int gy = 0; gy < kGrid; ++gy) {
    for (int gx = 0; gx < kGrid; ++gx) {
      const Eigen::Vector2d to(target.x + coord(gx), target.y + coord(gy));
      bool clear = true;
      for (int t = 1; t < kSamples && clear; ++t) {
        const Eigen::Vector2d q = from + (to - from) * (static_cast<double>(t) / kSamples);
        const Cell c{static_cast<int>(std::floor(q.x())), static_cast<int>(std::floor(q.y()))};
        if (c == target) break;
        clear = !opaque(s, c);
      }
      if (clear) return true;
    }
  }
  return false;
}

Pose random_pose(const Scene& s, Rng& rng) { return random_free_pose(s, rng()); }

}  // namespace

TEST_CASE("turning twelve times is the identity") {
  const Scene s = open_room(16, 16);
  Pose p{8.5, 8.5, 0};
  for (int i = 0; i < 12; ++i) p = step(s, p, Action::TurnLeft);
  CHECK(p == Pose{8.5, 8.5, 0});
  Pose q{8.5, 8.5, 5};
  q = step(s, q, Action::TurnLeft);
  CHECK(q.heading == 4);
  q = step(s, q, Action::TurnRight);
  q = step(s, q, Action::TurnRight);
  CHECK(q.heading == 6);
  CHECK(step(s, Pose{8.5, 8.5, 0}, Action::TurnLeft).heading == 11);
}

TEST_CASE("collision leaves the pose unchanged") {
  const Scene s = open_room(16, 16);
  const Pose p{14.5, 8.5, 0};  // wall at x = 15
  CHECK(step(s, p, Action::Forward) == p);
  Scene t = open_room(16, 16);
  t.add_object(0, {9, 8}, 1, 1);
  const Pose q{8.5, 8.5, 0};
  CHECK(step(t, q, Action::Forward) == q);
}

TEST_CASE("heading table matches cos/sin and forward moves along it") {
  const Scene s = open_room(16, 16);
  CHECK(step(s, Pose{8.0, 8.0, 0}, Action::Forward) == Pose{9.0, 8.0, 0});
  for (int h = 0; h < kNumHeadings; ++h) {
    const double a = h * 30.0 * std::numbers::pi / 180.0;
    const Eigen::Vector2d v = heading_vector(h);
    CHECK(v.x() == doctest::Approx(std::cos(a)).epsilon(1e-12));
    CHECK(v.y() == doctest::Approx(std::sin(a)).epsilon(1e-12));
    CHECK(std::abs(v.norm() - 1.0) < 1e-15);
    const Pose p = step(s, Pose{8.0, 8.0, h}, Action::Forward);
    CHECK(p.x == doctest::Approx(8.0 + v.x()));
    CHECK(p.y == doctest::Approx(8.0 + v.y()));
    CHECK(p.heading == h);
  }
  // +y points south: heading 3 increases y.
  CHECK(step(s, Pose{8.0, 8.0, 3}, Action::Forward) == Pose{8.0, 9.0, 3});
}

TEST_CASE("property: step preserves pose validity") {
  Rng rng(99);
  for (int i = 0; i < 20; ++i) {
    SceneSpec spec;
    spec.seed = rng();
    const Scene s = generate_scene(spec);
    Pose p = random_pose(s, rng);
    for (int k = 0; k < 200; ++k) {
      p = step(s, p, kAllActions[uniform_index(rng, 3)]);
      REQUIRE(is_valid(s, p));
    }
  }
}

TEST_CASE("render in an open room beyond range gives max-range rays") {
  const Scene s = open_room(64, 64);
  SensorParams sp;
  sp.max_range = 8.0;
  const Observation o = render(s, Pose{32.5, 32.5, 0}, sp);
  REQUIRE(o.rays.size() == 31);
  for (const auto& r : o.rays) {
    CHECK(r.kind == RayHit::Kind::MaxRange);
    CHECK(r.distance == sp.max_range);
  }
  CHECK(o.rays.front().angle_offset_deg == doctest::Approx(-45.0));
  CHECK(o.rays.back().angle_offset_deg == doctest::Approx(45.0));
  CHECK(o.rays[15].angle_offset_deg == 0.0);
}

TEST_CASE("center ray hits a flat wall at the analytic distance") {
  const Scene s = open_room(8, 16);  // east wall face at x = 7
  for (int h : {0, 6, 3, 9}) {
    Pose p{4.0, 8.5, h};
    double expect = 0.0;
    if (h == 0) expect = 7.0 - 4.0;
    if (h == 6) expect = 4.0 - 1.0;
    if (h == 3) expect = 15.0 - 8.5;
    if (h == 9) expect = 8.5 - 1.0;
    const Observation o = render(s, p);
    const RayHit& c = o.rays[o.rays.size() / 2];
    CHECK(c.kind == RayHit::Kind::Wall);
    CHECK(std::abs(c.distance - expect) <= 0.5);
  }
  const Observation o = render(s, Pose{4.0, 8.5, 0});
  CHECK(o.rays[15].distance == doctest::Approx(3.0));
}

TEST_CASE("property: observation invariants and line of sight") {
  Rng rng(7);
  int checked = 0;
  for (int i = 0; i < 30; ++i) {
    SceneSpec spec;
    spec.seed = rng();
    const Scene s = generate_scene(spec);
    for (int k = 0; k < 10; ++k) {
      const Pose p = random_pose(s, rng);
      const SensorParams sp;
      const Observation o = render(s, p, sp);
      REQUIRE(o.rays.size() == static_cast<std::size_t>(sp.num_rays));
      for (const auto& r : o.rays) {
        REQUIRE(r.distance > 0.0);
        REQUIRE(r.distance <= sp.max_range);
        if (r.kind == RayHit::Kind::Object) {
          REQUIRE(r.object_id >= 0);
          REQUIRE(r.object_id < static_cast<int>(s.objects().size()));
          // Occlusion soundness: sample the segment up to the hit point.
          const double a = (p.heading * 30.0 + r.angle_offset_deg) * std::numbers::pi / 180.0;
          const Eigen::Vector2d dir(std::cos(a), std::sin(a));
          for (int t = 0; t < 400; ++t) {
            const Eigen::Vector2d q = p.position() + dir * (r.distance * (t + 0.5) / 400.0 * 0.999);
            const Cell c{static_cast<int>(std::floor(q.x())), static_cast<int>(std::floor(q.y()))};
            REQUIRE_FALSE(s.at(c).is_wall());
          }
        }
      }
      for (std::size_t j = 0; j < o.visible_cells.size(); ++j) {
        const Cell c = o.visible_cells[j].cell;
        REQUIRE(s.in_bounds(c));
        REQUIRE(o.visible_cells[j].kind == s.at(c));
        if (j > 0) {
          const Cell b = o.visible_cells[j - 1].cell;
          REQUIRE((b.y < c.y || (b.y == c.y && b.x < c.x)));
        }
        const bool seen = line_of_sight(s, p.position(), c);
        CHECK(seen);
        ++checked;
      }
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("render is deterministic") {
  SceneSpec spec;
  spec.seed = 5;
  const Scene s = generate_scene(spec);
  const Pose p = random_free_pose(s, 17);
  const Observation a = render(s, p);
  const Observation b = render(s, p);
  REQUIRE(a.rays.size() == b.rays.size());
  for (std::size_t i = 0; i < a.rays.size(); ++i) {
    CHECK(a.rays[i].distance == b.rays[i].distance);
    CHECK(a.rays[i].object_id == b.rays[i].object_id);
  }
  CHECK(a.visible_cells.size() == b.visible_cells.size());
}

TEST_CASE("random_free_pose") {
  SUBCASE("single free cell") {
    Scene s(16, 16);
    s.at({4, 9}) = CellKind::free();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Pose p = random_free_pose(s, seed);
      CHECK(p.cell() == Cell{4, 9});
      CHECK(p.x == 4.5);
      CHECK(p.y == 9.5);
    }
  }
  SUBCASE("fixed seed is reproducible") {
    const Scene s = open_room(16, 16);
    CHECK(random_free_pose(s, 42) == random_free_pose(s, 42));
  }
  SUBCASE("uniform over free cells (chi-square)") {
    Scene s(16, 16);
    for (int x = 2; x < 12; ++x) s.at({x, 5}) = CellKind::free();
    std::vector<int> counts(16, 0);
    std::vector<int> headings(kNumHeadings, 0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const Pose p = random_free_pose(s, hash_combine(2024, i));
      ++counts[static_cast<std::size_t>(p.cell().x)];
      ++headings[static_cast<std::size_t>(p.heading)];
    }
    const double e = n / 10.0;
    const double sigma = std::sqrt(n * 0.1 * 0.9);
    double chi2 = 0.0;
    for (int x = 2; x < 12; ++x) {
      CHECK(std::abs(counts[static_cast<std::size_t>(x)] - e) < 3.0 * sigma);
      chi2 += (counts[static_cast<std::size_t>(x)] - e) * (counts[static_cast<std::size_t>(x)] - e) / e;
    }
    CHECK(chi2 < 27.88);  // df 9, p = 0.001
    for (int h : headings) CHECK(std::abs(h - n / 12.0) < 4.0 * std::sqrt(n / 12.0));
  }
}

TEST_CASE("sensor validation") {
  SensorParams sp;
  sp.num_rays = 30;
  CHECK_THROWS(sp.validate());
  sp = SensorParams{};
  sp.max_range = 0.5;
  CHECK_THROWS(sp.validate());
}
