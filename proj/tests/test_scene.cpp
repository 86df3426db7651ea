#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "semcur/rng.hpp"
#include "semcur/scene.hpp"

using namespace semcur;

namespace {

// Independent flood fill over 4-neighbours, counting Free components.
int flood_components(const Scene& s) {
  std::vector<int> seen(static_cast<std::size_t>(s.width()) * s.height(), 0);
  int comps = 0;
  for (int y = 0; y < s.height(); ++y) {
    for (int x = 0; x < s.width(); ++x) {
      if (!s.at({x, y}).is_free() || seen[s.index({x, y})]) continue;
      ++comps;
      std::vector<Cell> stack{{x, y}};
      seen[s.index({x, y})] = 1;
      while (!stack.empty()) {
        Cell c = stack.back();
        stack.pop_back();
        for (Cell n : {Cell{c.x + 1, c.y}, Cell{c.x - 1, c.y}, Cell{c.x, c.y + 1}, Cell{c.x, c.y - 1}}) {
          if (!s.in_bounds(n) || seen[s.index(n)] || !s.at(n).is_free()) continue;
          seen[s.index(n)] = 1;
          stack.push_back(n);
        }
      }
    }
  }
  return comps;
}

void check_invariants(const Scene& s, const SceneSpec& spec) {
  for (int x = 0; x < s.width(); ++x) {
    REQUIRE(s.at({x, 0}).is_wall());
    REQUIRE(s.at({x, s.height() - 1}).is_wall());
  }
  for (int y = 0; y < s.height(); ++y) {
    REQUIRE(s.at({0, y}).is_wall());
    REQUIRE(s.at({s.width() - 1, y}).is_wall());
  }
  REQUIRE(flood_components(s) == 1);

  std::set<std::pair<int, int>> claimed;
  for (const auto& o : s.objects()) {
    REQUIRE(o.class_id >= 0);
    REQUIRE(o.class_id < spec.num_classes);
    REQUIRE(o.w >= 1);
    REQUIRE(o.w <= 3);
    REQUIRE(o.h >= 1);
    REQUIRE(o.h <= 3);
    for (Cell c : o.footprint()) {
      REQUIRE(claimed.insert({c.x, c.y}).second);
      REQUIRE(s.at(c).is_object());
      REQUIRE(s.at(c).object == o.id);
    }
  }
  for (int y = 0; y < s.height(); ++y)
    for (int x = 0; x < s.width(); ++x) {
      const CellKind k = s.at({x, y});
      if (!k.is_object()) continue;
      REQUIRE(k.object >= 0);
      REQUIRE(k.object < static_cast<int>(s.objects().size()));
      REQUIRE(s.objects()[static_cast<std::size_t>(k.object)].contains({x, y}));
    }
}

}  // namespace

TEST_CASE("minimal spec: one room, no objects") {
  SceneSpec spec;
  spec.seed = 0;
  spec.width = spec.height = 16;
  spec.num_rooms = {1, 1};
  spec.num_objects = {0, 0};
  const Scene s = generate_scene(spec);
  CHECK(s.objects().empty());
  CHECK(flood_components(s) == 1);

  // The free region is one filled rectangle.
  int x0 = 99, y0 = 99, x1 = -1, y1 = -1;
  for (Cell c : s.free_cells()) {
    x0 = std::min(x0, c.x);
    y0 = std::min(y0, c.y);
    x1 = std::max(x1, c.x);
    y1 = std::max(y1, c.y);
  }
  CHECK(static_cast<int>(s.free_cells().size()) == (x1 - x0 + 1) * (y1 - y0 + 1));
  check_invariants(s, spec);
}

TEST_CASE("generation is deterministic") {
  SceneSpec spec;
  spec.seed = 7;
  const Scene a = generate_scene(spec);
  const Scene b = generate_scene(spec);
  CHECK(a == b);
  CHECK(to_json(a).dump() == to_json(b).dump());
}

TEST_CASE("default scene is connected by flood fill") {
  SceneSpec spec;
  spec.seed = 7;
  const Scene s = generate_scene(spec);
  CHECK(flood_components(s) == 1);
  CHECK(count_free_components(s) == 1);
}

TEST_CASE("property: scene invariants over random specs") {
  Rng rng(12345);
  for (int i = 0; i < 100; ++i) {
    SceneSpec spec;
    spec.seed = rng();
    spec.width = uniform_int(rng, 24, 64);
    spec.height = uniform_int(rng, 24, 64);
    spec.num_rooms = {1, uniform_int(rng, 1, 5)};
    const int lo = uniform_int(rng, 0, 8);
    spec.num_objects = {lo, lo + uniform_int(rng, 0, 6)};
    spec.num_classes = uniform_int(rng, 2, 6);
    Scene s;
    try {
      s = generate_scene(spec);
    } catch (const GenerationError&) {
      continue;  // an explicit failure is allowed; a broken scene is not
    }
    check_invariants(s, spec);
    CHECK(static_cast<int>(s.objects().size()) >= spec.num_objects.lo);
    CHECK(static_cast<int>(s.objects().size()) <= spec.num_objects.hi);
    if (static_cast<int>(s.objects().size()) >= spec.num_classes) {
      std::set<int> classes;
      for (const auto& o : s.objects()) classes.insert(o.class_id);
      CHECK(static_cast<int>(classes.size()) == spec.num_classes);
    }
  }
}

TEST_CASE("default specs always generate") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    const Scene s = generate_scene(spec);
    check_invariants(s, spec);
  }
}

TEST_CASE("objects are flush against a wall") {
  SceneSpec spec;
  spec.seed = 3;
  const Scene s = generate_scene(spec);
  for (const auto& o : s.objects()) {
    bool touches = false;
    for (Cell c : o.footprint())
      for (Cell n : {Cell{c.x + 1, c.y}, Cell{c.x - 1, c.y}, Cell{c.x, c.y + 1}, Cell{c.x, c.y - 1}})
        touches = touches || (s.in_bounds(n) && s.at(n).is_wall());
    CHECK(touches);
  }
}

TEST_CASE("overconstrained spec fails explicitly") {
  SceneSpec spec;
  spec.width = spec.height = 16;
  spec.num_rooms = {1, 1};
  spec.num_objects = {200, 200};
  CHECK_THROWS_AS(generate_scene(spec), GenerationError);
}

TEST_CASE("spec validation") {
  SceneSpec spec;
  spec.width = 15;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = SceneSpec{};
  spec.num_classes = 1;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("scene json round trip") {
  SceneSpec spec;
  spec.seed = 11;
  const Scene s = generate_scene(spec);
  const Scene back = scene_from_json(nlohmann::json::parse(to_json(s).dump()));
  CHECK(back == s);
  CHECK(scene_spec_from_json(to_json(spec)) == spec);
}

TEST_CASE("make_split") {
  SUBCASE("small split is disjoint") {
    const SceneSplit s = make_split(0, 2, 2, 1);
    CHECK(is_disjoint(s));
    CHECK(s.unlabeled.size() + s.train.size() + s.test.size() == 5);
  }
  SUBCASE("desk split has 17 distinct seeds") {
    const SceneSplit s = make_split(0, 8, 6, 3);
    std::set<std::uint64_t> all(s.unlabeled.begin(), s.unlabeled.end());
    all.insert(s.train.begin(), s.train.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all.size() == 17);
    CHECK(make_split(0, 8, 6, 3) == s);
  }
  SUBCASE("full-scale split sizes") {
    const SceneSplit s = make_split(1, 72, 50, 11);
    CHECK(s.unlabeled.size() == 72);
    CHECK(s.train.size() == 50);
    CHECK(s.test.size() == 11);
    CHECK(is_disjoint(s));
  }
  CHECK_THROWS(make_split(0, 0, 1, 1));
}
