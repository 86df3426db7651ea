#include "semcur/scene.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <queue>
#include <set>

#include "semcur/rng.hpp"

namespace semcur {

namespace {

constexpr int kMaxAttempts = 64;       // whole-scene restarts
constexpr int kPlacementTries = 400;   // per room / per object

struct Rect {
  int x0, y0, x1, y1;  // inclusive interior bounds
  bool overlaps_with_margin(const Rect& o, int margin) const {
    return !(x1 + margin < o.x0 || o.x1 + margin < x0 || y1 + margin < o.y0 || o.y1 + margin < y0);
  }
  Cell center() const { return {(x0 + x1) / 2, (y0 + y1) / 2}; }
};

void carve(Scene& s, Cell c) {
  if (c.x > 0 && c.y > 0 && c.x < s.width() - 1 && c.y < s.height() - 1) s.at(c) = CellKind::free();
}

void carve_corridor(Scene& s, Cell a, Cell b, bool horizontal_first) {
  Cell cur = a;
  auto walk_x = [&] {
    while (cur.x != b.x) {
      carve(s, cur);
      cur.x += (b.x > cur.x) ? 1 : -1;
    }
  };
  auto walk_y = [&] {
    while (cur.y != b.y) {
      carve(s, cur);
      cur.y += (b.y > cur.y) ? 1 : -1;
    }
  };
  if (horizontal_first) {
    walk_x();
    walk_y();
  } else {
    walk_y();
    walk_x();
  }
  carve(s, cur);
}

std::optional<std::vector<Rect>> place_rooms(const SceneSpec& spec, int n_rooms, Rng& rng) {
  const int max_side = std::min({16, spec.width - 2, spec.height - 2});
  const int min_side = std::min(4, max_side);
  std::vector<Rect> rooms;
  for (int r = 0; r < n_rooms; ++r) {
    bool placed = false;
    for (int t = 0; t < kPlacementTries && !placed; ++t) {
      const int w = uniform_int(rng, min_side, max_side);
      const int h = uniform_int(rng, min_side, max_side);
      const int x0 = uniform_int(rng, 1, spec.width - 1 - w);
      const int y0 = uniform_int(rng, 1, spec.height - 1 - h);
      Rect cand{x0, y0, x0 + w - 1, y0 + h - 1};
      if (std::none_of(rooms.begin(), rooms.end(),
                       [&](const Rect& o) { return cand.overlaps_with_margin(o, 1); })) {
        rooms.push_back(cand);
        placed = true;
      }
    }
    if (!placed) return std::nullopt;
  }
  return rooms;
}

// Candidate object rectangle flush against one side of the room.
std::optional<Rect> wall_adjacent_rect(const Rect& room, int w, int h, Rng& rng) {
  const int rw = room.x1 - room.x0 + 1;
  const int rh = room.y1 - room.y0 + 1;
  if (w > rw || h > rh) return std::nullopt;
  const int side = uniform_int(rng, 0, 3);
  int x0 = 0, y0 = 0;
  switch (side) {
    case 0:  // north
      x0 = uniform_int(rng, room.x0, room.x1 - w + 1);
      y0 = room.y0;
      break;
    case 1:  // south
      x0 = uniform_int(rng, room.x0, room.x1 - w + 1);
      y0 = room.y1 - h + 1;
      break;
    case 2:  // west
      x0 = room.x0;
      y0 = uniform_int(rng, room.y0, room.y1 - h + 1);
      break;
    default:  // east
      x0 = room.x1 - w + 1;
      y0 = uniform_int(rng, room.y0, room.y1 - h + 1);
      break;
  }
  return Rect{x0, y0, x0 + w - 1, y0 + h - 1};
}

bool touches_wall(const Scene& s, const Rect& r) {
  for (int x = r.x0; x <= r.x1; ++x) {
    if (s.at({x, r.y0 - 1}).is_wall() || s.at({x, r.y1 + 1}).is_wall()) return true;
  }
  for (int y = r.y0; y <= r.y1; ++y) {
    if (s.at({r.x0 - 1, y}).is_wall() || s.at({r.x1 + 1, y}).is_wall()) return true;
  }
  return false;
}

std::optional<Scene> try_generate(const SceneSpec& spec, Rng& rng) {
  Scene scene(spec.width, spec.height, spec.seed);
  scene.set_num_classes(spec.num_classes);

  const int n_rooms = uniform_int(rng, spec.num_rooms.lo, spec.num_rooms.hi);
  auto rooms = place_rooms(spec, n_rooms, rng);
  if (!rooms) return std::nullopt;

  for (const Rect& r : *rooms) {
    for (int y = r.y0; y <= r.y1; ++y)
      for (int x = r.x0; x <= r.x1; ++x) scene.at({x, y}) = CellKind::free();
  }
  for (std::size_t i = 1; i < rooms->size(); ++i) {
    carve_corridor(scene, (*rooms)[i - 1].center(), (*rooms)[i].center(), uniform_int(rng, 0, 1) == 1);
  }

  const int n_objects = uniform_int(rng, spec.num_objects.lo, spec.num_objects.hi);
  std::vector<int> classes(static_cast<std::size_t>(n_objects));
  for (int i = 0; i < n_objects; ++i) {
    classes[static_cast<std::size_t>(i)] =
        i < spec.num_classes ? i : uniform_int(rng, 0, spec.num_classes - 1);
  }
  shuffle(classes.begin(), classes.end(), rng);

  for (int cls : classes) {
    bool placed = false;
    for (int t = 0; t < kPlacementTries && !placed; ++t) {
      const Rect& room = (*rooms)[uniform_index(rng, rooms->size())];
      const int w = uniform_int(rng, 1, 3);
      const int h = uniform_int(rng, 1, 3);
      auto cand = wall_adjacent_rect(room, w, h, rng);
      if (!cand) continue;
      bool all_free = true;
      for (int y = cand->y0; y <= cand->y1 && all_free; ++y)
        for (int x = cand->x0; x <= cand->x1 && all_free; ++x) all_free = scene.at({x, y}).is_free();
      if (!all_free || !touches_wall(scene, *cand)) continue;

      const int idx = scene.add_object(cls, {cand->x0, cand->y0}, w, h);
      if (count_free_components(scene) == 1) {
        placed = true;
      } else {
        for (Cell c : scene.objects()[static_cast<std::size_t>(idx)].footprint()) scene.at(c) = CellKind::free();
        scene.objects().pop_back();
      }
    }
    if (!placed) return std::nullopt;
  }
  return scene;
}

}  // namespace

void SceneSpec::validate() const {
  if (width < 16 || height < 16) throw std::invalid_argument("scene must be at least 16x16");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (num_rooms.lo < 1 || num_rooms.hi < num_rooms.lo) throw std::invalid_argument("bad num_rooms range");
  if (num_objects.lo < 0 || num_objects.hi < num_objects.lo)
    throw std::invalid_argument("bad num_objects range");
}

std::vector<Cell> ObjectInstance::footprint() const {
  std::vector<Cell> cells;
  cells.reserve(static_cast<std::size_t>(w * h));
  for (int y = origin.y; y < origin.y + h; ++y)
    for (int x = origin.x; x < origin.x + w; ++x) cells.push_back({x, y});
  return cells;
}

Scene::Scene(int width, int height, std::uint64_t seed)
    : width_(width), height_(height), seed_(seed),
      grid_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), CellKind::wall()) {}

int Scene::add_object(int class_id, Cell origin, int w, int h) {
  const int idx = static_cast<int>(objects_.size());
  objects_.push_back({idx, class_id, origin, w, h});
  for (Cell c : objects_.back().footprint()) at(c) = CellKind::object_at(idx);
  return idx;
}

std::vector<Cell> Scene::free_cells() const {
  std::vector<Cell> out;
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x)
      if (at({x, y}).is_free()) out.push_back({x, y});
  return out;
}

int count_free_components(const Scene& scene) {
  std::vector<char> seen(scene.grid().size(), 0);
  int components = 0;
  std::queue<Cell> q;
  for (int y = 0; y < scene.height(); ++y) {
    for (int x = 0; x < scene.width(); ++x) {
      const Cell start{x, y};
      if (!scene.at(start).is_free() || seen[scene.index(start)]) continue;
      ++components;
      seen[scene.index(start)] = 1;
      q.push(start);
      while (!q.empty()) {
        const Cell c = q.front();
        q.pop();
        for (Cell n : {Cell{c.x + 1, c.y}, Cell{c.x - 1, c.y}, Cell{c.x, c.y + 1}, Cell{c.x, c.y - 1}}) {
          if (scene.in_bounds(n) && scene.at(n).is_free() && !seen[scene.index(n)]) {
            seen[scene.index(n)] = 1;
            q.push(n);
          }
        }
      }
    }
  }
  return components;
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(hash_combine(0x5ce7e5eedULL, spec.seed));
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    if (auto scene = try_generate(spec, rng)) return std::move(*scene);
  }
  throw GenerationError("scene generation failed after " + std::to_string(kMaxAttempts) +
                        " attempts (seed " + std::to_string(spec.seed) + ")");
}

SceneSplit make_split(std::uint64_t base_seed, int n_unlabeled, int n_train, int n_test) {
  if (n_unlabeled < 1 || n_train < 1 || n_test < 1) throw std::invalid_argument("split counts must be >= 1");
  SceneSplit split;
  std::set<std::uint64_t> used;
  std::uint64_t counter = 0;
  auto next = [&] {
    for (;;) {
      // Scene seeds are kept below 2^53 so they survive a JSON double round trip.
      const std::uint64_t s = hash_combine(base_seed, 0x5b117ULL, counter++) >> 11;
      if (used.insert(s).second) return s;
    }
  };
  for (int i = 0; i < n_unlabeled; ++i) split.unlabeled.push_back(next());
  for (int i = 0; i < n_train; ++i) split.train.push_back(next());
  for (int i = 0; i < n_test; ++i) split.test.push_back(next());
  return split;
}

bool is_disjoint(const SceneSplit& split) {
  std::set<std::uint64_t> all;
  std::size_t total = 0;
  for (const auto* v : {&split.unlabeled, &split.train, &split.test}) {
    all.insert(v->begin(), v->end());
    total += v->size();
  }
  return all.size() == total;
}

namespace {

int cell_code(const CellKind& k) {
  switch (k.tag) {
    case CellKind::Tag::Free: return 0;
    case CellKind::Tag::Wall: return 1;
    case CellKind::Tag::Object: return 2 + k.object;
  }
  return 1;
}

CellKind cell_from_code(int code) {
  if (code == 0) return CellKind::free();
  if (code == 1) return CellKind::wall();
  return CellKind::object_at(code - 2);
}

}  // namespace

// Grid is row-major run-length encoded as [[code, run], ...] with code
// 0 = free, 1 = wall, 2 + i = object i.
nlohmann::json to_json(const Scene& scene) {
  nlohmann::json runs = nlohmann::json::array();
  int prev = -1;
  int run = 0;
  for (const CellKind& k : scene.grid()) {
    const int code = cell_code(k);
    if (code == prev) {
      ++run;
    } else {
      if (run > 0) runs.push_back({prev, run});
      prev = code;
      run = 1;
    }
  }
  if (run > 0) runs.push_back({prev, run});

  nlohmann::json objects = nlohmann::json::array();
  for (const ObjectInstance& o : scene.objects()) {
    const auto c = o.center();
    objects.push_back({{"id", o.id},
                       {"class_id", o.class_id},
                       {"x", o.origin.x},
                       {"y", o.origin.y},
                       {"w", o.w},
                       {"h", o.h},
                       {"center", {c.x(), c.y()}}});
  }
  return {{"seed", scene.seed()},
          {"width", scene.width()},
          {"height", scene.height()},
          {"num_classes", scene.num_classes()},
          {"grid_rle", std::move(runs)},
          {"objects", std::move(objects)}};
}

Scene scene_from_json(const nlohmann::json& j) {
  Scene scene(j.at("width").get<int>(), j.at("height").get<int>(), j.at("seed").get<std::uint64_t>());
  scene.set_num_classes(j.at("num_classes").get<int>());
  for (const auto& o : j.at("objects")) {
    scene.objects().push_back({o.at("id").get<int>(), o.at("class_id").get<int>(),
                               {o.at("x").get<int>(), o.at("y").get<int>()}, o.at("w").get<int>(),
                               o.at("h").get<int>()});
  }
  std::size_t pos = 0;
  const std::size_t total = static_cast<std::size_t>(scene.width()) * static_cast<std::size_t>(scene.height());
  for (const auto& r : j.at("grid_rle")) {
    const CellKind k = cell_from_code(r.at(0).get<int>());
    const auto n = r.at(1).get<std::size_t>();
    if (pos + n > total) throw std::invalid_argument("grid_rle overruns the grid");
    if (k.is_object() && k.object >= static_cast<int>(scene.objects().size()))
      throw std::invalid_argument("grid_rle references a missing object");
    for (std::size_t i = 0; i < n; ++i, ++pos) {
      scene.at({static_cast<int>(pos % static_cast<std::size_t>(scene.width())),
                static_cast<int>(pos / static_cast<std::size_t>(scene.width()))}) = k;
    }
  }
  if (pos != total) throw std::invalid_argument("grid_rle does not cover the grid");
  return scene;
}

nlohmann::json to_json(const SceneSpec& spec) {
  return {{"seed", spec.seed},
          {"width", spec.width},
          {"height", spec.height},
          {"num_rooms", {spec.num_rooms.lo, spec.num_rooms.hi}},
          {"num_objects", {spec.num_objects.lo, spec.num_objects.hi}},
          {"num_classes", spec.num_classes}};
}

SceneSpec scene_spec_from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.seed = j.value("seed", s.seed);
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  if (j.contains("num_rooms")) s.num_rooms = {j["num_rooms"].at(0).get<int>(), j["num_rooms"].at(1).get<int>()};
  if (j.contains("num_objects"))
    s.num_objects = {j["num_objects"].at(0).get<int>(), j["num_objects"].at(1).get<int>()};
  s.num_classes = j.value("num_classes", s.num_classes);
  return s;
}

}  // namespace semcur
