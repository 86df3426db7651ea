#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace semcur {

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

// Grid cell contents. Object cells carry the index into Scene::objects.
struct CellKind {
  enum class Tag : std::uint8_t { Free, Wall, Object };
  Tag tag = Tag::Wall;
  int object = -1;

  static constexpr CellKind free() { return {Tag::Free, -1}; }
  static constexpr CellKind wall() { return {Tag::Wall, -1}; }
  static constexpr CellKind object_at(int idx) { return {Tag::Object, idx}; }

  bool is_free() const { return tag == Tag::Free; }
  bool is_wall() const { return tag == Tag::Wall; }
  bool is_object() const { return tag == Tag::Object; }
  friend bool operator==(const CellKind&, const CellKind&) = default;
};

struct IntRange {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const IntRange&, const IntRange&) = default;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int width = 64;
  int height = 64;
  IntRange num_rooms{3, 6};
  IntRange num_objects{8, 16};
  int num_classes = 5;

  // Throws std::invalid_argument when the spec violates its invariants.
  void validate() const;
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct ObjectInstance {
  int id = 0;
  int class_id = 0;
  Cell origin;  // top-left corner of the footprint rectangle
  int w = 1;
  int h = 1;

  std::vector<Cell> footprint() const;
  Eigen::Vector2d center() const {
    return {origin.x + 0.5 * w, origin.y + 0.5 * h};
  }
  bool contains(Cell c) const {
    return c.x >= origin.x && c.x < origin.x + w && c.y >= origin.y && c.y < origin.y + h;
  }
  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

class Scene {
 public:
  Scene() = default;
  Scene(int width, int height, std::uint64_t seed = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint64_t seed() const { return seed_; }
  int num_classes() const { return num_classes_; }
  void set_num_classes(int c) { num_classes_ = c; }

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  const CellKind& at(Cell c) const { return grid_[index(c)]; }
  CellKind& at(Cell c) { return grid_[index(c)]; }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * width_ + c.x; }

  const std::vector<CellKind>& grid() const { return grid_; }
  const std::vector<ObjectInstance>& objects() const { return objects_; }
  std::vector<ObjectInstance>& objects() { return objects_; }

  // Appends an object and stamps its footprint into the grid.
  int add_object(int class_id, Cell origin, int w, int h);

  std::vector<Cell> free_cells() const;

  friend bool operator==(const Scene&, const Scene&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::uint64_t seed_ = 0;
  int num_classes_ = 5;
  std::vector<CellKind> grid_;
  std::vector<ObjectInstance> objects_;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Scene generate_scene(const SceneSpec& spec);

// Number of 4-connected components of the Free region.
int count_free_components(const Scene& scene);

struct SceneSplit {
  std::vector<std::uint64_t> unlabeled;  // policy training, no labels
  std::vector<std::uint64_t> train;      // labeled trajectory collection
  std::vector<std::uint64_t> test;       // held-out evaluation
  friend bool operator==(const SceneSplit&, const SceneSplit&) = default;
};

SceneSplit make_split(std::uint64_t base_seed, int n_unlabeled, int n_train, int n_test);

bool is_disjoint(const SceneSplit& split);

nlohmann::json to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

}  // namespace semcur
