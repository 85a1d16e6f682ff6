#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "manip/concepts.hpp"
#include "manip/error.hpp"
#include "manip/rng.hpp"

namespace manip::blocksworld {

inline constexpr std::size_t kFeatureDim = 16;  // 7 color + 3 shape + 6 geometry
inline constexpr std::size_t kGeometryOffset = kNumColors + kNumShapes;

// Normalized image-space box plus depth; d = 0 is nearest the camera.
struct Location {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double d = 0;

  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }

  std::array<double, 5> flat() const { return {x1, y1, x2, y2, d}; }
  static Location from_flat(const std::array<double, 5>& v) {
    return {v[0], v[1], v[2], v[3], v[4]};
  }
  bool operator==(const Location&) const = default;
};

bool location_valid(const Location& loc);

struct ObjectRecord {
  int id = 0;
  Color color = Color::Red;
  Shape shape = Shape::Cube;
  Location loc;
  std::vector<double> feature;  // kFeatureDim entries
};

struct Scene {
  std::vector<ObjectRecord> objects;
  std::uint64_t seed = 0;

  std::size_t size() const { return objects.size(); }
  const ObjectRecord& by_id(int id) const;
};

// per-object locations keyed by object id
using WorldState = std::map<int, Location>;

WorldState world_of(const Scene& scene);
// returns a copy of the scene with locations replaced from the world and
// geometry feature entries recomputed (appearance entries untouched)
Scene with_world(const Scene& scene, const WorldState& world);

struct SceneConfig {
  double workspace_min = 0.02;
  double workspace_max = 0.98;
  double min_side = 0.06;
  double max_side = 0.12;
  double depth_min = 0.15;
  double depth_max = 0.85;
  double overlap_threshold = 0.05;
  double noise_sigma = 0.0;
  bool distinct_attribute_pairs = true;  // forbid duplicate (color, shape)
  int max_retries = 2000;
};

Scene generate_scene(std::uint64_t seed, std::size_t n, const SceneConfig& cfg);

// deterministic base vector (one-hots + geometry) plus gaussian noise
std::vector<double> featurize(const ObjectRecord& obj, double noise_sigma, std::uint64_t seed);
// geometry sub-block only, from a location
std::array<double, 6> geometry_features(const Location& loc);

double iou(const Location& a, const Location& b);

// greedy bipartite match by descending cosine similarity of features;
// ties broken by lower (id_initial, id_final)
std::map<int, int> associate(const Scene& initial, const Scene& final_scene);

struct GoldActionConfig {
  double margin = 0.02;       // gap left beside the reference
  double depth_shift = 0.1;   // behind/front depth offset
  double y_shift = 0.05;      // behind/front image-space vertical offset
};

// Rigid-translation target location for the subject relative to the
// reference. Depends only on the reference location and the subject size;
// the result is shifted back into [0,1]^5 if it falls outside.
Location apply_gold_action(Act act, const Location& subject, const Location& reference,
                           const GoldActionConfig& cfg = {});

// ground-truth relational predicates (margins avoid near-ties)
inline constexpr double kRelMargin = 0.05;
bool gold_relation(Rel rel, const Location& a, const Location& b);

// deterministic PPM raster; nearer objects (smaller d) painted last
void render(const Scene& scene, const std::string& path, int width = 256, int height = 256);

std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& line);

}  // namespace manip::blocksworld
