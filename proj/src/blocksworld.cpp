#include "manip/blocksworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace manip::blocksworld {

bool location_valid(const Location& loc) {
  for (double v : loc.flat()) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return loc.x1 < loc.x2 && loc.y1 < loc.y2;
}

const ObjectRecord& Scene::by_id(int id) const {
  for (const auto& o : objects) {
    if (o.id == id) return o;
  }
  throw data_error("scene has no object with id " + std::to_string(id));
}

WorldState world_of(const Scene& scene) {
  WorldState w;
  for (const auto& o : scene.objects) w[o.id] = o.loc;
  return w;
}

Scene with_world(const Scene& scene, const WorldState& world) {
  if (world.size() != scene.objects.size()) {
    throw data_error("world state does not cover exactly the scene's ids");
  }
  Scene out = scene;
  for (auto& o : out.objects) {
    auto it = world.find(o.id);
    if (it == world.end()) {
      throw data_error("world state missing id " + std::to_string(o.id));
    }
    o.loc = it->second;
    auto geo = geometry_features(o.loc);
    std::copy(geo.begin(), geo.end(), o.feature.begin() + kGeometryOffset);
  }
  return out;
}

std::array<double, 6> geometry_features(const Location& loc) {
  return {loc.cx(), loc.cy(), loc.width(), loc.height(), loc.d,
          loc.width() / loc.height()};
}

std::vector<double> featurize(const ObjectRecord& obj, double noise_sigma, std::uint64_t seed) {
  if (noise_sigma < 0.0) throw data_error("featurize: negative noise sigma");
  std::vector<double> f(kFeatureDim, 0.0);
  f[object_concept_index(obj.color)] = 1.0;
  f[object_concept_index(obj.shape)] = 1.0;
  auto geo = geometry_features(obj.loc);
  std::copy(geo.begin(), geo.end(), f.begin() + kGeometryOffset);
  if (noise_sigma > 0.0) {
    Rng rng(seed);
    for (double& v : f) v += noise_sigma * rng.gauss();
  }
  return f;
}

double iou(const Location& a, const Location& b) {
  // only box ordering is required here, so measurement works on any scale
  if (!(a.x1 < a.x2 && a.y1 < a.y2 && b.x1 < b.x2 && b.y1 < b.y2)) {
    throw data_error("iou: degenerate box");
  }
  double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  double inter = iw * ih;
  double uni = a.width() * a.height() + b.width() * b.height() - inter;
  return inter / uni;
}

Scene generate_scene(std::uint64_t seed, std::size_t n, const SceneConfig& cfg) {
  if (n < 1) throw data_error("generate_scene: n must be >= 1");
  if (cfg.distinct_attribute_pairs && n > kNumColors * kNumShapes) {
    throw data_error("generate_scene: more objects than distinct attribute pairs");
  }
  Rng rng(seed);
  Scene scene;
  scene.seed = seed;

  std::vector<std::pair<Color, Shape>> used;
  int failures = 0;
  while (scene.objects.size() < n) {
    if (failures > cfg.max_retries) {
      throw data_error("generate_scene: placement failed after " +
                       std::to_string(cfg.max_retries) + " retries at density n=" +
                       std::to_string(n) + ", overlap threshold " +
                       std::to_string(cfg.overlap_threshold));
    }
    double w = rng.uniform(cfg.min_side, cfg.max_side);
    double h = rng.uniform(cfg.min_side, cfg.max_side);
    double x1 = rng.uniform(cfg.workspace_min, cfg.workspace_max - w);
    double y1 = rng.uniform(cfg.workspace_min, cfg.workspace_max - h);
    Location loc{x1, y1, x1 + w, y1 + h, rng.uniform(cfg.depth_min, cfg.depth_max)};

    bool ok = true;
    for (const auto& o : scene.objects) {
      if (iou(loc, o.loc) >= cfg.overlap_threshold) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      ++failures;
      continue;
    }

    Color color = static_cast<Color>(rng.uniform_int(0, static_cast<int>(kNumColors) - 1));
    Shape shape = static_cast<Shape>(rng.uniform_int(0, static_cast<int>(kNumShapes) - 1));
    if (cfg.distinct_attribute_pairs) {
      int attr_tries = 0;
      while (std::find(used.begin(), used.end(), std::make_pair(color, shape)) != used.end()) {
        color = static_cast<Color>(rng.uniform_int(0, static_cast<int>(kNumColors) - 1));
        shape = static_cast<Shape>(rng.uniform_int(0, static_cast<int>(kNumShapes) - 1));
        if (++attr_tries > 1000) throw data_error("generate_scene: attribute sampling stuck");
      }
      used.emplace_back(color, shape);
    }

    ObjectRecord obj;
    obj.id = static_cast<int>(scene.objects.size());
    obj.color = color;
    obj.shape = shape;
    obj.loc = loc;
    obj.feature = featurize(obj, cfg.noise_sigma, rng.next());
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

std::map<int, int> associate(const Scene& initial, const Scene& final_scene) {
  if (initial.size() != final_scene.size()) {
    throw data_error("associate: scenes have different object counts");
  }
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb) + 1e-12);
  };

  struct Cand {
    double sim;
    int id_i;
    int id_f;
  };
  std::vector<Cand> cands;
  for (const auto& oi : initial.objects) {
    for (const auto& of : final_scene.objects) {
      cands.push_back({cosine(oi.feature, of.feature), oi.id, of.id});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    if (a.id_i != b.id_i) return a.id_i < b.id_i;
    return a.id_f < b.id_f;
  });

  std::map<int, int> match;
  std::vector<int> taken;
  for (const auto& c : cands) {
    if (match.count(c.id_i)) continue;
    if (std::find(taken.begin(), taken.end(), c.id_f) != taken.end()) continue;
    match[c.id_i] = c.id_f;
    taken.push_back(c.id_f);
  }
  return match;
}

namespace {

// shift the box (size-preserving) so it lies inside the unit square
Location clamp_into_frame(Location loc) {
  double w = loc.width(), h = loc.height();
  if (loc.x1 < 0.0) { loc.x1 = 0.0; loc.x2 = w; }
  if (loc.x2 > 1.0) { loc.x2 = 1.0; loc.x1 = 1.0 - w; }
  if (loc.y1 < 0.0) { loc.y1 = 0.0; loc.y2 = h; }
  if (loc.y2 > 1.0) { loc.y2 = 1.0; loc.y1 = 1.0 - h; }
  loc.d = std::min(1.0, std::max(0.0, loc.d));
  return loc;
}

}  // namespace

Location apply_gold_action(Act act, const Location& subject, const Location& reference,
                           const GoldActionConfig& cfg) {
  double w = subject.width();
  double h = subject.height();
  double cx = reference.cx();
  double cy = reference.cy();
  Location out;
  out.d = reference.d;
  switch (act) {
    case Act::MovRight:
      out.x1 = reference.x2 + cfg.margin;
      out.x2 = out.x1 + w;
      out.y1 = cy - h / 2.0;
      out.y2 = cy + h / 2.0;
      break;
    case Act::MovLeft:
      out.x2 = reference.x1 - cfg.margin;
      out.x1 = out.x2 - w;
      out.y1 = cy - h / 2.0;
      out.y2 = cy + h / 2.0;
      break;
    case Act::MovBehind:
      out.x1 = cx - w / 2.0;
      out.x2 = cx + w / 2.0;
      out.y1 = cy - cfg.y_shift - h / 2.0;
      out.y2 = cy - cfg.y_shift + h / 2.0;
      out.d = reference.d + cfg.depth_shift;
      break;
    case Act::MovFront:
      out.x1 = cx - w / 2.0;
      out.x2 = cx + w / 2.0;
      out.y1 = cy + cfg.y_shift - h / 2.0;
      out.y2 = cy + cfg.y_shift + h / 2.0;
      out.d = reference.d - cfg.depth_shift;
      break;
    case Act::MovTop:
      out.x1 = cx - w / 2.0;
      out.x2 = cx + w / 2.0;
      out.y2 = reference.y1;
      out.y1 = out.y2 - h;
      break;
  }
  return clamp_into_frame(out);
}

bool gold_relation(Rel rel, const Location& a, const Location& b) {
  switch (rel) {
    case Rel::Left: return a.cx() < b.cx() - kRelMargin;
    case Rel::Right: return a.cx() > b.cx() + kRelMargin;
    case Rel::Behind: return a.d > b.d + kRelMargin;
    case Rel::Front: return a.d < b.d - kRelMargin;
  }
  return false;
}

// ---------------------------------------------------------------------------
// rendering

namespace {

struct Pixel {
  unsigned char r, g, b;
};

Pixel color_rgb(Color c) {
  switch (c) {
    case Color::Red: return {220, 40, 40};
    case Color::Blue: return {40, 70, 220};
    case Color::Cyan: return {40, 200, 210};
    case Color::Green: return {40, 180, 60};
    case Color::Magenta: return {200, 50, 190};
    case Color::Yellow: return {230, 210, 40};
    case Color::White: return {245, 245, 245};
  }
  return {0, 0, 0};
}

void fill_rect(std::vector<Pixel>& img, int w, int h, int x0, int y0, int x1, int y1, Pixel p) {
  x0 = std::max(0, x0);
  y0 = std::max(0, y0);
  x1 = std::min(w, x1);
  y1 = std::min(h, y1);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) img[static_cast<std::size_t>(y) * w + x] = p;
  }
}

}  // namespace

void render(const Scene& scene, const std::string& path, int width, int height) {
  std::vector<Pixel> img(static_cast<std::size_t>(width) * height, Pixel{200, 200, 205});

  std::vector<const ObjectRecord*> order;
  for (const auto& o : scene.objects) order.push_back(&o);
  // farther objects first, nearer (smaller d) painted last; stable on ties by id
  std::sort(order.begin(), order.end(), [](const ObjectRecord* a, const ObjectRecord* b) {
    if (a->loc.d != b->loc.d) return a->loc.d > b->loc.d;
    return a->id < b->id;
  });

  for (const ObjectRecord* o : order) {
    int x0 = static_cast<int>(std::lround(o->loc.x1 * width));
    int y0 = static_cast<int>(std::lround(o->loc.y1 * height));
    int x1 = static_cast<int>(std::lround(o->loc.x2 * width));
    int y1 = static_cast<int>(std::lround(o->loc.y2 * height));
    Pixel body = color_rgb(o->color);
    Pixel edge{30, 30, 30};
    fill_rect(img, width, height, x0, y0, x1, y1, edge);
    fill_rect(img, width, height, x0 + 1, y0 + 1, x1 - 1, y1 - 1, body);
    if (o->shape == Shape::Lego) {
      // stud dots
      int mx = (x0 + x1) / 2, my = (y0 + y1) / 2;
      Pixel stud{static_cast<unsigned char>(body.r / 2), static_cast<unsigned char>(body.g / 2),
                 static_cast<unsigned char>(body.b / 2)};
      for (int dy : {-1, 1}) {
        for (int dx : {-1, 1}) {
          int cx = mx + dx * std::max(1, (x1 - x0) / 4);
          int cy = my + dy * std::max(1, (y1 - y0) / 4);
          fill_rect(img, width, height, cx - 1, cy - 1, cx + 1, cy + 1, stud);
        }
      }
    } else if (o->shape == Shape::Dice) {
      // pips on the diagonal
      Pixel pip{20, 20, 20};
      for (double t : {0.25, 0.5, 0.75}) {
        int cx = x0 + static_cast<int>(t * (x1 - x0));
        int cy = y0 + static_cast<int>(t * (y1 - y0));
        fill_rect(img, width, height, cx - 1, cy - 1, cx + 1, cy + 1, pip);
      }
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("render: cannot open output path " + path);
  out << "P6\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data()),
            static_cast<std::streamsize>(img.size() * sizeof(Pixel)));
  if (!out) throw data_error("render: write failed for " + path);
}

// ---------------------------------------------------------------------------
// serialization

std::string scene_to_json(const Scene& scene) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : scene.objects) {
    objs.push_back({{"id", o.id},
                    {"color", to_token(o.color)},
                    {"shape", to_token(o.shape)},
                    {"b", {o.loc.x1, o.loc.y1, o.loc.x2, o.loc.y2}},
                    {"d", o.loc.d},
                    {"feature", o.feature}});
  }
  nlohmann::json j = {{"seed", scene.seed}, {"objects", objs}};
  return j.dump();
}

Scene scene_from_json(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw data_error(std::string("scene record parse failure: ") + e.what());
  }
  Scene scene;
  scene.seed = j.value("seed", 0ull);
  for (const auto& jo : j.at("objects")) {
    ObjectRecord o;
    o.id = jo.at("id").get<int>();
    auto color = color_from_token(jo.at("color").get<std::string>());
    auto shape = shape_from_token(jo.at("shape").get<std::string>());
    if (!color || !shape) throw data_error("scene record has unknown color/shape token");
    o.color = *color;
    o.shape = *shape;
    auto b = jo.at("b").get<std::vector<double>>();
    if (b.size() != 4) throw data_error("scene record box must have 4 coordinates");
    o.loc = {b[0], b[1], b[2], b[3], jo.at("d").get<double>()};
    if (!location_valid(o.loc)) throw data_error("scene record location out of range");
    o.feature = jo.at("feature").get<std::vector<double>>();
    if (o.feature.size() != kFeatureDim) throw data_error("scene record feature dim mismatch");
    double norm2 = 0;
    for (double v : o.feature) norm2 += v * v;
    double norm = std::sqrt(norm2);
    if (!(norm > 0.0 && norm <= 10.0)) throw data_error("scene record feature norm out of (0,10]");
    scene.objects.push_back(std::move(o));
  }
  return scene;
}

}  // namespace manip::blocksworld
