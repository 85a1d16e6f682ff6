#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "manip/blocksworld.hpp"

using namespace manip;
using namespace manip::blocksworld;

TEST_CASE("generate_scene: fixed seed, n=3, pairwise overlap below threshold") {
  SceneConfig cfg;
  Scene s = generate_scene(11, 3, cfg);
  REQUIRE(s.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) {
      CHECK(iou(s.objects[i].loc, s.objects[j].loc) < 0.05);
    }
  }
}

TEST_CASE("generate_scene: n=1 stays inside the workspace") {
  SceneConfig cfg;
  Scene s = generate_scene(5, 1, cfg);
  REQUIRE(s.size() == 1);
  const Location& l = s.objects[0].loc;
  CHECK(l.x1 >= cfg.workspace_min);
  CHECK(l.y1 >= cfg.workspace_min);
  CHECK(l.x2 <= cfg.workspace_max);
  CHECK(l.y2 <= cfg.workspace_max);
  CHECK(location_valid(l));
}

TEST_CASE("generate_scene: 10 objects succeed on 200 seeds") {
  SceneConfig cfg;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Scene s = generate_scene(1000 + seed, 10, cfg);  // throws on failure
    CHECK(s.size() == 10);
  }
}

TEST_CASE("generate_scene: overlap post-condition over 1000 seeds") {
  SceneConfig cfg;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Scene s = generate_scene(seed, 3 + seed % 5, cfg);
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        CHECK(iou(s.objects[i].loc, s.objects[j].loc) < cfg.overlap_threshold);
      }
    }
  }
}

TEST_CASE("featurize: deterministic at zero noise, color is the only differing block") {
  ObjectRecord a;
  a.color = Color::Red;
  a.shape = Shape::Cube;
  a.loc = {0.2, 0.2, 0.3, 0.3, 0.5};
  ObjectRecord b = a;
  b.color = Color::Blue;

  auto fa1 = featurize(a, 0.0, 1);
  auto fa2 = featurize(a, 0.0, 999);  // seed irrelevant at zero noise
  CHECK(fa1 == fa2);

  auto fb = featurize(b, 0.0, 1);
  for (std::size_t i = 0; i < kFeatureDim; ++i) {
    if (i < kNumColors) continue;
    CHECK(fa1[i] == fb[i]);
  }
  CHECK(fa1[object_concept_index(Color::Red)] == 1.0);
  CHECK(fb[object_concept_index(Color::Blue)] == 1.0);
  CHECK(fa1[object_concept_index(Color::Blue)] == 0.0);
}

TEST_CASE("featurize: noisy draws of the same object stay similar on average") {
  ObjectRecord o;
  o.color = Color::Green;
  o.shape = Shape::Dice;
  o.loc = {0.4, 0.5, 0.5, 0.62, 0.3};
  double sum = 0;
  for (int t = 0; t < 1000; ++t) {
    auto f1 = featurize(o, 0.1, 2 * t);
    auto f2 = featurize(o, 0.1, 2 * t + 1);
    double dot = 0, n1 = 0, n2 = 0;
    for (std::size_t i = 0; i < kFeatureDim; ++i) {
      dot += f1[i] * f2[i];
      n1 += f1[i] * f1[i];
      n2 += f2[i] * f2[i];
    }
    sum += dot / std::sqrt(n1 * n2);
  }
  CHECK(sum / 1000.0 > 0.95);
}

TEST_CASE("iou: base cases and the 1/7 worked example") {
  Location a{0.1, 0.1, 0.3, 0.3, 0.5};
  Location b{0.5, 0.5, 0.7, 0.7, 0.5};
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, b) == doctest::Approx(0.0));
  // inclusion-exclusion: inter = 1, union = 4 + 4 - 1 = 7
  Location p{0, 0, 2, 2, 0};
  Location q{1, 1, 3, 3, 0};
  CHECK(iou(p, q) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("iou: degenerate box is an error") {
  Location bad{0.5, 0.1, 0.5, 0.3, 0.2};
  Location ok{0.1, 0.1, 0.3, 0.3, 0.5};
  CHECK_THROWS_AS(iou(bad, ok), Error);
}

TEST_CASE("iou: symmetry and range over random pairs") {
  Rng rng(31);
  for (int t = 0; t < 500; ++t) {
    auto rand_box = [&]() {
      double x1 = rng.uniform(0, 0.8), y1 = rng.uniform(0, 0.8);
      return Location{x1, y1, x1 + rng.uniform(0.05, 0.2), y1 + rng.uniform(0.05, 0.2),
                      rng.uniform()};
    };
    Location a = rand_box(), b = rand_box();
    double ab = iou(a, b);
    CHECK(ab == iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(iou(a, a) == doctest::Approx(1.0));
  }
}

TEST_CASE("associate: identity and permutation recovery at zero noise") {
  SceneConfig cfg;
  Scene s = generate_scene(21, 5, cfg);
  auto m = associate(s, s);
  for (const auto& o : s.objects) CHECK(m.at(o.id) == o.id);

  for (std::size_t n = 2; n <= 6; ++n) {
    Scene base = generate_scene(40 + n, n, cfg);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      Scene shuffled = base;
      for (std::size_t i = 0; i < n; ++i) {
        shuffled.objects[i] = base.objects[perm[i]];
        shuffled.objects[i].id = static_cast<int>(i);
      }
      auto match = associate(base, shuffled);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(match.at(base.objects[perm[i]].id) == static_cast<int>(i));
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST_CASE("associate: count mismatch is an error") {
  SceneConfig cfg;
  Scene a = generate_scene(1, 3, cfg);
  Scene b = generate_scene(2, 4, cfg);
  CHECK_THROWS_AS(associate(a, b), Error);
}

TEST_CASE("associate: 99% correct under noise 0.05") {
  SceneConfig cfg;
  int correct = 0, total = 0;
  for (int trial = 0; trial < 500; ++trial) {
    Rng rng(9000 + trial);
    Scene s = generate_scene(5000 + trial, 3 + trial % 3, cfg);
    std::vector<std::size_t> perm(s.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Scene noisy = s;
    for (std::size_t i = 0; i < s.size(); ++i) {
      noisy.objects[i] = s.objects[perm[i]];
      noisy.objects[i].id = static_cast<int>(i);
      noisy.objects[i].feature = featurize(noisy.objects[i], 0.05, rng.next());
    }
    auto match = associate(s, noisy);
    for (std::size_t i = 0; i < s.size(); ++i) {
      ++total;
      if (match.at(s.objects[perm[i]].id) == static_cast<int>(i)) ++correct;
    }
  }
  CHECK(static_cast<double>(correct) / total >= 0.99);
}

TEST_CASE("apply_gold_action: worked MovRight example") {
  Location subj{0.10, 0.40, 0.20, 0.50, 0.5};
  Location ref{0.50, 0.40, 0.60, 0.50, 0.5};
  Location out = apply_gold_action(Act::MovRight, subj, ref);
  CHECK(out.x1 == doctest::Approx(0.62).epsilon(1e-12));
  CHECK(out.y1 == doctest::Approx(0.40).epsilon(1e-12));
  CHECK(out.x2 == doctest::Approx(0.72).epsilon(1e-12));
  CHECK(out.y2 == doctest::Approx(0.50).epsilon(1e-12));
  CHECK(out.d == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("apply_gold_action: MovTop rule, idempotence, size preservation") {
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    auto rand_box = [&]() {
      double x1 = rng.uniform(0.1, 0.7), y1 = rng.uniform(0.2, 0.7);
      return Location{x1, y1, x1 + rng.uniform(0.06, 0.12), y1 + rng.uniform(0.06, 0.12),
                      rng.uniform(0.2, 0.8)};
    };
    Location subj = rand_box(), ref = rand_box();
    Location top = apply_gold_action(Act::MovTop, subj, ref);
    CHECK(top.cx() == doctest::Approx(ref.cx()));
    CHECK(top.y2 == doctest::Approx(ref.y1));
    CHECK(top.d == doctest::Approx(ref.d));

    for (Act act : {Act::MovLeft, Act::MovRight, Act::MovFront, Act::MovBehind, Act::MovTop}) {
      Location once = apply_gold_action(act, subj, ref);
      Location twice = apply_gold_action(act, once, ref);
      for (std::size_t k = 0; k < 5; ++k) {
        CHECK(once.flat()[k] == doctest::Approx(twice.flat()[k]).epsilon(1e-12));
      }
      CHECK(once.width() == doctest::Approx(subj.width()).epsilon(1e-12));
      CHECK(once.height() == doctest::Approx(subj.height()).epsilon(1e-12));
      CHECK(location_valid(once));
    }
  }
}

TEST_CASE("gold relations hold after the matching gold action") {
  Location subj{0.1, 0.1, 0.2, 0.2, 0.4};
  Location ref{0.45, 0.45, 0.55, 0.55, 0.5};
  CHECK(gold_relation(Rel::Right, apply_gold_action(Act::MovRight, subj, ref), ref));
  CHECK(gold_relation(Rel::Left, apply_gold_action(Act::MovLeft, subj, ref), ref));
  CHECK(gold_relation(Rel::Behind, apply_gold_action(Act::MovBehind, subj, ref), ref));
  CHECK(gold_relation(Rel::Front, apply_gold_action(Act::MovFront, subj, ref), ref));
}

TEST_CASE("with_world refreshes geometry features only") {
  SceneConfig cfg;
  Scene s = generate_scene(3, 4, cfg);
  WorldState w = world_of(s);
  Location moved{0.7, 0.7, 0.8, 0.8, 0.25};
  w[s.objects[1].id] = moved;
  Scene s2 = with_world(s, w);
  CHECK(s2.objects[1].loc == moved);
  for (std::size_t i = 0; i < kGeometryOffset; ++i) {
    CHECK(s2.objects[1].feature[i] == s.objects[1].feature[i]);
  }
  auto geo = geometry_features(moved);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(s2.objects[1].feature[kGeometryOffset + i] == geo[i]);
  }
}

TEST_CASE("render: deterministic bytes, background-only empty scene, one red rectangle") {
  auto read_file = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };

  Scene empty;
  render(empty, "bw_render_empty.ppm", 64, 64);
  std::string bytes = read_file("bw_render_empty.ppm");
  REQUIRE(bytes.substr(0, 2) == "P6");
  std::size_t header_end = bytes.find("255\n") + 4;
  for (std::size_t i = header_end; i + 2 < bytes.size(); i += 3) {
    CHECK(static_cast<unsigned char>(bytes[i]) == 200);
  }

  Scene one;
  ObjectRecord o;
  o.id = 0;
  o.color = Color::Red;
  o.shape = Shape::Cube;
  o.loc = {0.25, 0.25, 0.75, 0.75, 0.5};
  o.feature = featurize(o, 0.0, 0);
  one.objects.push_back(o);
  render(one, "bw_render_red1.ppm", 64, 64);
  render(one, "bw_render_red2.ppm", 64, 64);
  std::string r1 = read_file("bw_render_red1.ppm");
  CHECK(r1 == read_file("bw_render_red2.ppm"));
  // red body pixels present
  CHECK(r1.find(std::string("\xDC\x28\x28", 3)) != std::string::npos);

  std::remove("bw_render_empty.ppm");
  std::remove("bw_render_red1.ppm");
  std::remove("bw_render_red2.ppm");
}

TEST_CASE("scene json round-trip") {
  SceneConfig cfg;
  cfg.noise_sigma = 0.02;
  Scene s = generate_scene(17, 5, cfg);
  Scene back = scene_from_json(scene_to_json(s));
  REQUIRE(back.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(back.objects[i].id == s.objects[i].id);
    CHECK(back.objects[i].color == s.objects[i].color);
    CHECK(back.objects[i].shape == s.objects[i].shape);
    CHECK(back.objects[i].loc == s.objects[i].loc);
    CHECK(back.objects[i].feature == s.objects[i].feature);
  }
  CHECK_THROWS_AS(scene_from_json("{not json"), Error);
}
