#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <map>

#include "manip/instgen.hpp"

using namespace manip;
using namespace manip::instgen;

TEST_CASE("lex tags keywords and maps action surface forms") {
  auto toks = lex("put the red cube on the blue dice");
  std::vector<std::pair<std::string, KeywordClass>> kws;
  for (const auto& t : toks) {
    if (t.kind == TokenKind::Keyword) kws.push_back({t.surface, t.kclass});
  }
  REQUIRE(kws.size() == 5);
  CHECK(kws[0] == std::pair<std::string, KeywordClass>{"red", KeywordClass::Color});
  CHECK(kws[1] == std::pair<std::string, KeywordClass>{"cube", KeywordClass::Shape});
  CHECK(kws[2] == std::pair<std::string, KeywordClass>{"on", KeywordClass::Act});
  CHECK(kws[3] == std::pair<std::string, KeywordClass>{"blue", KeywordClass::Color});
  CHECK(kws[4] == std::pair<std::string, KeywordClass>{"dice", KeywordClass::Shape});
  for (const auto& t : toks) {
    if (t.surface == "on") CHECK(t.act == Act::MovTop);
  }
}

TEST_CASE("lex: empty input, multiword phrases, losslessness") {
  CHECK(lex("").empty());

  auto toks = lex("place the cube to the right of the lego, then move it");
  bool found_act = false, found_comma = false, found_then = false;
  for (const auto& t : toks) {
    if (t.surface == "to the right of") {
      CHECK(t.kind == TokenKind::Keyword);
      CHECK(t.act == Act::MovRight);
      found_act = true;
    }
    if (t.surface == ",") {
      CHECK(t.kind == TokenKind::Structural);
      found_comma = true;
    }
    if (t.surface == "then") {
      CHECK(t.kind == TokenKind::Structural);
      found_then = true;
    }
  }
  CHECK(found_act);
  CHECK(found_comma);
  CHECK(found_then);

  // concatenation of surfaces reproduces the input modulo whitespace
  std::string orig = "place the cube to the right of the lego, then move it";
  std::string joined;
  for (const auto& t : toks) joined += t.surface;
  std::string squashed;
  for (char c : orig) {
    if (!std::isspace(static_cast<unsigned char>(c))) squashed.push_back(c);
  }
  std::string joined_squashed;
  for (char c : joined) {
    if (!std::isspace(static_cast<unsigned char>(c))) joined_squashed.push_back(c);
  }
  CHECK(joined_squashed == squashed);
}

TEST_CASE("lex distinguishes relation 'behind' from action 'to the back of'") {
  auto toks = lex("put the cube which is behind the dice to the back of the lego");
  int rels = 0, acts = 0;
  for (const auto& t : toks) {
    if (t.kind != TokenKind::Keyword) continue;
    if (t.kclass == KeywordClass::Rel) {
      ++rels;
      CHECK(t.rel == Rel::Behind);
    }
    if (t.kclass == KeywordClass::Act) {
      ++acts;
      CHECK(t.act == Act::MovBehind);
    }
  }
  CHECK(rels == 1);
  CHECK(acts == 1);
}

TEST_CASE("oracle_parse: simple instruction gives chained filters") {
  auto prog = oracle_parse("put the red cube on the blue dice");
  REQUIRE(prog.size() == 1);
  std::string s = mpdsl::to_sexpr(prog);
  CHECK(s ==
        "(move mov_top (unique (filter (filter (scene) red) cube)) "
        "(unique (filter (filter (scene) blue) dice)))");
}

TEST_CASE("oracle_parse: relational subject from the opening example") {
  auto prog =
      oracle_parse("put the block which is behind the green dice to the right of the red cube");
  REQUIRE(prog.size() == 1);
  std::string s = mpdsl::to_sexpr(prog);
  CHECK(s ==
        "(move mov_right (unique (relate (unique (filter (filter (scene) green) dice)) behind)) "
        "(unique (filter (filter (scene) red) cube)))");
}

TEST_CASE("oracle_parse: two-step instruction composes the single-step parses") {
  std::string a = "put the red cube on the blue dice";
  std::string b = "place the yellow thing to the left of the lego";
  auto ab = oracle_parse(a + " then " + b);
  REQUIRE(ab.size() == 2);
  CHECK(mpdsl::equal(ab.steps[0], oracle_parse(a).steps[0]));
  CHECK(mpdsl::equal(ab.steps[1], oracle_parse(b).steps[0]));

  auto ab2 = oracle_parse(a + ", then " + b);
  CHECK(mpdsl::equal(ab, ab2));
  auto ab3 = oracle_parse(a + " and then " + b);
  CHECK(mpdsl::equal(ab, ab3));
}

TEST_CASE("oracle_parse: non-template input errors with a position") {
  try {
    oracle_parse("do something nice");
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
  CHECK_THROWS_AS(oracle_parse(""), Error);
  CHECK_THROWS_AS(oracle_parse("put the on the red cube"), Error);
}

TEST_CASE("gold semantics: sets, unique, relate") {
  blocksworld::SceneConfig scfg;
  blocksworld::Scene s;
  s.seed = 0;
  auto add = [&](int id, Color c, Shape sh, double cx, double d) {
    blocksworld::ObjectRecord o;
    o.id = id;
    o.color = c;
    o.shape = sh;
    o.loc = {cx - 0.04, 0.45, cx + 0.04, 0.53, d};
    o.feature = blocksworld::featurize(o, 0.0, 0);
    s.objects.push_back(o);
  };
  add(0, Color::Red, Shape::Cube, 0.2, 0.5);
  add(1, Color::Green, Shape::Dice, 0.5, 0.5);
  add(2, Color::Blue, Shape::Cube, 0.8, 0.7);

  auto red = mpdsl::filter(mpdsl::scene_all(), Color::Red);
  CHECK(gold_set(red, s) == std::vector<int>{0});
  auto cubes = mpdsl::filter(mpdsl::scene_all(), Shape::Cube);
  CHECK(gold_set(cubes, s) == std::vector<int>{0, 2});

  bool uniq = false;
  CHECK(gold_object(mpdsl::unique(red), s, &uniq) == 0);
  CHECK(uniq);
  gold_object(mpdsl::unique(cubes), s, &uniq);
  CHECK_FALSE(uniq);

  // objects left of the green dice
  auto left_of_green = mpdsl::relate(mpdsl::unique(mpdsl::filter(mpdsl::scene_all(), Color::Green)),
                                     Rel::Left);
  CHECK(gold_set(left_of_green, s) == std::vector<int>{0});
  auto behind_green = mpdsl::relate(
      mpdsl::unique(mpdsl::filter(mpdsl::scene_all(), Color::Green)), Rel::Behind);
  CHECK(gold_set(behind_green, s) == std::vector<int>{2});
}

TEST_CASE("generate_dataset: single record reproduces the final scene exactly") {
  DatasetConfig cfg;
  cfg.steps_min = cfg.steps_max = 1;
  cfg.complex_fraction = 0.0;
  auto records = generate_dataset(123, 1, cfg);
  REQUIRE(records.size() == 1);
  verify_record(records[0], cfg);

  // explicit re-execution, step by step
  blocksworld::Scene cur = records[0].scene_initial;
  for (const auto& step : records[0].gold_program.steps) {
    cur = gold_execute_step(step, cur, cfg.gold_action);
  }
  for (std::size_t i = 0; i < cur.objects.size(); ++i) {
    CHECK(cur.objects[i].loc == records[0].scene_final.objects[i].loc);
    CHECK(cur.objects[i].feature == records[0].scene_final.objects[i].feature);
  }
}

TEST_CASE("generate_dataset: every record verifies; all instructions lex an action per step") {
  DatasetConfig cfg;
  auto records = generate_dataset(7, 120, cfg);
  REQUIRE(records.size() == 120);
  for (const auto& r : records) {
    verify_record(r, cfg);
    auto toks = lex(r.instruction);
    int acts = 0;
    for (const auto& t : toks) {
      if (t.kind == TokenKind::Keyword && t.kclass == KeywordClass::Act) ++acts;
    }
    CHECK(acts == r.n_steps);
    // oracle parse is total and deterministic on generated instructions
    auto p1 = oracle_parse(r.instruction);
    auto p2 = oracle_parse(r.instruction);
    CHECK(mpdsl::equal(p1, p2));
    CHECK(mpdsl::equal(p1, r.gold_program));
    // connective count matches step count
    CHECK(connective_positions(toks).size() == static_cast<std::size_t>(r.n_steps - 1));
  }
}

TEST_CASE("generate_dataset: bucket mix matches configured shares") {
  DatasetConfig cfg;
  cfg.complex_fraction = 0.5;
  cfg.multi_step_fraction = 0.4;
  auto records = generate_dataset(99, 400, cfg);
  std::map<std::pair<int, bool>, int> counts;
  for (const auto& r : records) counts[{r.n_steps, r.complex_reasoning}]++;
  CHECK(std::abs(counts[{1, false}] - 120) <= 8);  // 0.6*0.5*400
  CHECK(std::abs(counts[{1, true}] - 120) <= 8);
  CHECK(std::abs(counts[{2, false}] - 80) <= 8);
  CHECK(std::abs(counts[{2, true}] - 80) <= 8);
}

TEST_CASE("complex records carry a Relate and parse back") {
  DatasetConfig cfg;
  cfg.complex_fraction = 1.0;
  cfg.steps_min = cfg.steps_max = 1;
  auto records = generate_dataset(55, 40, cfg);
  for (const auto& r : records) {
    CHECK(r.complex_reasoning);
    std::string s = mpdsl::to_sexpr(r.gold_program);
    CHECK(s.find("relate") != std::string::npos);
    verify_record(r, cfg);
  }
}

TEST_CASE("multi-step generation supports longer horizons") {
  DatasetConfig cfg;
  cfg.steps_min = cfg.steps_max = 5;
  cfg.complex_fraction = 0.0;
  cfg.n_objects_min = 4;
  cfg.n_objects_max = 5;
  auto records = generate_dataset(1234, 5, cfg);
  for (const auto& r : records) {
    CHECK(r.n_steps == 5);
    CHECK(r.gold_program.size() == 5);
    verify_record(r, cfg);
  }
}

TEST_CASE("dataset file and manifest round-trip") {
  DatasetConfig cfg;
  auto records = generate_dataset(3, 30, cfg);
  write_dataset("ig_test_data.jsonl", records);
  auto back = read_dataset("ig_test_data.jsonl");
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].instruction == records[i].instruction);
    CHECK(mpdsl::equal(back[i].gold_program, records[i].gold_program));
    CHECK(back[i].gold_grounding == records[i].gold_grounding);
    CHECK(back[i].n_steps == records[i].n_steps);
    CHECK(back[i].complex_reasoning == records[i].complex_reasoning);
    verify_record(back[i], cfg);
  }

  Manifest m = make_manifest(3, records, cfg);
  CHECK(m.train_indices.size() + m.test_indices.size() == records.size());
  // roughly 80:20
  CHECK(m.test_indices.size() >= records.size() / 10);
  write_manifest("ig_test_manifest.json", m);
  Manifest mb = read_manifest("ig_test_manifest.json");
  CHECK(mb.seed == m.seed);
  CHECK(mb.train_indices == m.train_indices);
  CHECK(mb.test_indices == m.test_indices);
  std::remove("ig_test_data.jsonl");
  std::remove("ig_test_manifest.json");
}

TEST_CASE("generation is deterministic per seed") {
  DatasetConfig cfg;
  auto a = generate_dataset(42, 25, cfg);
  auto b = generate_dataset(42, 25, cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].instruction == b[i].instruction);
    CHECK(record_to_json(a[i]) == record_to_json(b[i]));
  }
}
