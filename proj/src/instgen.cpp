#include "manip/instgen.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"
#include "manip/rng.hpp"

namespace manip::instgen {

using blocksworld::GoldActionConfig;
using blocksworld::Scene;
using blocksworld::SceneConfig;
using mpdsl::ManipulationProgram;
using mpdsl::NodeKind;
using mpdsl::NodePtr;

// ---------------------------------------------------------------------------
// lexicon surface forms

namespace {

struct Phrase {
  std::vector<std::string> words;
  KeywordClass kclass;
  std::size_t concept_idx = 0;
  Rel rel = Rel::Left;
  Act act = Act::MovTop;
};

// Action phrases never collide with relation phrases: relations appear in
// relative clauses ("which is behind the ..."), actions in placement position
// ("put ... to the back of ..."), and longest-match keeps "to the right of"
// distinct from "right of".
const std::vector<Phrase>& phrase_table() {
  static const std::vector<Phrase> table = [] {
    std::vector<Phrase> t;
    auto split = [](const std::string& s) {
      std::istringstream in(s);
      std::vector<std::string> w;
      std::string word;
      while (in >> word) w.push_back(word);
      return w;
    };
    for (std::size_t i = 0; i < kNumColors; ++i) {
      t.push_back({split(kColorNames[i]), KeywordClass::Color, i, Rel::Left, Act::MovTop});
    }
    for (std::size_t i = 0; i < kNumShapes; ++i) {
      t.push_back({split(kShapeNames[i]), KeywordClass::Shape, kNumColors + i, Rel::Left,
                   Act::MovTop});
    }
    auto rel = [&](const char* s, Rel r) {
      t.push_back({split(s), KeywordClass::Rel, 0, r, Act::MovTop});
    };
    rel("left of", Rel::Left);
    rel("right of", Rel::Right);
    rel("in front of", Rel::Front);
    rel("behind", Rel::Behind);
    auto act = [&](const char* s, Act a) {
      t.push_back({split(s), KeywordClass::Act, 0, Rel::Left, a});
    };
    act("on top of", Act::MovTop);
    act("onto", Act::MovTop);
    act("on", Act::MovTop);
    act("to the right of", Act::MovRight);
    act("to the left of", Act::MovLeft);
    act("to the front of", Act::MovFront);
    act("to the back of", Act::MovBehind);
    // longest phrases first so greedy matching is longest-match
    std::stable_sort(t.begin(), t.end(),
                     [](const Phrase& a, const Phrase& b) { return a.words.size() > b.words.size(); });
    return t;
  }();
  return table;
}

struct Word {
  std::string text;
  std::size_t offset;
};

std::vector<Word> split_words(const std::string& text) {
  std::vector<Word> words;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == ',') {
      words.push_back({",", i});
      ++i;
    } else {
      std::size_t start = i;
      std::string w;
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) &&
             text[i] != ',') {
        w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
        ++i;
      }
      words.push_back({w, start});
    }
  }
  return words;
}

}  // namespace

std::vector<Token> lex(const std::string& instruction) {
  std::vector<Word> words = split_words(instruction);
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < words.size()) {
    const Phrase* hit = nullptr;
    for (const Phrase& p : phrase_table()) {
      if (i + p.words.size() > words.size()) continue;
      bool match = true;
      for (std::size_t k = 0; k < p.words.size(); ++k) {
        if (words[i + k].text != p.words[k]) {
          match = false;
          break;
        }
      }
      if (match) {
        hit = &p;
        break;
      }
    }
    Token tok;
    tok.offset = words[i].offset;
    if (hit) {
      std::string surface;
      for (std::size_t k = 0; k < hit->words.size(); ++k) {
        if (k) surface += " ";
        surface += hit->words[k];
      }
      tok.surface = surface;
      tok.kind = TokenKind::Keyword;
      tok.kclass = hit->kclass;
      tok.concept_idx = hit->concept_idx;
      tok.rel = hit->rel;
      tok.act = hit->act;
      i += hit->words.size();
    } else {
      tok.surface = words[i].text;
      tok.kind = (words[i].text == "then" || words[i].text == ",") ? TokenKind::Structural
                                                                   : TokenKind::Noise;
      ++i;
    }
    out.push_back(std::move(tok));
  }
  return out;
}

std::vector<std::size_t> connective_positions(const std::vector<Token>& tokens) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].kind == TokenKind::Structural && tokens[i].surface == "then") out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// oracle parser

namespace {

[[noreturn]] void oracle_fail(std::size_t offset, const std::string& msg) {
  throw data_error("instruction parse error at offset " + std::to_string(offset) + ": " + msg);
}

// reference expression over tokens [lo, hi): filter chain in surface order,
// with an optional relative clause introducing one Relate
NodePtr parse_refexpr(const std::vector<Token>& toks, std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> attrs;
  for (std::size_t i = lo; i < hi; ++i) {
    const Token& t = toks[i];
    if (t.kind == TokenKind::Keyword && t.kclass == KeywordClass::Rel) {
      NodePtr inner = parse_refexpr(toks, i + 1, hi);
      NodePtr base = mpdsl::relate(mpdsl::unique(inner), t.rel);
      for (std::size_t c : attrs) base = mpdsl::filter(base, c);
      return base;
    }
    if (t.kind == TokenKind::Keyword &&
        (t.kclass == KeywordClass::Color || t.kclass == KeywordClass::Shape)) {
      attrs.push_back(t.concept_idx);
    } else if (t.kind == TokenKind::Keyword) {
      oracle_fail(t.offset, "unexpected action keyword inside a reference");
    }
  }
  if (attrs.empty()) {
    oracle_fail(lo < toks.size() ? toks[lo].offset : 0, "reference names no attribute");
  }
  NodePtr base = mpdsl::scene_all();
  for (std::size_t c : attrs) base = mpdsl::filter(base, c);
  return base;
}

NodePtr parse_step_tokens(const std::vector<Token>& toks, std::size_t lo, std::size_t hi) {
  std::size_t act_at = hi;
  for (std::size_t i = lo; i < hi; ++i) {
    if (toks[i].kind == TokenKind::Keyword && toks[i].kclass == KeywordClass::Act) {
      if (act_at != hi) oracle_fail(toks[i].offset, "more than one action in a step");
      act_at = i;
    }
  }
  if (act_at == hi) {
    oracle_fail(lo < toks.size() ? toks[lo].offset : 0, "step has no action keyword");
  }
  NodePtr subject = mpdsl::unique(parse_refexpr(toks, lo, act_at));
  NodePtr reference = mpdsl::unique(parse_refexpr(toks, act_at + 1, hi));
  return mpdsl::move(toks[act_at].act, subject, reference);
}

}  // namespace

ManipulationProgram oracle_parse(const std::vector<Token>& tokens) {
  if (tokens.empty()) throw data_error("instruction parse error at offset 0: empty instruction");
  ManipulationProgram out;
  std::size_t lo = 0;
  for (std::size_t i = 0; i <= tokens.size(); ++i) {
    bool boundary = i == tokens.size() || (tokens[i].kind == TokenKind::Structural &&
                                           tokens[i].surface == "then");
    if (!boundary) continue;
    if (i > lo) out.steps.push_back(parse_step_tokens(tokens, lo, i));
    lo = i + 1;
  }
  if (out.steps.empty()) {
    throw data_error("instruction parse error at offset 0: no steps found");
  }
  mpdsl::typecheck(out);
  return out;
}

ManipulationProgram oracle_parse(const std::string& instruction) {
  return oracle_parse(lex(instruction));
}

// ---------------------------------------------------------------------------
// gold semantics

std::vector<int> gold_set(const NodePtr& node, const Scene& scene) {
  switch (node->kind) {
    case NodeKind::SceneAll: {
      std::vector<int> all;
      for (const auto& o : scene.objects) all.push_back(o.id);
      std::sort(all.begin(), all.end());
      return all;
    }
    case NodeKind::Filter: {
      std::vector<int> base = gold_set(node->child, scene);
      std::vector<int> out;
      for (int id : base) {
        const auto& o = scene.by_id(id);
        std::size_t idx = node->concept_idx;
        bool has = object_concept_is_color(idx)
                       ? object_concept_index(o.color) == idx
                       : object_concept_index(o.shape) == idx;
        if (has) out.push_back(id);
      }
      return out;
    }
    case NodeKind::Relate: {
      int anchor = gold_object(node->child, scene);
      const auto& aloc = scene.by_id(anchor).loc;
      std::vector<int> out;
      for (const auto& o : scene.objects) {
        if (o.id == anchor) continue;
        if (blocksworld::gold_relation(node->rel, o.loc, aloc)) out.push_back(o.id);
      }
      std::sort(out.begin(), out.end());
      return out;
    }
    default:
      throw data_error("gold_set: node is not ObjSet-typed: " + mpdsl::to_sexpr(node));
  }
}

int gold_object(const NodePtr& node, const Scene& scene, bool* unique_out) {
  if (node->kind != NodeKind::Unique) {
    throw data_error("gold_object: node is not a Unique: " + mpdsl::to_sexpr(node));
  }
  std::vector<int> set = gold_set(node->child, scene);
  if (unique_out) *unique_out = set.size() == 1;
  if (set.empty()) {
    // mirror the executor's tie rule: argmax over an all-zero attention
    return scene.objects.empty() ? -1 : scene.objects.front().id;
  }
  return set.front();
}

Scene gold_execute_step(const NodePtr& step, const Scene& scene, const GoldActionConfig& cfg,
                        GroundedStep* grounding) {
  if (step->kind == NodeKind::Idle) {
    if (grounding) *grounding = GroundedStep{-1, -1, Act::MovTop};
    return scene;
  }
  if (step->kind != NodeKind::Move) {
    throw data_error("gold_execute_step: step must be Move or Idle");
  }
  int subject = gold_object(step->subject, scene);
  int reference = gold_object(step->reference, scene);
  if (grounding) *grounding = GroundedStep{subject, reference, step->act};
  blocksworld::WorldState world = blocksworld::world_of(scene);
  world[subject] =
      blocksworld::apply_gold_action(step->act, world.at(subject), world.at(reference), cfg);
  return blocksworld::with_world(scene, world);
}

// ---------------------------------------------------------------------------
// dataset generation

namespace {

struct RefExpr {
  std::vector<std::size_t> attrs;  // outer filter chain, surface order
  bool has_rel = false;
  Rel rel = Rel::Left;
  std::vector<std::size_t> inner_attrs;  // anchor reference (simple)

  NodePtr to_objset() const {
    NodePtr base = mpdsl::scene_all();
    if (has_rel) {
      NodePtr inner = mpdsl::scene_all();
      for (std::size_t c : inner_attrs) inner = mpdsl::filter(inner, c);
      base = mpdsl::relate(mpdsl::unique(inner), rel);
    }
    for (std::size_t c : attrs) base = mpdsl::filter(base, c);
    return base;
  }
};

// candidate attribute chains for one object, most specific last
std::vector<std::vector<std::size_t>> attr_options(const blocksworld::ObjectRecord& o) {
  std::size_t c = object_concept_index(o.color);
  std::size_t s = object_concept_index(o.shape);
  return {{c}, {s}, {c, s}};
}

bool denotes_exactly(const RefExpr& expr, int id, const Scene& scene) {
  auto set = gold_set(expr.to_objset(), scene);
  return set.size() == 1 && set[0] == id;
}

// noun realization: a bare noun when no shape word is present
std::string realize_np(const RefExpr& expr, Rng& rng) {
  static const char* nouns[] = {"block", "thing", "object"};
  auto attrs_text = [&](const std::vector<std::size_t>& attrs) {
    std::string out;
    bool has_shape = false;
    for (std::size_t a : attrs) {
      out += " ";
      out += object_concept_token(a);
      if (!object_concept_is_color(a)) has_shape = true;
    }
    if (!has_shape) {
      out += " ";
      out += nouns[rng.uniform_int(0, 2)];
    }
    return out;
  };
  std::string np = "the" + attrs_text(expr.attrs);
  if (expr.has_rel) {
    static const char* rel_surface[] = {"left of", "right of", "in front of", "behind"};
    np += " which is ";
    np += rel_surface[static_cast<std::size_t>(expr.rel)];
    np += " the" + attrs_text(expr.inner_attrs);
  }
  return np;
}

std::string realize_action(Act act, Rng& rng) {
  switch (act) {
    case Act::MovTop: {
      static const char* forms[] = {"on", "on top of", "onto"};
      return forms[rng.uniform_int(0, 2)];
    }
    case Act::MovRight: return "to the right of";
    case Act::MovLeft: return "to the left of";
    case Act::MovFront: return "to the front of";
    case Act::MovBehind: return "to the back of";
  }
  return "on";
}

struct StepBuild {
  std::string text;
  NodePtr node;
  GroundedStep grounding;
};

// one Move step over the current scene; referring expressions must denote
// uniquely under gold semantics
bool try_build_step(const Scene& scene, bool want_complex, double two_attr_fraction, Rng& rng,
                    StepBuild* out) {
  std::size_t n = scene.size();
  if (n < 2) return false;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);

  auto simple_for = [&](int id) -> std::vector<RefExpr> {
    std::vector<RefExpr> found;
    auto options = attr_options(scene.by_id(id));
    for (auto& attrs : options) {
      RefExpr e;
      e.attrs = attrs;
      if (denotes_exactly(e, id, scene)) found.push_back(e);
    }
    return found;
  };
  auto pick_simple = [&](std::vector<RefExpr> options) -> std::vector<RefExpr> {
    if (options.empty()) return options;
    rng.shuffle(options);
    bool want_two = rng.uniform() < two_attr_fraction;
    std::stable_sort(options.begin(), options.end(), [&](const RefExpr& a, const RefExpr& b) {
      return (a.attrs.size() == 2) == want_two && (b.attrs.size() == 2) != want_two;
    });
    return options;
  };

  for (std::size_t si = 0; si < n; ++si) {
    for (std::size_t ri = 0; ri < n; ++ri) {
      if (si == ri) continue;
      int subj_id = scene.objects[order[si]].id;
      int ref_id = scene.objects[order[ri]].id;

      Act act = static_cast<Act>(rng.uniform_int(0, static_cast<int>(kNumActs) - 1));
      bool complex_on_subject = rng.uniform() < 0.7;

      auto build_complex = [&](int target) -> std::vector<RefExpr> {
        std::vector<RefExpr> found;
        std::vector<std::size_t> anchors(n);
        for (std::size_t i = 0; i < n; ++i) anchors[i] = i;
        rng.shuffle(anchors);
        std::vector<int> rels = {0, 1, 2, 3};
        rng.shuffle(rels);
        for (std::size_t ai : anchors) {
          int anchor_id = scene.objects[ai].id;
          if (anchor_id == target) continue;
          auto anchor_refs = simple_for(anchor_id);
          if (anchor_refs.empty()) continue;
          for (int r : rels) {
            for (const auto& outer :
                 {std::vector<std::size_t>{}, attr_options(scene.by_id(target))[0],
                  attr_options(scene.by_id(target))[1]}) {
              RefExpr e;
              e.attrs = outer;
              e.has_rel = true;
              e.rel = static_cast<Rel>(r);
              e.inner_attrs = anchor_refs.front().attrs;
              if (denotes_exactly(e, target, scene)) found.push_back(e);
              if (!found.empty()) return found;
            }
          }
        }
        return found;
      };

      RefExpr subj_expr, ref_expr;
      bool ok = false;
      if (want_complex && complex_on_subject) {
        auto cs = build_complex(subj_id);
        auto rs = pick_simple(simple_for(ref_id));
        if (!cs.empty() && !rs.empty()) {
          subj_expr = cs.front();
          ref_expr = rs.front();
          ok = true;
        }
      } else if (want_complex) {
        auto ss = pick_simple(simple_for(subj_id));
        auto cr = build_complex(ref_id);
        if (!ss.empty() && !cr.empty()) {
          subj_expr = ss.front();
          ref_expr = cr.front();
          ok = true;
        }
      } else {
        auto ss = pick_simple(simple_for(subj_id));
        auto rs = pick_simple(simple_for(ref_id));
        if (!ss.empty() && !rs.empty()) {
          subj_expr = ss.front();
          ref_expr = rs.front();
          ok = true;
        }
      }
      if (!ok) continue;

      static const char* verbs[] = {"put", "place", "move"};
      std::string text = std::string(verbs[rng.uniform_int(0, 2)]) + " " +
                         realize_np(subj_expr, rng) + " " + realize_action(act, rng) + " " +
                         realize_np(ref_expr, rng);
      out->text = text;
      out->node = mpdsl::move(act, mpdsl::unique(subj_expr.to_objset()),
                              mpdsl::unique(ref_expr.to_objset()));
      out->grounding = GroundedStep{subj_id, ref_id, act};
      return true;
    }
  }
  return false;
}

struct Bucket {
  int steps;
  bool complex_reasoning;
};

// exact allocation of records to buckets, largest share first
std::vector<Bucket> bucket_plan(std::size_t count, const DatasetConfig& cfg) {
  std::vector<std::pair<Bucket, double>> shares;
  int span = cfg.steps_max - cfg.steps_min;
  for (int s = cfg.steps_min; s <= cfg.steps_max; ++s) {
    double step_share;
    if (span == 0) {
      step_share = 1.0;
    } else if (s == cfg.steps_min) {
      step_share = 1.0 - cfg.multi_step_fraction;
    } else {
      step_share = cfg.multi_step_fraction / span;
    }
    shares.push_back({{s, false}, step_share * (1.0 - cfg.complex_fraction)});
    shares.push_back({{s, true}, step_share * cfg.complex_fraction});
  }
  std::vector<std::size_t> counts(shares.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    counts[i] = static_cast<std::size_t>(shares[i].second * static_cast<double>(count));
    assigned += counts[i];
  }
  for (std::size_t i = 0; assigned < count; i = (i + 1) % counts.size()) {
    ++counts[i];
    ++assigned;
  }
  std::vector<Bucket> plan;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    for (std::size_t k = 0; k < counts[i]; ++k) plan.push_back(shares[i].first);
  }
  return plan;
}

}  // namespace

std::vector<DatasetRecord> generate_dataset(std::uint64_t seed, std::size_t count,
                                            const DatasetConfig& cfg) {
  if (count == 0) throw usage_error("generate_dataset: count must be positive");
  SceneConfig scene_cfg = cfg.scene;
  Rng master(seed);
  std::vector<Bucket> plan = bucket_plan(count, cfg);

  std::vector<DatasetRecord> out;
  out.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    Rng rng = master.fork(idx);
    const Bucket& bucket = plan[idx];

    bool built = false;
    for (int attempt = 0; attempt < cfg.record_retry_budget && !built; ++attempt) {
      std::size_t n = static_cast<std::size_t>(
          rng.uniform_int(cfg.n_objects_min, cfg.n_objects_max));
      Scene scene;
      try {
        scene = blocksworld::generate_scene(rng.next(), n, scene_cfg);
      } catch (const Error&) {
        continue;
      }

      Scene cur = scene;
      std::vector<std::string> step_texts;
      std::vector<NodePtr> step_nodes;
      std::vector<GroundedStep> grounding;
      bool any_complex = false;
      bool ok = true;
      for (int s = 0; s < bucket.steps; ++s) {
        bool want_complex =
            bucket.complex_reasoning && (s == 0 || rng.uniform() < 0.5);
        StepBuild sb;
        if (!try_build_step(cur, want_complex, cfg.two_attribute_fraction, rng, &sb)) {
          ok = false;
          break;
        }
        any_complex = any_complex || want_complex;
        step_texts.push_back(sb.text);
        step_nodes.push_back(sb.node);
        grounding.push_back(sb.grounding);
        cur = gold_execute_step(sb.node, cur, cfg.gold_action);
      }
      if (!ok) continue;
      if (bucket.complex_reasoning && !any_complex) continue;

      static const char* connectives[] = {" then ", " and then ", ", then "};
      std::string instruction = step_texts[0];
      for (std::size_t s = 1; s < step_texts.size(); ++s) {
        instruction += connectives[rng.uniform_int(0, 2)];
        instruction += step_texts[s];
      }

      DatasetRecord rec;
      rec.instruction = instruction;
      rec.scene_initial = scene;
      rec.scene_final = cur;
      rec.gold_program.steps = step_nodes;
      rec.gold_grounding = grounding;
      rec.n_steps = bucket.steps;
      rec.complex_reasoning = bucket.complex_reasoning;

      // the realized text must parse back to the constructed program
      ManipulationProgram parsed = oracle_parse(instruction);
      if (!mpdsl::equal(parsed, rec.gold_program)) {
        throw logic_error("generated instruction does not round-trip through the oracle parser: " +
                          instruction);
      }
      out.push_back(std::move(rec));
      built = true;
    }
    if (!built) {
      throw data_error("generate_dataset: retry budget exhausted for record " +
                       std::to_string(idx) + " (bucket steps=" + std::to_string(bucket.steps) +
                       ", complex=" + std::to_string(bucket.complex_reasoning) + ")");
    }
  }
  return out;
}

void verify_record(const DatasetRecord& record, const DatasetConfig& cfg) {
  Scene cur = record.scene_initial;
  if (record.gold_program.steps.size() != static_cast<std::size_t>(record.n_steps)) {
    throw data_error("record step count mismatch");
  }
  for (std::size_t s = 0; s < record.gold_program.steps.size(); ++s) {
    const NodePtr& step = record.gold_program.steps[s];
    // denotation uniqueness at the step's own world state
    bool uniq = false;
    gold_object(step->subject, cur, &uniq);
    if (!uniq) throw data_error("record subject denotation not unique at step " + std::to_string(s));
    gold_object(step->reference, cur, &uniq);
    if (!uniq) {
      throw data_error("record reference denotation not unique at step " + std::to_string(s));
    }
    GroundedStep g;
    cur = gold_execute_step(step, cur, cfg.gold_action, &g);
    if (!(g == record.gold_grounding[s])) {
      throw data_error("record grounding mismatch at step " + std::to_string(s));
    }
  }
  if (cur.objects.size() != record.scene_final.objects.size()) {
    throw data_error("record final scene size mismatch");
  }
  for (std::size_t i = 0; i < cur.objects.size(); ++i) {
    const auto& a = cur.objects[i];
    const auto& b = record.scene_final.objects[i];
    if (a.id != b.id || a.color != b.color || a.shape != b.shape || !(a.loc == b.loc) ||
        a.feature != b.feature) {
      throw data_error("record final scene mismatch at object " + std::to_string(i));
    }
  }
}

// ---------------------------------------------------------------------------
// serialization

std::string record_to_json(const DatasetRecord& r) {
  nlohmann::json grounding = nlohmann::json::array();
  for (const auto& g : r.gold_grounding) {
    grounding.push_back(
        {{"subject", g.subject_id}, {"reference", g.reference_id}, {"action", to_token(g.act)}});
  }
  nlohmann::json j = {
      {"instruction", r.instruction},
      {"scene_i", nlohmann::json::parse(blocksworld::scene_to_json(r.scene_initial))},
      {"scene_f", nlohmann::json::parse(blocksworld::scene_to_json(r.scene_final))},
      {"gold_program", mpdsl::to_sexpr(r.gold_program)},
      {"gold_grounding", grounding},
      {"n_steps", r.n_steps},
      {"complexity", r.complex_reasoning ? "complex" : "simple"},
  };
  return j.dump();
}

DatasetRecord record_from_json(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw data_error(std::string("dataset record parse failure: ") + e.what());
  }
  DatasetRecord r;
  r.instruction = j.at("instruction").get<std::string>();
  r.scene_initial = blocksworld::scene_from_json(j.at("scene_i").dump());
  r.scene_final = blocksworld::scene_from_json(j.at("scene_f").dump());
  r.gold_program = mpdsl::program_from_sexpr(j.at("gold_program").get<std::string>());
  for (const auto& jg : j.at("gold_grounding")) {
    GroundedStep g;
    g.subject_id = jg.at("subject").get<int>();
    g.reference_id = jg.at("reference").get<int>();
    auto act = act_from_token(jg.at("action").get<std::string>());
    if (!act) throw data_error("dataset record has unknown action token");
    g.act = *act;
    r.gold_grounding.push_back(g);
  }
  r.n_steps = j.at("n_steps").get<int>();
  r.complex_reasoning = j.at("complexity").get<std::string>() == "complex";
  return r;
}

namespace {

nlohmann::json cfg_to_json(const DatasetConfig& c) {
  return {{"n_objects_min", c.n_objects_min},
          {"n_objects_max", c.n_objects_max},
          {"steps_min", c.steps_min},
          {"steps_max", c.steps_max},
          {"complex_fraction", c.complex_fraction},
          {"multi_step_fraction", c.multi_step_fraction},
          {"two_attribute_fraction", c.two_attribute_fraction},
          {"noise_sigma", c.scene.noise_sigma},
          {"overlap_threshold", c.scene.overlap_threshold},
          {"record_retry_budget", c.record_retry_budget}};
}

DatasetConfig cfg_from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.n_objects_min = j.at("n_objects_min").get<int>();
  c.n_objects_max = j.at("n_objects_max").get<int>();
  c.steps_min = j.at("steps_min").get<int>();
  c.steps_max = j.at("steps_max").get<int>();
  c.complex_fraction = j.at("complex_fraction").get<double>();
  c.multi_step_fraction = j.at("multi_step_fraction").get<double>();
  c.two_attribute_fraction = j.at("two_attribute_fraction").get<double>();
  c.scene.noise_sigma = j.at("noise_sigma").get<double>();
  c.scene.overlap_threshold = j.at("overlap_threshold").get<double>();
  c.record_retry_budget = j.at("record_retry_budget").get<int>();
  return c;
}

}  // namespace

Manifest make_manifest(std::uint64_t seed, const std::vector<DatasetRecord>& records,
                       const DatasetConfig& cfg) {
  Manifest m;
  m.seed = seed;
  m.count = records.size();
  m.cfg = cfg;
  // stratified 80:20: within each (steps, complexity) bucket every fifth
  // record goes to test
  std::map<std::pair<int, bool>, std::size_t> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto key = std::make_pair(records[i].n_steps, records[i].complex_reasoning);
    std::size_t k = seen[key]++;
    if (k % 5 == 4) {
      m.test_indices.push_back(i);
    } else {
      m.train_indices.push_back(i);
    }
  }
  return m;
}

void write_dataset(const std::string& data_path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(data_path);
  if (!out) throw data_error("cannot open dataset file for writing: " + data_path);
  for (const auto& r : records) out << record_to_json(r) << "\n";
}

std::vector<DatasetRecord> read_dataset(const std::string& data_path) {
  std::ifstream in(data_path);
  if (!in) throw data_error("cannot open dataset file: " + data_path);
  std::vector<DatasetRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json(line));
  }
  return out;
}

void write_manifest(const std::string& path, const Manifest& m) {
  nlohmann::json j = {{"version", 1},
                      {"seed", m.seed},
                      {"count", m.count},
                      {"cfg", cfg_to_json(m.cfg)},
                      {"train_indices", m.train_indices},
                      {"test_indices", m.test_indices}};
  std::ofstream out(path);
  if (!out) throw data_error("cannot open manifest for writing: " + path);
  out << j.dump(2) << "\n";
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw data_error(std::string("malformed manifest: ") + e.what());
  }
  Manifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.count = j.at("count").get<std::size_t>();
  m.cfg = cfg_from_json(j.at("cfg"));
  m.train_indices = j.at("train_indices").get<std::vector<std::size_t>>();
  m.test_indices = j.at("test_indices").get<std::vector<std::size_t>>();
  return m;
}

}  // namespace manip::instgen
