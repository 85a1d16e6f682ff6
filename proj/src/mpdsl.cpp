#include "manip/mpdsl.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace manip::mpdsl {

const char* to_string(DslType t) {
  switch (t) {
    case DslType::ObjSet: return "ObjSet";
    case DslType::Obj: return "Obj";
    case DslType::WorldStep: return "WorldStep";
  }
  return "?";
}

namespace {

NodePtr make(ProgramNode n) { return std::make_shared<const ProgramNode>(std::move(n)); }

}  // namespace

NodePtr scene_all() { return make({NodeKind::SceneAll}); }

NodePtr filter(NodePtr child, std::size_t concept_idx) {
  ProgramNode n{NodeKind::Filter};
  n.child = std::move(child);
  n.concept_idx = concept_idx;
  return make(std::move(n));
}

NodePtr filter(NodePtr child, Color c) { return filter(std::move(child), object_concept_index(c)); }
NodePtr filter(NodePtr child, Shape s) { return filter(std::move(child), object_concept_index(s)); }

NodePtr unique(NodePtr child) {
  ProgramNode n{NodeKind::Unique};
  n.child = std::move(child);
  return make(std::move(n));
}

NodePtr relate(NodePtr child, Rel rel) {
  ProgramNode n{NodeKind::Relate};
  n.child = std::move(child);
  n.rel = rel;
  return make(std::move(n));
}

NodePtr move(Act act, NodePtr subject, NodePtr reference) {
  ProgramNode n{NodeKind::Move};
  n.act = act;
  n.subject = std::move(subject);
  n.reference = std::move(reference);
  return make(std::move(n));
}

NodePtr idle() { return make({NodeKind::Idle}); }

bool equal(const NodePtr& a, const NodePtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case NodeKind::SceneAll:
    case NodeKind::Idle:
      return true;
    case NodeKind::Filter:
      return a->concept_idx == b->concept_idx && equal(a->child, b->child);
    case NodeKind::Unique:
      return equal(a->child, b->child);
    case NodeKind::Relate:
      return a->rel == b->rel && equal(a->child, b->child);
    case NodeKind::Move:
      return a->act == b->act && equal(a->subject, b->subject) &&
             equal(a->reference, b->reference);
  }
  return false;
}

std::size_t depth(const NodePtr& node) {
  if (!node) return 0;
  switch (node->kind) {
    case NodeKind::SceneAll:
    case NodeKind::Idle:
      return 1;
    case NodeKind::Filter:
    case NodeKind::Unique:
    case NodeKind::Relate:
      return 1 + depth(node->child);
    case NodeKind::Move:
      return 1 + std::max(depth(node->subject), depth(node->reference));
  }
  return 0;
}

namespace {

[[noreturn]] void type_fail(const NodePtr& at, const std::string& expected, DslType actual) {
  throw data_error("type error at " + to_sexpr(at) + ": expected " + expected + ", got " +
                   to_string(actual));
}

}  // namespace

DslType typecheck(const NodePtr& node) {
  if (!node) throw data_error("typecheck: null node");
  switch (node->kind) {
    case NodeKind::SceneAll:
      return DslType::ObjSet;
    case NodeKind::Filter: {
      DslType c = typecheck(node->child);
      if (c != DslType::ObjSet) type_fail(node->child, "ObjSet (Filter input)", c);
      if (node->concept_idx >= kNumObjectConcepts) {
        throw data_error("typecheck: Filter concept index out of lexicon");
      }
      return DslType::ObjSet;
    }
    case NodeKind::Unique: {
      DslType c = typecheck(node->child);
      if (c != DslType::ObjSet) type_fail(node->child, "ObjSet (Unique input)", c);
      return DslType::Obj;
    }
    case NodeKind::Relate: {
      DslType c = typecheck(node->child);
      if (c != DslType::Obj) type_fail(node->child, "Obj (Relate input)", c);
      return DslType::ObjSet;
    }
    case NodeKind::Move: {
      DslType s = typecheck(node->subject);
      if (s != DslType::Obj) type_fail(node->subject, "Obj (Move subject)", s);
      DslType r = typecheck(node->reference);
      if (r != DslType::Obj) type_fail(node->reference, "Obj (Move reference)", r);
      return DslType::WorldStep;
    }
    case NodeKind::Idle:
      return DslType::WorldStep;
  }
  throw logic_error("typecheck: unknown node kind");
}

bool well_typed(const NodePtr& node) {
  try {
    typecheck(node);
    return true;
  } catch (const Error&) {
    return false;
  }
}

bool equal(const ManipulationProgram& a, const ManipulationProgram& b) {
  if (a.steps.size() != b.steps.size()) return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    if (!equal(a.steps[i], b.steps[i])) return false;
  }
  return true;
}

void typecheck(const ManipulationProgram& program) {
  if (program.steps.empty()) throw data_error("program must have at least one step");
  for (const auto& step : program.steps) {
    DslType t = typecheck(step);
    if (t != DslType::WorldStep) type_fail(step, "WorldStep (program step)", t);
  }
}

ManipulationProgram compose(const std::vector<ManipulationProgram>& programs) {
  if (programs.empty()) throw data_error("compose: empty program list");
  ManipulationProgram out;
  for (const auto& p : programs) {
    typecheck(p);
    out.steps.insert(out.steps.end(), p.steps.begin(), p.steps.end());
  }
  return out;
}

ManipulationProgram single_step(NodePtr step) {
  ManipulationProgram p;
  p.steps.push_back(std::move(step));
  return p;
}

// ---------------------------------------------------------------------------
// s-expressions

std::string to_sexpr(const NodePtr& node) {
  if (!node) return "<null>";
  switch (node->kind) {
    case NodeKind::SceneAll:
      return "(scene)";
    case NodeKind::Filter:
      return "(filter " + to_sexpr(node->child) + " " +
             object_concept_token(node->concept_idx) + ")";
    case NodeKind::Unique:
      return "(unique " + to_sexpr(node->child) + ")";
    case NodeKind::Relate:
      return "(relate " + to_sexpr(node->child) + " " + to_token(node->rel) + ")";
    case NodeKind::Move:
      return "(move " + std::string(to_token(node->act)) + " " + to_sexpr(node->subject) + " " +
             to_sexpr(node->reference) + ")";
    case NodeKind::Idle:
      return "(idle)";
  }
  return "<?>";
}

std::string to_sexpr(const ManipulationProgram& program) {
  if (program.steps.size() == 1) return to_sexpr(program.steps[0]);
  std::string out = "(do";
  for (const auto& s : program.steps) out += " " + to_sexpr(s);
  return out + ")";
}

namespace {

struct SToken {
  enum Kind { LParen, RParen, Atom } kind;
  std::string text;
  std::size_t offset;
};

std::vector<SToken> stokenize(const std::string& text) {
  std::vector<SToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '(') {
      out.push_back({SToken::LParen, "(", i});
      ++i;
    } else if (c == ')') {
      out.push_back({SToken::RParen, ")", i});
      ++i;
    } else {
      std::size_t start = i;
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) &&
             text[i] != '(' && text[i] != ')') {
        ++i;
      }
      std::string atom = text.substr(start, i - start);
      std::transform(atom.begin(), atom.end(), atom.begin(),
                     [](unsigned char ch) { return std::tolower(ch); });
      out.push_back({SToken::Atom, atom, start});
    }
  }
  return out;
}

[[noreturn]] void parse_fail(std::size_t offset, const std::string& msg) {
  throw data_error("s-expression parse error at offset " + std::to_string(offset) + ": " + msg);
}

struct SParser {
  const std::vector<SToken>& toks;
  std::size_t at = 0;
  std::size_t text_len;

  const SToken& peek() {
    if (at >= toks.size()) parse_fail(text_len, "unexpected end of input");
    return toks[at];
  }
  SToken take() {
    const SToken& t = peek();
    ++at;
    return t;
  }

  NodePtr parse_node() {
    SToken open = take();
    if (open.kind != SToken::LParen) parse_fail(open.offset, "expected '('");
    SToken head = take();
    if (head.kind != SToken::Atom) parse_fail(head.offset, "expected operator name");

    // positional argument list: each entry is a subexpression or an atom
    struct Arg {
      NodePtr node;  // null when atom
      SToken atom;
    };
    std::vector<Arg> args;
    while (true) {
      const SToken& t = peek();
      if (t.kind == SToken::RParen) {
        take();
        break;
      }
      if (t.kind == SToken::LParen) {
        args.push_back({parse_node(), {}});
      } else {
        args.push_back({nullptr, take()});
      }
    }

    auto arity = [&](const char* pattern) {
      // pattern: 'n' = node, 'a' = atom
      bool ok = args.size() == std::string(pattern).size();
      if (ok) {
        for (std::size_t i = 0; i < args.size(); ++i) {
          if ((pattern[i] == 'n') != (args[i].node != nullptr)) ok = false;
        }
      }
      if (!ok) {
        parse_fail(head.offset, "arity error in '" + head.text + "'");
      }
    };

    if (head.text == "scene") {
      arity("");
      return scene_all();
    }
    if (head.text == "filter") {
      arity("na");
      const std::string& tok = args[1].atom.text;
      if (auto c = color_from_token(tok)) return filter(args[0].node, *c);
      if (auto s = shape_from_token(tok)) return filter(args[0].node, *s);
      parse_fail(args[1].atom.offset, "unknown object concept '" + tok + "'");
    }
    if (head.text == "unique") {
      arity("n");
      return unique(args[0].node);
    }
    if (head.text == "relate") {
      arity("na");
      auto r = rel_from_token(args[1].atom.text);
      if (!r) parse_fail(args[1].atom.offset, "unknown relation '" + args[1].atom.text + "'");
      return relate(args[0].node, *r);
    }
    if (head.text == "move") {
      arity("ann");
      auto a = act_from_token(args[0].atom.text);
      if (!a) parse_fail(args[0].atom.offset, "unknown action '" + args[0].atom.text + "'");
      return move(*a, args[1].node, args[2].node);
    }
    if (head.text == "idle") {
      arity("");
      return idle();
    }
    parse_fail(head.offset, "unknown operator '" + head.text + "'");
  }
};

}  // namespace

NodePtr node_from_sexpr(const std::string& text) {
  auto toks = stokenize(text);
  if (toks.empty()) throw data_error("s-expression parse error at offset 0: empty input");
  SParser p{toks, 0, text.size()};
  NodePtr node = p.parse_node();
  if (p.at != toks.size()) parse_fail(toks[p.at].offset, "trailing input");
  return node;
}

ManipulationProgram program_from_sexpr(const std::string& text) {
  auto toks = stokenize(text);
  if (toks.empty()) throw data_error("s-expression parse error at offset 0: empty input");
  // multi-step wrapper: (do <step> <step> ...)
  if (toks.size() >= 2 && toks[0].kind == SToken::LParen && toks[1].kind == SToken::Atom &&
      toks[1].text == "do") {
    SParser p{toks, 2, text.size()};
    ManipulationProgram out;
    while (p.at < toks.size() && toks[p.at].kind == SToken::LParen) {
      out.steps.push_back(p.parse_node());
    }
    if (p.at >= toks.size() || toks[p.at].kind != SToken::RParen) {
      parse_fail(p.at < toks.size() ? toks[p.at].offset : text.size(), "expected ')' closing do");
    }
    ++p.at;
    if (p.at != toks.size()) parse_fail(toks[p.at].offset, "trailing input");
    if (out.steps.empty()) parse_fail(toks[0].offset, "'do' needs at least one step");
    typecheck(out);
    return out;
  }
  ManipulationProgram out = single_step(node_from_sexpr(text));
  typecheck(out);
  return out;
}

// ---------------------------------------------------------------------------
// enumeration

EnumConfig full_lexicon_config(std::size_t max_filters, bool allow_relate) {
  EnumConfig cfg;
  for (std::size_t i = 0; i < kNumObjectConcepts; ++i) cfg.concepts.push_back(i);
  for (std::size_t i = 0; i < kNumRels; ++i) cfg.rels.push_back(static_cast<Rel>(i));
  for (std::size_t i = 0; i < kNumActs; ++i) cfg.acts.push_back(static_cast<Act>(i));
  cfg.max_filters = max_filters;
  cfg.allow_relate = allow_relate;
  return cfg;
}

namespace {

// chains of strictly increasing concept indices, inner-to-outer,
// sizes lo..hi, in lexicographic order
void chains_over(const std::vector<std::size_t>& concepts, std::size_t lo, std::size_t hi,
                 std::vector<std::vector<std::size_t>>& out) {
  std::vector<std::size_t> cur;
  std::function<void(std::size_t)> rec = [&](std::size_t start) {
    if (cur.size() >= lo) out.push_back(cur);
    if (cur.size() == hi) return;
    for (std::size_t i = start; i < concepts.size(); ++i) {
      cur.push_back(concepts[i]);
      rec(i + 1);
      cur.pop_back();
    }
  };
  rec(0);
}

NodePtr chain_to_node(NodePtr base, const std::vector<std::size_t>& chain) {
  for (std::size_t c : chain) base = filter(std::move(base), c);
  return base;
}

}  // namespace

std::vector<NodePtr> enumerate_argument_forms(const EnumConfig& cfg) {
  if (cfg.max_filters < 1) throw data_error("enumerate: max_filters must be >= 1");
  std::vector<NodePtr> forms;

  std::vector<std::vector<std::size_t>> chains;
  chains_over(cfg.concepts, 1, cfg.max_filters, chains);
  // shorter chains first, then lexicographic
  std::stable_sort(chains.begin(), chains.end(),
                   [](const auto& a, const auto& b) { return a.size() < b.size(); });

  for (const auto& ch : chains) forms.push_back(unique(chain_to_node(scene_all(), ch)));

  if (cfg.allow_relate) {
    std::vector<std::vector<std::size_t>> outer_by_budget;
    for (const auto& inner : chains) {
      std::size_t budget = cfg.max_filters - inner.size();
      for (Rel r : cfg.rels) {
        NodePtr base = relate(unique(chain_to_node(scene_all(), inner)), r);
        forms.push_back(unique(base));
        if (budget > 0) {
          std::vector<std::vector<std::size_t>> outers;
          chains_over(cfg.concepts, 1, budget, outers);
          std::stable_sort(outers.begin(), outers.end(),
                           [](const auto& a, const auto& b) { return a.size() < b.size(); });
          for (const auto& oc : outers) forms.push_back(unique(chain_to_node(base, oc)));
        }
      }
    }
  }
  return forms;
}

ProgramEnumerator::ProgramEnumerator(const EnumConfig& cfg)
    : acts_(cfg.acts), forms_(enumerate_argument_forms(cfg)) {}

bool ProgramEnumerator::done() const { return act_ >= acts_.size(); }

std::size_t ProgramEnumerator::total() const {
  return acts_.size() * forms_.size() * forms_.size();
}

NodePtr ProgramEnumerator::next() {
  if (done()) throw logic_error("ProgramEnumerator::next past end");
  NodePtr out = move(acts_[act_], forms_[subj_], forms_[ref_]);
  if (++ref_ == forms_.size()) {
    ref_ = 0;
    if (++subj_ == forms_.size()) {
      subj_ = 0;
      ++act_;
    }
  }
  return out;
}

}  // namespace manip::mpdsl
