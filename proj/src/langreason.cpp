#include "manip/langreason.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace manip::langreason {

using instgen::Token;
using mpdsl::NodePtr;

// ---------------------------------------------------------------------------
// vocabulary

std::size_t Vocab::id_of(const std::string& surface) const {
  auto it = index.find(surface);
  return it == index.end() ? 0 : it->second;
}

Vocab Vocab::build(const std::vector<std::vector<Token>>& corpus) {
  std::set<std::string> surfaces;
  for (const auto& seq : corpus) {
    for (const auto& t : seq) surfaces.insert(t.surface);
  }
  Vocab v;
  v.tokens.push_back("<unk>");
  for (const auto& s : surfaces) v.tokens.push_back(s);
  for (std::size_t i = 0; i < v.tokens.size(); ++i) v.index[v.tokens[i]] = i;
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open vocabulary file for writing: " + path);
  for (std::size_t i = 0; i < tokens.size(); ++i) out << tokens[i] << "\t" << i << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open vocabulary file: " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw data_error("malformed vocabulary line: " + line);
    v.tokens.push_back(line.substr(0, tab));
  }
  for (std::size_t i = 0; i < v.tokens.size(); ++i) v.index[v.tokens[i]] = i;
  if (v.tokens.empty() || v.tokens[0] != "<unk>") {
    throw data_error("vocabulary file must start with <unk>");
  }
  return v;
}


mpdsl::EnumConfig instruction_space(const std::vector<Token>& segment,
                                    const mpdsl::EnumConfig& cap) {
  mpdsl::EnumConfig space = cap;
  std::vector<std::size_t> concepts;
  std::vector<Rel> rels;
  std::vector<Act> acts;
  for (const Token& t : segment) {
    if (t.kind != instgen::TokenKind::Keyword) continue;
    switch (t.kclass) {
      case instgen::KeywordClass::Color:
      case instgen::KeywordClass::Shape:
        if (std::find(concepts.begin(), concepts.end(), t.concept_idx) == concepts.end()) {
          concepts.push_back(t.concept_idx);
        }
        break;
      case instgen::KeywordClass::Rel:
        if (std::find(rels.begin(), rels.end(), t.rel) == rels.end()) rels.push_back(t.rel);
        break;
      case instgen::KeywordClass::Act:
        if (std::find(acts.begin(), acts.end(), t.act) == acts.end()) acts.push_back(t.act);
        break;
      default:
        break;
    }
  }
  std::sort(concepts.begin(), concepts.end());
  if (!concepts.empty()) {
    // keep only capped concepts, in canonical order
    std::vector<std::size_t> kept;
    for (std::size_t c : concepts) {
      if (std::find(cap.concepts.begin(), cap.concepts.end(), c) != cap.concepts.end()) {
        kept.push_back(c);
      }
    }
    if (!kept.empty()) space.concepts = kept;
  }
  if (cap.allow_relate) {
    std::vector<Rel> kept;
    for (Rel r : rels) {
      if (std::find(cap.rels.begin(), cap.rels.end(), r) != cap.rels.end()) kept.push_back(r);
    }
    space.rels = kept;
    space.allow_relate = !kept.empty();
  }
  if (!acts.empty()) {
    std::vector<Act> kept;
    for (Act a : acts) {
      if (std::find(cap.acts.begin(), cap.acts.end(), a) != cap.acts.end()) kept.push_back(a);
    }
    if (!kept.empty()) space.acts = kept;
  }
  return space;
}

// ---------------------------------------------------------------------------
// parser model

namespace {

// dsl embedding rows: concepts, rels, start marker, then one row per action
std::size_t dsl_rows() { return kNumObjectConcepts + kNumRels + 1 + kNumActs; }
std::size_t dsl_row_concept(std::size_t c) { return c; }
std::size_t dsl_row_rel(Rel r) { return kNumObjectConcepts + static_cast<std::size_t>(r); }
std::size_t dsl_row_start() { return kNumObjectConcepts + kNumRels; }
std::size_t dsl_row_act(Act a) {
  return kNumObjectConcepts + kNumRels + 1 + static_cast<std::size_t>(a);
}

// decoder output indices: 0..9 concepts, 10..13 rels, 14 end
std::size_t out_concept(std::size_t c) { return c; }
std::size_t out_rel(Rel r) { return kNumObjectConcepts + static_cast<std::size_t>(r); }

}  // namespace

void ParserModel::register_params(tc::ParamRegistry& reg) {
  reg.add(word_emb);
  reg.add(encoder);
  reg.add(act_w);
  reg.add(act_b);
  reg.add(dsl_emb);
  reg.add(decoder);
  for (tc::Parameter* p : {&init_subj_w, &init_subj_u, &init_subj_b, &init_ref_w, &init_ref_u,
                           &init_ref_b, &out_w, &out_b}) {
    reg.add(*p);
  }
}

ParserModel make_parser(const Vocab& vocab, const mpdsl::EnumConfig& space, Rng& rng,
                        const LangConfig& cfg) {
  ParserModel m;
  m.cfg = cfg;
  m.vocab = vocab;
  m.space = space;
  m.word_emb = tc::make_embedding("parser.word_emb", vocab.size(), cfg.word_dim, rng);
  m.encoder = tc::make_recurrent("parser.encoder", cfg.word_dim, cfg.hidden, rng);
  m.act_w = tc::make_param("parser.act_w", {kNumActs, cfg.hidden});
  m.act_b = tc::make_param("parser.act_b", {kNumActs});
  m.dsl_emb = tc::make_embedding("parser.dsl_emb", dsl_rows(), cfg.word_dim, rng);
  m.decoder = tc::make_recurrent("parser.decoder", cfg.word_dim, cfg.hidden, rng);
  double bh = std::sqrt(6.0 / (2.0 * cfg.hidden));
  double bu = std::sqrt(6.0 / (cfg.hidden + cfg.word_dim));
  double bo = std::sqrt(6.0 / (cfg.hidden + kDecodeOutputs));
  auto init = [&](tc::Parameter& p, double bound) {
    for (double& v : p.value) v = rng.uniform(-bound, bound);
  };
  m.init_subj_w = tc::make_param("parser.init_subj_w", {cfg.hidden, cfg.hidden});
  m.init_subj_u = tc::make_param("parser.init_subj_u", {cfg.hidden, cfg.word_dim});
  m.init_subj_b = tc::make_param("parser.init_subj_b", {cfg.hidden});
  m.init_ref_w = tc::make_param("parser.init_ref_w", {cfg.hidden, cfg.hidden});
  m.init_ref_u = tc::make_param("parser.init_ref_u", {cfg.hidden, cfg.word_dim});
  m.init_ref_b = tc::make_param("parser.init_ref_b", {cfg.hidden});
  m.out_w = tc::make_param("parser.out_w", {kDecodeOutputs, cfg.hidden});
  m.out_b = tc::make_param("parser.out_b", {kDecodeOutputs});
  init(m.init_subj_w, bh);
  init(m.init_subj_u, bu);
  init(m.init_ref_w, bh);
  init(m.init_ref_u, bu);
  init(m.act_w, bo);
  init(m.out_w, bo);
  return m;
}

tc::Value encode_tokens(tc::Tape& tape, ParserModel& m, const std::vector<Token>& tokens,
                        std::size_t lo, std::size_t hi) {
  if (lo >= hi) throw data_error("encode_tokens: empty segment");
  tc::Value h = tape.leaf(std::vector<double>(m.cfg.hidden, 0.0));
  for (std::size_t i = lo; i < hi; ++i) {
    tc::Value x = tc::lookup(tape, m.word_emb, m.vocab.id_of(tokens[i].surface));
    h = tc::step(tape, m.encoder, x, h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// masked decoding

namespace {

// argument decode state for the type mask
struct ArgState {
  std::size_t filters_used = 0;
  bool relate_used = false;
  bool any_emitted = false;
  // canonical chains: strictly increasing concept indices per chain level
  int last_concept = -1;
};

std::vector<std::size_t> legal_outputs(const ArgState& st, const mpdsl::EnumConfig& space) {
  std::vector<std::size_t> legal;
  if (st.filters_used < space.max_filters) {
    for (std::size_t c : space.concepts) {
      if (static_cast<int>(c) > st.last_concept) legal.push_back(out_concept(c));
    }
  }
  if (space.allow_relate && !st.relate_used && st.any_emitted) {
    for (Rel r : space.rels) legal.push_back(out_rel(r));
  }
  if (st.any_emitted) legal.push_back(kEndToken);
  return legal;
}

void apply_output(ArgState& st, std::size_t out_idx) {
  if (out_idx < kNumObjectConcepts) {
    ++st.filters_used;
    st.any_emitted = true;
    st.last_concept = static_cast<int>(out_idx);
  } else if (out_idx < kNumObjectConcepts + kNumRels) {
    st.relate_used = true;
    st.any_emitted = true;
    st.last_concept = -1;  // outer chain starts fresh
  }
}

struct StepDist {
  // log-probabilities over the legal subset, aligned with `legal`
  std::vector<std::size_t> legal;
  tc::Value log_probs;
};

StepDist output_distribution(tc::Tape& tape, ParserModel& m, tc::Value h, const ArgState& st,
                             const mpdsl::EnumConfig& space) {
  StepDist d;
  d.legal = legal_outputs(st, space);
  if (d.legal.empty()) throw logic_error("decoder reached a state with no legal output");
  tc::Value logits = tape.add(
      tape.matvec(tape.param(m.out_w), kDecodeOutputs, m.cfg.hidden, h), tape.param(m.out_b));
  std::vector<tc::Value> picked;
  picked.reserve(d.legal.size());
  for (std::size_t idx : d.legal) picked.push_back(tape.slice(logits, idx, 1));
  d.log_probs = tape.log(tape.softmax(tape.concat(picked)));
  return d;
}

std::size_t choose(const StepDist& d, tc::Tape& tape, DecodeMode mode, Rng* rng) {
  const double* lp = tape.data(d.log_probs);
  std::size_t n = d.legal.size();
  if (mode == DecodeMode::Argmax) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (lp[i] > lp[best]) best = i;
    }
    return best;
  }
  if (!rng) throw logic_error("sampling decode needs an rng");
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(lp[i]);
  return rng->choice(w);
}

tc::Value role_init(tc::Tape& tape, ParserModel& m, tc::Value h_enc, Act act, bool subject_role) {
  tc::Parameter& w = subject_role ? m.init_subj_w : m.init_ref_w;
  tc::Parameter& u = subject_role ? m.init_subj_u : m.init_ref_u;
  tc::Parameter& b = subject_role ? m.init_subj_b : m.init_ref_b;
  tc::Value act_e = tc::lookup(tape, m.dsl_emb, dsl_row_act(act));
  return tape.tanh(tape.add(
      tape.add(tape.matvec(tape.param(w), m.cfg.hidden, m.cfg.hidden, h_enc),
               tape.matvec(tape.param(u), m.cfg.hidden, m.cfg.word_dim, act_e)),
      tape.param(b)));
}

struct ArgDecode {
  NodePtr form;  // Unique(...) argument
  tc::Value log_prob;
  bool truncated = false;
  std::size_t tokens_used = 0;
};

ArgDecode decode_argument(tc::Tape& tape, ParserModel& m, tc::Value h0,
                          const mpdsl::EnumConfig& space, DecodeMode mode, Rng* rng,
                          std::size_t token_budget) {
  ArgDecode out;
  ArgState st;
  tc::Value h = h0;
  tc::Value prev = tc::lookup(tape, m.dsl_emb, dsl_row_start());
  tc::Value lp_total = tape.leaf(0.0);
  NodePtr expr = mpdsl::scene_all();
  while (true) {
    if (out.tokens_used >= token_budget) {
      out.truncated = true;
      out.log_prob = lp_total;
      return out;
    }
    h = tc::step(tape, m.decoder, prev, h);
    StepDist dist = output_distribution(tape, m, h, st, space);
    std::size_t pick = choose(dist, tape, mode, rng);
    lp_total = tape.add(lp_total, tape.slice(dist.log_probs, pick, 1));
    std::size_t out_idx = dist.legal[pick];
    ++out.tokens_used;
    if (out_idx == kEndToken) break;
    if (out_idx < kNumObjectConcepts) {
      expr = mpdsl::filter(expr, out_idx);
      prev = tc::lookup(tape, m.dsl_emb, dsl_row_concept(out_idx));
    } else {
      Rel r = static_cast<Rel>(out_idx - kNumObjectConcepts);
      expr = mpdsl::relate(mpdsl::unique(expr), r);
      prev = tc::lookup(tape, m.dsl_emb, dsl_row_rel(r));
    }
    apply_output(st, out_idx);
  }
  out.form = mpdsl::unique(expr);
  out.log_prob = lp_total;
  return out;
}

struct ActChoice {
  Act act;
  tc::Value log_prob;
};

ActChoice choose_action(tc::Tape& tape, ParserModel& m, tc::Value h_enc,
                        const mpdsl::EnumConfig& space, DecodeMode mode, Rng* rng) {
  tc::Value logits = tape.add(tape.matvec(tape.param(m.act_w), kNumActs, m.cfg.hidden, h_enc),
                              tape.param(m.act_b));
  std::vector<tc::Value> picked;
  for (Act a : space.acts) picked.push_back(tape.slice(logits, static_cast<std::size_t>(a), 1));
  tc::Value lps = tape.log(tape.softmax(tape.concat(picked)));
  const double* lp = tape.data(lps);
  std::size_t n = space.acts.size();
  std::size_t pick = 0;
  if (mode == DecodeMode::Argmax) {
    for (std::size_t i = 1; i < n; ++i) {
      if (lp[i] > lp[pick]) pick = i;
    }
  } else {
    if (!rng) throw logic_error("sampling decode needs an rng");
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(lp[i]);
    pick = rng->choice(w);
  }
  return {space.acts[pick], tape.slice(lps, pick, 1)};
}

}  // namespace

ParseGraph decode_move(tc::Tape& tape, ParserModel& m, tc::Value h_enc,
                       const mpdsl::EnumConfig& space, DecodeMode mode, Rng* rng) {
  ParseGraph out;
  ActChoice act = choose_action(tape, m, h_enc, space, mode, rng);
  std::size_t budget = m.cfg.max_decode_tokens;
  ArgDecode subj = decode_argument(tape, m, role_init(tape, m, h_enc, act.act, true), space,
                                   mode, rng, budget);
  if (subj.truncated) {
    out.truncated = true;
    out.log_prob = tape.add(act.log_prob, subj.log_prob);
    return out;
  }
  ArgDecode ref = decode_argument(tape, m, role_init(tape, m, h_enc, act.act, false), space,
                                  mode, rng, budget - subj.tokens_used);
  out.log_prob = tape.add(act.log_prob, tape.add(subj.log_prob, ref.log_prob));
  if (ref.truncated) {
    out.truncated = true;
    return out;
  }
  out.node = mpdsl::move(act.act, subj.form, ref.form);
  return out;
}

ParseResult parse_step(ParserModel& m, const std::vector<Token>& segment, DecodeMode mode,
                       Rng* rng) {
  if (segment.empty()) throw data_error("parse_step: empty segment");
  tc::Tape tape;
  tc::Value h = encode_tokens(tape, m, segment, 0, segment.size());
  ParseGraph g = decode_move(tape, m, h, instruction_space(segment, m.space), mode, rng);
  ParseResult r;
  r.node = g.node;
  r.log_prob = tape.scalar(g.log_prob);
  r.truncated = g.truncated;
  return r;
}

// ---------------------------------------------------------------------------
// exact enumeration of the decoder distribution

namespace {

// decode token sequence for an argument form, mirroring decode_argument's
// bottom-up construction
void form_tokens(const NodePtr& objset, std::vector<std::size_t>& out) {
  switch (objset->kind) {
    case mpdsl::NodeKind::SceneAll:
      return;
    case mpdsl::NodeKind::Filter:
      form_tokens(objset->child, out);
      out.push_back(out_concept(objset->concept_idx));
      return;
    case mpdsl::NodeKind::Relate:
      form_tokens(objset->child->child, out);  // Relate(Unique(inner), rel)
      out.push_back(out_rel(objset->rel));
      return;
    default:
      throw logic_error("form_tokens: unexpected node kind");
  }
}

}  // namespace

EnumParse enumerate_parse(tc::Tape& tape, ParserModel& m, tc::Value h_enc,
                          const mpdsl::EnumConfig& space) {
  EnumParse out;
  out.acts = space.acts;
  out.forms = mpdsl::enumerate_argument_forms(space);

  // action head distribution
  tc::Value logits = tape.add(tape.matvec(tape.param(m.act_w), kNumActs, m.cfg.hidden, h_enc),
                              tape.param(m.act_b));
  std::vector<tc::Value> picked;
  for (Act a : space.acts) picked.push_back(tape.slice(logits, static_cast<std::size_t>(a), 1));
  tc::Value act_lps = tape.log(tape.softmax(tape.concat(picked)));
  for (std::size_t i = 0; i < space.acts.size(); ++i) {
    out.act_lp.push_back(tape.slice(act_lps, i, 1));
  }

  // token sequences per form, decoded over a shared prefix trie per role+act
  std::vector<std::vector<std::size_t>> sequences;
  sequences.reserve(out.forms.size());
  for (const auto& f : out.forms) {
    std::vector<std::size_t> seq;
    form_tokens(f->child, seq);
    seq.push_back(kEndToken);
    sequences.push_back(std::move(seq));
  }

  struct TrieNode {
    tc::Value h;
    tc::Value lp;  // log-prob of the prefix
    ArgState st;
    std::map<std::size_t, std::size_t> next;
    bool expanded = false;
    StepDist dist;
  };

  auto decode_role = [&](Act act, bool subject_role) {
    std::vector<TrieNode> trie;
    trie.reserve(4 * out.forms.size() + 8);
    trie.resize(1);
    trie[0].h = role_init(tape, m, h_enc, act, subject_role);
    trie[0].lp = tape.leaf(0.0);
    trie[0].st = ArgState{};
    std::vector<tc::Value> lps(out.forms.size());

    for (std::size_t f = 0; f < sequences.size(); ++f) {
      std::size_t cur = 0;
      tc::Value prev = tc::lookup(tape, m.dsl_emb, dsl_row_start());
      for (std::size_t tok : sequences[f]) {
        if (!trie[cur].expanded) {
          trie[cur].h = tc::step(tape, m.decoder, prev, trie[cur].h);
          trie[cur].dist = output_distribution(tape, m, trie[cur].h, trie[cur].st, space);
          trie[cur].expanded = true;
        }
        const StepDist& dist = trie[cur].dist;
        auto at = std::find(dist.legal.begin(), dist.legal.end(), tok);
        if (at == dist.legal.end()) {
          throw logic_error("enumerated form is outside the decoder mask");
        }
        std::size_t pick = static_cast<std::size_t>(at - dist.legal.begin());
        tc::Value lp_here = tape.add(trie[cur].lp, tape.slice(dist.log_probs, pick, 1));
        if (tok == kEndToken) {
          lps[f] = lp_here;
          break;
        }
        auto it = trie[cur].next.find(tok);
        if (it == trie[cur].next.end()) {
          TrieNode child;
          child.h = trie[cur].h;  // stepped on first expansion of the child
          child.lp = lp_here;
          child.st = trie[cur].st;
          apply_output(child.st, tok);
          trie.push_back(child);
          it = trie[cur].next.emplace(tok, trie.size() - 1).first;
        }
        cur = it->second;
        prev = tc::lookup(tape, m.dsl_emb,
                          tok < kNumObjectConcepts
                              ? dsl_row_concept(tok)
                              : dsl_row_rel(static_cast<Rel>(tok - kNumObjectConcepts)));
      }
    }
    return lps;
  };

  for (Act act : space.acts) {
    out.subj_lp.push_back(decode_role(act, true));
    out.ref_lp.push_back(decode_role(act, false));
  }
  return out;
}

// ---------------------------------------------------------------------------
// splitter

void SplitterModel::register_params(tc::ParamRegistry& reg) {
  reg.add(word_emb);
  reg.add(encoder);
  reg.add(head_w);
  reg.add(head_b);
}

SplitterModel make_splitter(const Vocab& vocab, Rng& rng, const LangConfig& cfg) {
  SplitterModel m;
  m.cfg = cfg;
  m.vocab = vocab;
  m.word_emb = tc::make_embedding("splitter.word_emb", vocab.size(), cfg.word_dim, rng);
  m.encoder = tc::make_recurrent("splitter.encoder", cfg.word_dim, cfg.hidden, rng);
  m.head_w = tc::make_param("splitter.head_w", {1, cfg.hidden});
  double bound = std::sqrt(6.0 / (cfg.hidden + 1.0));
  for (double& v : m.head_w.value) v = rng.uniform(-bound, bound);
  m.head_b = tc::make_param("splitter.head_b", {1});
  m.head_b.value[0] = -2.0;  // default toward "no boundary"
  return m;
}

namespace {

// boundary probabilities before tokens 1..L-1
std::vector<tc::Value> boundary_probs(tc::Tape& tape, SplitterModel& m,
                                      const std::vector<Token>& tokens) {
  std::vector<tc::Value> probs;
  tc::Value h = tape.leaf(std::vector<double>(m.cfg.hidden, 0.0));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    tc::Value x = tc::lookup(tape, m.word_emb, m.vocab.id_of(tokens[i].surface));
    h = tc::step(tape, m.encoder, x, h);
    if (i >= 1) {
      probs.push_back(tape.sigmoid(
          tape.add(tape.matvec(tape.param(m.head_w), 1, m.cfg.hidden, h), tape.param(m.head_b))));
    }
  }
  return probs;
}

std::vector<Segment> segments_from_boundaries(const std::vector<bool>& boundary_before,
                                              std::size_t n) {
  std::vector<Segment> segs;
  std::size_t lo = 0;
  for (std::size_t j = 1; j < n; ++j) {
    if (boundary_before[j - 1]) {
      segs.push_back({lo, j});
      lo = j;
    }
  }
  segs.push_back({lo, n});
  return segs;
}

}  // namespace

SplitResult split(SplitterModel& m, const std::vector<Token>& tokens) {
  if (tokens.empty()) throw data_error("split: empty token sequence");
  tc::Tape tape;
  auto probs = boundary_probs(tape, m, tokens);
  std::vector<bool> cut(probs.size());
  double lp = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    double p = tape.scalar(probs[j]);
    cut[j] = p > 0.5;
    lp += std::log(cut[j] ? p : 1.0 - p);
  }
  return {segments_from_boundaries(cut, tokens.size()), lp};
}

SplitSample split_sample(tc::Tape& tape, SplitterModel& m, const std::vector<Token>& tokens,
                         Rng& rng) {
  if (tokens.empty()) throw data_error("split_sample: empty token sequence");
  auto probs = boundary_probs(tape, m, tokens);
  std::vector<bool> cut(probs.size());
  tc::Value lp = tape.leaf(0.0);
  for (std::size_t j = 0; j < probs.size(); ++j) {
    double p = tape.scalar(probs[j]);
    cut[j] = rng.uniform() < p;
    tc::Value term = cut[j] ? probs[j] : tape.add_const(tape.neg(probs[j]), 1.0);
    lp = tape.add(lp, tape.log(term));
  }
  return {segments_from_boundaries(cut, tokens.size()), lp};
}

mpdsl::ManipulationProgram infer_program(SplitterModel& splitter, ParserModel& parser,
                                         const std::string& instruction) {
  auto tokens = instgen::lex(instruction);
  if (tokens.empty()) throw data_error("infer_program: empty instruction");
  SplitResult sr = split(splitter, tokens);
  mpdsl::ManipulationProgram program;
  for (const auto& [lo, hi] : sr.segments) {
    std::vector<Token> segment(tokens.begin() + static_cast<std::ptrdiff_t>(lo),
                               tokens.begin() + static_cast<std::ptrdiff_t>(hi));
    ParseResult r = parse_step(parser, segment, DecodeMode::Argmax, nullptr);
    if (r.truncated) {
      throw numeric_error("decode exceeded the token budget for segment starting at " +
                          std::to_string(lo));
    }
    program.steps.push_back(r.node);
  }
  return program;
}

}  // namespace manip::langreason
