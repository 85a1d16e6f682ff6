#pragma once

#include <map>
#include <string>
#include <vector>

#include "manip/instgen.hpp"
#include "manip/mpdsl.hpp"
#include "manip/tensorcore.hpp"

namespace manip::langreason {

namespace tc = manip::tensorcore;

// token-surface vocabulary; index 0 is the shared <unk> embedding
struct Vocab {
  std::vector<std::string> tokens;
  std::map<std::string, std::size_t> index;

  std::size_t size() const { return tokens.size(); }
  std::size_t id_of(const std::string& surface) const;

  static Vocab build(const std::vector<std::vector<instgen::Token>>& corpus);
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);
};

struct LangConfig {
  std::size_t word_dim = 32;
  std::size_t hidden = 64;
  std::size_t max_decode_tokens = 32;
};

// ---------------------------------------------------------------------------
// parser: per-segment seq2tree decoder with type-masked emission

// decoder output token space: object concepts, relations, end-of-argument
inline constexpr std::size_t kDecodeOutputs = kNumObjectConcepts + kNumRels + 1;
inline constexpr std::size_t kEndToken = kDecodeOutputs - 1;

struct ParserModel {
  LangConfig cfg;
  Vocab vocab;
  mpdsl::EnumConfig space;  // reachable program space (masking follows it)

  tc::Embedding word_emb;
  tc::RecurrentCell encoder;
  tc::Parameter act_w, act_b;  // kNumActs x hidden action head
  tc::Embedding dsl_emb;       // concepts + rels + start + acts
  tc::RecurrentCell decoder;
  tc::Parameter init_subj_w, init_subj_u, init_subj_b;
  tc::Parameter init_ref_w, init_ref_u, init_ref_b;
  tc::Parameter out_w, out_b;  // kDecodeOutputs x hidden

  void register_params(tc::ParamRegistry& reg);
};

ParserModel make_parser(const Vocab& vocab, const mpdsl::EnumConfig& space, Rng& rng,
                        const LangConfig& cfg = {});

enum class DecodeMode { Sample, Argmax };

// The decoder's reachable space for one segment: the model cap intersected
// with the keywords the lexer found in the segment (a class falls back to
// the cap when the segment names none of it). Programs are built from the
// instruction's own concepts; the parser learns their arrangement.
mpdsl::EnumConfig instruction_space(const std::vector<instgen::Token>& segment,
                                    const mpdsl::EnumConfig& cap);

tc::Value encode_tokens(tc::Tape& tape, ParserModel& m, const std::vector<instgen::Token>& tokens,
                        std::size_t lo, std::size_t hi);

struct ParseGraph {
  mpdsl::NodePtr node;  // a well-typed Move (null when truncated)
  tc::Value log_prob;
  bool truncated = false;
};

// one Move decode against an encoded segment; sampling and argmax share the
// same masked emission
ParseGraph decode_move(tc::Tape& tape, ParserModel& m, tc::Value h_enc,
                       const mpdsl::EnumConfig& space, DecodeMode mode, Rng* rng);

struct ParseResult {
  mpdsl::NodePtr node;
  double log_prob = 0.0;
  bool truncated = false;
};

ParseResult parse_step(ParserModel& m, const std::vector<instgen::Token>& segment, DecodeMode mode,
                       Rng* rng = nullptr);

// Exact distribution over the decoder's whole program space, factored as
// q(act) * q(subject form | act) * q(reference form | act). Shared prefixes
// are decoded once.
struct EnumParse {
  std::vector<Act> acts;
  std::vector<mpdsl::NodePtr> forms;          // argument forms, mpdsl enumeration order
  std::vector<tc::Value> act_lp;              // [act]
  std::vector<std::vector<tc::Value>> subj_lp;  // [act][form]
  std::vector<std::vector<tc::Value>> ref_lp;   // [act][form]
};

EnumParse enumerate_parse(tc::Tape& tape, ParserModel& m, tc::Value h_enc,
                          const mpdsl::EnumConfig& space);

// ---------------------------------------------------------------------------
// splitter: per-position segment boundary scores

struct SplitterModel {
  LangConfig cfg;
  Vocab vocab;
  tc::Embedding word_emb;
  tc::RecurrentCell encoder;
  tc::Parameter head_w;  // 1 x hidden
  tc::Parameter head_b;

  void register_params(tc::ParamRegistry& reg);
};

SplitterModel make_splitter(const Vocab& vocab, Rng& rng, const LangConfig& cfg = {});

using Segment = std::pair<std::size_t, std::size_t>;  // [lo, hi) token range

struct SplitResult {
  std::vector<Segment> segments;
  double log_prob = 0.0;
};

// inference: boundary before token j wherever p_j > 0.5
SplitResult split(SplitterModel& m, const std::vector<instgen::Token>& tokens);

struct SplitSample {
  std::vector<Segment> segments;
  tc::Value log_prob;
};

// training: boundary decisions sampled Bernoulli(p_j); log_prob sums over
// every considered position
SplitSample split_sample(tc::Tape& tape, SplitterModel& m,
                         const std::vector<instgen::Token>& tokens, Rng& rng);

// full language reasoner: split, parse each segment (argmax), compose
mpdsl::ManipulationProgram infer_program(SplitterModel& splitter, ParserModel& parser,
                                         const std::string& instruction);

}  // namespace manip::langreason
