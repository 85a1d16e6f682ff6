#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "manip/langreason.hpp"

using namespace manip;
using namespace manip::langreason;

namespace {

Vocab demo_vocab() {
  std::vector<std::vector<instgen::Token>> corpus = {
      instgen::lex("put the red cube on the blue dice"),
      instgen::lex("place the green thing to the left of the yellow lego then put the white dice "
                   "on the cyan block"),
      instgen::lex("move the block which is behind the magenta cube to the right of the dice"),
  };
  return Vocab::build(corpus);
}

}  // namespace

TEST_CASE("vocab: build, lookup, unk, save/load") {
  Vocab v = demo_vocab();
  CHECK(v.id_of("red") != 0);
  CHECK(v.id_of("to the right of") != 0);
  CHECK(v.id_of("zebra") == 0);  // unseen -> unk
  v.save("lr_vocab.txt");
  Vocab w = Vocab::load("lr_vocab.txt");
  CHECK(w.tokens == v.tokens);
  std::remove("lr_vocab.txt");
}

TEST_CASE("decoded programs always typecheck and report finite log-probs") {
  Rng rng(1);
  Vocab v = demo_vocab();
  ParserModel m = make_parser(v, mpdsl::full_lexicon_config(2, true), rng);
  Rng sampler(2);
  auto tokens = instgen::lex("put the red cube on the blue dice");
  for (int t = 0; t < 500; ++t) {
    ParseResult r = parse_step(m, tokens, DecodeMode::Sample, &sampler);
    REQUIRE_FALSE(r.truncated);
    CHECK(mpdsl::typecheck(r.node) == mpdsl::DslType::WorldStep);
    CHECK(std::isfinite(r.log_prob));
    CHECK(r.log_prob <= 0.0);
  }
  ParseResult a1 = parse_step(m, tokens, DecodeMode::Argmax);
  ParseResult a2 = parse_step(m, tokens, DecodeMode::Argmax);
  CHECK(mpdsl::equal(a1.node, a2.node));
  CHECK(a1.log_prob == a2.log_prob);
}

TEST_CASE("tiny token budget reports truncation") {
  Rng rng(3);
  Vocab v = demo_vocab();
  LangConfig cfg;
  cfg.max_decode_tokens = 1;
  ParserModel m = make_parser(v, mpdsl::full_lexicon_config(2, true), rng, cfg);
  Rng sampler(4);
  ParseResult r = parse_step(m, instgen::lex("put the red cube on the dice"), DecodeMode::Sample,
                             &sampler);
  CHECK(r.truncated);
}

TEST_CASE("enumeration distribution is complete: probabilities sum to one") {
  Rng rng(5);
  Vocab v = demo_vocab();
  mpdsl::EnumConfig space = mpdsl::full_lexicon_config(2, false);
  ParserModel m = make_parser(v, space, rng);

  tc::Tape tape;
  tc::Value h = encode_tokens(tape, m, instgen::lex("put the red cube on the dice"), 0, 7);
  EnumParse ep = enumerate_parse(tape, m, h, m.space);

  double act_total = 0.0;
  for (std::size_t a = 0; a < ep.acts.size(); ++a) {
    act_total += std::exp(tape.scalar(ep.act_lp[a]));
    double subj_total = 0.0, ref_total = 0.0;
    for (std::size_t f = 0; f < ep.forms.size(); ++f) {
      subj_total += std::exp(tape.scalar(ep.subj_lp[a][f]));
      ref_total += std::exp(tape.scalar(ep.ref_lp[a][f]));
    }
    CHECK(std::fabs(subj_total - 1.0) <= 1e-9);
    CHECK(std::fabs(ref_total - 1.0) <= 1e-9);
  }
  CHECK(std::fabs(act_total - 1.0) <= 1e-9);
}

TEST_CASE("enumeration log-probs agree with sampled decode log-probs") {
  Rng rng(6);
  Vocab v = demo_vocab();
  ParserModel m = make_parser(v, mpdsl::full_lexicon_config(2, true), rng);
  auto tokens = instgen::lex("move the green thing on the cyan block");

  tc::Tape tape;
  tc::Value h = encode_tokens(tape, m, tokens, 0, tokens.size());
  mpdsl::EnumConfig space = instruction_space(tokens, m.space);
  EnumParse ep = enumerate_parse(tape, m, h, space);

  Rng sampler(7);
  for (int t = 0; t < 40; ++t) {
    ParseGraph g = decode_move(tape, m, h, space, DecodeMode::Sample, &sampler);
    REQUIRE_FALSE(g.truncated);
    std::size_t act_idx = ep.acts.size();
    for (std::size_t a = 0; a < ep.acts.size(); ++a) {
      if (ep.acts[a] == g.node->act) act_idx = a;
    }
    REQUIRE(act_idx < ep.acts.size());
    std::size_t sf = ep.forms.size(), rf = ep.forms.size();
    for (std::size_t f = 0; f < ep.forms.size(); ++f) {
      if (mpdsl::equal(ep.forms[f], g.node->subject)) sf = f;
      if (mpdsl::equal(ep.forms[f], g.node->reference)) rf = f;
    }
    REQUIRE(sf < ep.forms.size());
    REQUIRE(rf < ep.forms.size());
    double expect = tape.scalar(ep.act_lp[act_idx]) + tape.scalar(ep.subj_lp[act_idx][sf]) +
                    tape.scalar(ep.ref_lp[act_idx][rf]);
    CHECK(tape.scalar(g.log_prob) == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("argmax decode log-prob dominates sampled decodes (statistical)") {
  // a trained parser is near-deterministic per step; emulate that sharpness
  // with bias-dominated heads (the acceptance suite repeats this check on
  // the actually trained model)
  Rng rng(8);
  Vocab v = demo_vocab();
  ParserModel m = make_parser(v, mpdsl::full_lexicon_config(2, true), rng);
  std::fill(m.out_w.value.begin(), m.out_w.value.end(), 0.0);
  std::fill(m.act_w.value.begin(), m.act_w.value.end(), 0.0);
  Rng bias(99);
  for (double& x : m.out_b.value) x = 10.0 * bias.uniform();
  for (double& x : m.act_b.value) x = 10.0 * bias.uniform();

  Rng sampler(10);
  int wins = 0, total = 0;
  const char* inputs[] = {"put the red cube on the blue dice",
                          "move the green thing to the left of the lego",
                          "place the white dice on the cyan block",
                          "put the block which is behind the magenta cube on the dice"};
  for (int t = 0; t < 100; ++t) {
    auto tokens = instgen::lex(inputs[t % 4]);
    ParseResult best = parse_step(m, tokens, DecodeMode::Argmax);
    bool beaten = false;
    for (int s = 0; s < 100; ++s) {
      ParseResult r = parse_step(m, tokens, DecodeMode::Sample, &sampler);
      if (r.log_prob > best.log_prob + 1e-12) beaten = true;
    }
    ++total;
    if (!beaten) ++wins;
  }
  CHECK(static_cast<double>(wins) / total >= 0.95);
}

TEST_CASE("splitter: zero scores give exactly one segment") {
  Rng rng(11);
  Vocab v = demo_vocab();
  SplitterModel m = make_splitter(v, rng);
  std::fill(m.head_w.value.begin(), m.head_w.value.end(), 0.0);
  m.head_b.value[0] = 0.0;
  auto tokens = instgen::lex("put the red cube on the blue dice then put the dice on the lego");
  SplitResult r = split(m, tokens);
  REQUIRE(r.segments.size() == 1);
  CHECK(r.segments[0] == Segment{0, tokens.size()});
}

TEST_CASE("splitter: segments always cover the token sequence exactly") {
  Rng rng(12);
  Vocab v = demo_vocab();
  SplitterModel m = make_splitter(v, rng);
  Rng sampler(13);
  auto tokens = instgen::lex(
      "put the red cube on the blue dice then move the green thing to the left of the lego");
  for (int t = 0; t < 200; ++t) {
    tc::Tape tape;
    SplitSample s = split_sample(tape, m, tokens, sampler);
    REQUIRE_FALSE(s.segments.empty());
    CHECK(s.segments.front().first == 0);
    CHECK(s.segments.back().second == tokens.size());
    for (std::size_t i = 1; i < s.segments.size(); ++i) {
      CHECK(s.segments[i].first == s.segments[i - 1].second);
      CHECK(s.segments[i].first < s.segments[i].second);
    }
    double lp = tape.scalar(s.log_prob);
    CHECK(std::isfinite(lp));
    CHECK(lp <= 0.0);
  }
}

TEST_CASE("infer_program with an untrained splitter equals the single parse") {
  Rng rng(14);
  Vocab v = demo_vocab();
  ParserModel parser = make_parser(v, mpdsl::full_lexicon_config(2, true), rng);
  SplitterModel splitter = make_splitter(v, rng);  // head bias keeps 1 segment
  std::string instruction = "put the red cube on the blue dice";
  auto program = infer_program(splitter, parser, instruction);
  REQUIRE(program.size() == 1);
  ParseResult direct = parse_step(parser, instgen::lex(instruction), DecodeMode::Argmax);
  CHECK(mpdsl::equal(program.steps[0], direct.node));
  mpdsl::typecheck(program);
}

TEST_CASE("restricted decode space stays inside its lexicon") {
  Rng rng(15);
  Vocab v = demo_vocab();
  mpdsl::EnumConfig space;
  space.concepts = {object_concept_index(Color::Red), object_concept_index(Color::Blue),
                    object_concept_index(Shape::Cube)};
  space.acts = {Act::MovTop};
  space.max_filters = 1;
  space.allow_relate = false;
  ParserModel m = make_parser(v, space, rng);
  Rng sampler(16);
  auto tokens = instgen::lex("put the red cube on the blue cube");
  for (int t = 0; t < 100; ++t) {
    ParseResult r = parse_step(m, tokens, DecodeMode::Sample, &sampler);
    CHECK(r.node->act == Act::MovTop);
    std::string s = mpdsl::to_sexpr(r.node);
    CHECK(s.find("relate") == std::string::npos);
    CHECK(s.find("green") == std::string::npos);
  }

  // the 9-program space: enumeration must cover exactly those programs
  tc::Tape tape;
  tc::Value h = encode_tokens(tape, m, tokens, 0, tokens.size());
  EnumParse ep = enumerate_parse(tape, m, h, m.space);
  CHECK(ep.acts.size() == 1);
  CHECK(ep.forms.size() == 3);
}
