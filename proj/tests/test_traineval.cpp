#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "manip/traineval.hpp"
#include "support.hpp"

using namespace manip;
using namespace manip::traineval;
namespace bw = manip::blocksworld;

namespace {

std::vector<instgen::DatasetRecord> small_dataset(std::uint64_t seed, std::size_t count,
                                                  bool complex_mix = false) {
  instgen::DatasetConfig cfg;
  cfg.steps_min = cfg.steps_max = 1;
  cfg.complex_fraction = complex_mix ? 0.5 : 0.0;
  return instgen::generate_dataset(seed, count, cfg);
}

Models demo_models(std::uint64_t seed, const std::vector<instgen::DatasetRecord>& records) {
  std::vector<std::vector<instgen::Token>> corpus;
  for (const auto& r : records) corpus.push_back(instgen::lex(r.instruction));
  return pipeline::make_models(corpus, seed);
}

}  // namespace

TEST_CASE("loss_act: zero at equality, L1 worked values") {
  bw::SceneConfig scfg;
  bw::Scene s = bw::generate_scene(3, 3, scfg);
  bw::WorldState w = bw::world_of(s);
  LossConfig cfg;  // beta 1, L1
  CHECK(pipeline::loss_act(w, w, cfg) == doctest::Approx(0.0));

  // single object; x1 shifted by 0.1; beta 0 isolates the norm term
  bw::WorldState gold = {{0, bw::Location{0.2, 0.2, 0.4, 0.4, 0.5}}};
  bw::WorldState pred = {{0, bw::Location{0.3, 0.2, 0.4, 0.4, 0.5}}};
  LossConfig l1only;
  l1only.beta = 0.0;
  CHECK(pipeline::loss_act(pred, gold, l1only) == doctest::Approx(0.1));

  // concentric quarter-area box: each corner moves w/4 = 0.05 -> L1 = 0.2,
  // IoU = 1/4 -> total = 0.2 + (1 - 0.25)
  bw::WorldState quarter = {{0, bw::Location{0.25, 0.25, 0.35, 0.35, 0.5}}};
  LossConfig full;
  full.beta = 1.0;
  CHECK(pipeline::loss_act(quarter, gold, full) == doctest::Approx(0.2 + 0.75));

  bw::WorldState mismatched = {{1, bw::Location{0.2, 0.2, 0.4, 0.4, 0.5}}};
  CHECK_THROWS_AS(pipeline::loss_act(mismatched, gold, cfg), Error);
  bw::WorldState two = {{0, bw::Location{0.2, 0.2, 0.4, 0.4, 0.5}},
                        {1, bw::Location{0.5, 0.5, 0.6, 0.6, 0.5}}};
  CHECK_THROWS_AS(pipeline::loss_act(two, gold, cfg), Error);
}

TEST_CASE("loss_act is nonnegative and zero only at exact equality") {
  Rng rng(4);
  LossConfig cfg;
  for (int t = 0; t < 200; ++t) {
    auto rl = [&]() {
      double x1 = rng.uniform(0.05, 0.7), y1 = rng.uniform(0.05, 0.7);
      return bw::Location{x1, y1, x1 + rng.uniform(0.05, 0.2), y1 + rng.uniform(0.05, 0.2),
                          rng.uniform()};
    };
    bw::WorldState gold = {{0, rl()}, {1, rl()}};
    bw::WorldState pred = {{0, rl()}, {1, rl()}};
    double L = pipeline::loss_act(pred, gold, cfg);
    CHECK(L >= 0.0);
    bool equal = pred.at(0) == gold.at(0) && pred.at(1) == gold.at(1);
    if (!equal) CHECK(L > 0.0);
  }
}

TEST_CASE("advantages: centered rewards") {
  auto adv = advantages({-1.0, -3.0});
  CHECK(adv[0] == doctest::Approx(1.0));
  CHECK(adv[1] == doctest::Approx(-1.0));
}

TEST_CASE("identical rewards give a zero surrogate gradient") {
  tc::Tape tape;
  tc::Parameter theta = tc::make_param("theta", {3});
  theta.value = {0.2, -0.1, 0.4};
  tc::Value logits = tape.param(theta);
  tc::Value lp = tape.log(tape.softmax(logits));
  std::vector<tc::Value> lps = {tape.slice(lp, 0, 1), tape.slice(lp, 1, 1), tape.slice(lp, 2, 1)};
  tc::Value surr = reinforce_surrogate(tape, lps, {-2.5, -2.5, -2.5});
  tape.backward(surr);
  for (double g : theta.grad) CHECK(g == doctest::Approx(0.0));
}

TEST_CASE("gradients of the loss through soft ground+execute match finite differences") {
  // finite differences through the full soft pipeline graph w.r.t. both
  // theta_V and theta_A; multi-step programs re-ground between steps
  auto records = small_dataset(21, 6, true);
  Models models = demo_models(5, records);

  std::vector<tc::Parameter*> params = {&models.ce.concept_emb.table, &models.ce.proj_color,
                                        &models.ce.proj_shape, &models.am.act_emb.table};
  for (auto& net : models.ce.rel_nets) {
    params.push_back(&net.weights[0]);
    params.push_back(&net.biases[1]);
  }
  params.push_back(&models.am.net.weights[0]);
  params.push_back(&models.am.net.biases[2]);

  const auto& rec = records[1];
  LossConfig lcfg;
  auto build = [&](tc::Tape& tape) {
    pipeline::SoftExecResult ex = pipeline::soft_execute(tape, rec.gold_program,
                                                         rec.scene_initial, models.ce, models.am);
    return pipeline::loss_act_node(tape, ex.ids, ex.final_locs,
                                   bw::world_of(rec.scene_final), lcfg);
  };
  auto eval = [&]() {
    tc::Tape t;
    return t.scalar(build(t));
  };
  auto fd = testsupport::finite_diff(eval, params);
  tc::Tape t;
  for (auto* p : params) p->zero_grad();
  t.backward(build(t));
  CHECK(testsupport::max_rel_err(testsupport::collect_grads(params), fd) < 1e-4);
}

TEST_CASE("reward grid agrees with the tape soft-execution loss") {
  auto records = small_dataset(33, 4, true);
  Models models = demo_models(7, records);
  LossConfig lcfg;

  mpdsl::EnumConfig space = mpdsl::full_lexicon_config(2, true);
  space.concepts = {0, 3, 7, 9};  // red, green, cube, dice
  space.rels = {Rel::Left, Rel::Behind};
  space.acts = {Act::MovTop, Act::MovRight};

  for (const auto& rec : records) {
    EnumRewardGrid grid = build_reward_grid(rec, models, space, lcfg);
    Rng pick(rec.scene_initial.seed);
    for (int t = 0; t < 25; ++t) {
      std::size_t a = static_cast<std::size_t>(pick.uniform_int(0, grid.acts.size() - 1));
      std::size_t s = static_cast<std::size_t>(pick.uniform_int(0, grid.forms.size() - 1));
      std::size_t r = static_cast<std::size_t>(pick.uniform_int(0, grid.forms.size() - 1));
      mpdsl::ManipulationProgram program = mpdsl::single_step(
          mpdsl::move(grid.acts[a], grid.forms[s], grid.forms[r]));
      tc::Tape tape;
      pipeline::SoftExecResult ex =
          pipeline::soft_execute(tape, program, rec.scene_initial, models.ce, models.am);
      double L = tape.scalar(
          pipeline::loss_act_node(tape, ex.ids, ex.final_locs, bw::world_of(rec.scene_final),
                                  lcfg));
      CHECK(grid.at(a, s, r) == doctest::Approx(-L).epsilon(1e-9));
    }
  }
}

TEST_CASE("enumeration-mode gradient equals the sampling estimator's expectation") {
  // 9-program space; exact gradient vs the mean of 10^4 sampled estimates
  auto records = small_dataset(55, 3);
  Models models = demo_models(9, records);

  mpdsl::EnumConfig space;
  space.concepts = {object_concept_index(Color::Red), object_concept_index(Color::Blue),
                    object_concept_index(Shape::Cube)};
  space.acts = {Act::MovTop};
  space.max_filters = 1;
  space.allow_relate = false;
  Rng mk(11);
  models.parser = langreason::make_parser(models.vocab, space, mk);

  const auto& rec = records[0];
  LossConfig lcfg;
  EnumRewardGrid grid = build_reward_grid(rec, models, space, lcfg);
  REQUIRE(grid.acts.size() * grid.forms.size() * grid.forms.size() == 9);

  auto tokens = instgen::lex(rec.instruction);
  tc::ParamRegistry preg;
  models.parser.register_params(preg);

  auto grads = [&]() { return testsupport::collect_grads(preg.params); };
  auto zero = [&]() {
    for (auto* p : preg.params) p->zero_grad();
  };

  // exact gradient
  zero();
  {
    tc::Tape tape;
    tc::Value h = langreason::encode_tokens(tape, models.parser, tokens, 0, tokens.size());
    langreason::EnumParse ep = langreason::enumerate_parse(tape, models.parser, h, space);
    std::size_t nf = ep.forms.size();
    double mu = 0.0;
    std::vector<std::vector<std::vector<double>>> q(
        ep.acts.size(), std::vector<std::vector<double>>(nf, std::vector<double>(nf)));
    for (std::size_t a = 0; a < ep.acts.size(); ++a) {
      for (std::size_t s = 0; s < nf; ++s) {
        for (std::size_t r = 0; r < nf; ++r) {
          q[a][s][r] = std::exp(tape.scalar(ep.act_lp[a]) + tape.scalar(ep.subj_lp[a][s]) +
                                tape.scalar(ep.ref_lp[a][r]));
          mu += q[a][s][r] * grid.at(a, s, r);
        }
      }
    }
    tc::Value surr = tape.leaf(0.0);
    for (std::size_t a = 0; a < ep.acts.size(); ++a) {
      for (std::size_t s = 0; s < nf; ++s) {
        for (std::size_t r = 0; r < nf; ++r) {
          double w = q[a][s][r] * (grid.at(a, s, r) - mu);
          tc::Value lp = tape.add(ep.act_lp[a], tape.add(ep.subj_lp[a][s], ep.ref_lp[a][r]));
          surr = tape.add(surr, tape.scale(tape.neg(lp), w));
        }
      }
    }
    tape.backward(surr);
  }
  std::vector<double> exact = grads();

  // sampled estimates
  const int kRuns = 10000;
  const std::size_t kSamples = 4;
  std::vector<double> mean(exact.size(), 0.0), m2(exact.size(), 0.0);
  Rng sampler(77);
  for (int run = 0; run < kRuns; ++run) {
    zero();
    tc::Tape tape;
    tc::Value h = langreason::encode_tokens(tape, models.parser, tokens, 0, tokens.size());
    std::vector<tc::Value> lps;
    std::vector<double> rewards;
    for (std::size_t k = 0; k < kSamples; ++k) {
      langreason::ParseGraph g = langreason::decode_move(
          tape, models.parser, h, space, langreason::DecodeMode::Sample, &sampler);
      REQUIRE_FALSE(g.truncated);
      std::size_t ai = 0, si = 0, ri = 0;
      for (std::size_t f = 0; f < grid.forms.size(); ++f) {
        if (mpdsl::equal(grid.forms[f], g.node->subject)) si = f;
        if (mpdsl::equal(grid.forms[f], g.node->reference)) ri = f;
      }
      lps.push_back(g.log_prob);
      rewards.push_back(grid.at(ai, si, ri));
    }
    tape.backward(reinforce_surrogate(tape, lps, rewards));
    std::vector<double> g = grads();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double delta = g[i] - mean[i];
      mean[i] += delta / static_cast<double>(run + 1);
      m2[i] += delta * (g[i] - mean[i]);
    }
  }

  // every coordinate of the sampled mean within 3 standard errors
  std::size_t checked = 0, outside = 0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    double se = std::sqrt(m2[i] / (kRuns - 1.0) / kRuns);
    if (se < 1e-12) {
      CHECK(std::fabs(mean[i] - exact[i]) < 1e-9);
      continue;
    }
    ++checked;
    if (std::fabs(mean[i] - exact[i]) > 3.0 * se) ++outside;
  }
  REQUIRE(checked > 100);
  // 3 sigma leaves ~0.3% expected misses; allow 1%
  CHECK(static_cast<double>(outside) / static_cast<double>(checked) < 0.01);
}

namespace {

// a pipeline run rigged to the record's gold grounding and gold geometry
pipeline::HardRun gold_run(const instgen::DatasetRecord& rec, bool wrong_subject = false) {
  pipeline::HardRun run;
  run.program = rec.gold_program;
  bw::Scene walk = rec.scene_initial;
  for (std::size_t s = 0; s < rec.gold_program.steps.size(); ++s) {
    const auto& g = rec.gold_grounding[s];
    visreason::GroundedStep step;
    step.act = g.act;
    int subject = g.subject_id;
    if (wrong_subject) subject = g.reference_id;  // deliberately misground
    step.subject.hard_id = subject;
    step.reference.hard_id = g.reference_id;
    run.grounded.steps.push_back(step);

    bw::WorldState w = bw::world_of(walk);
    bw::Location target = bw::apply_gold_action(g.act, w.at(subject), w.at(g.reference_id));
    w[subject] = target;
    run.subgoals.push_back({subject, target});
    walk = bw::with_world(walk, w);
  }
  run.final_world = bw::world_of(walk);
  return run;
}

}  // namespace

TEST_CASE("metrics: gold run scores perfectly; wrong subject halves identification") {
  auto records = small_dataset(88, 2);

  // gold program + gold geometry -> every metric at 1
  RecordScores a = score_run(gold_run(records[0]), records[0]);
  CHECK(a.iou == doctest::Approx(1.0));
  CHECK(a.iou_m == doctest::Approx(1.0));
  CHECK(a.action == doctest::Approx(1.0));
  CHECK(a.subject == doctest::Approx(1.0));
  CHECK(a.predicate == doctest::Approx(1.0));
  CHECK(a.placement == doctest::Approx(1.0));
  CHECK(a.closed_world_ok);

  // two-record split, one correct and one wrong subject -> identification 0.5
  RecordScores b = score_run(gold_run(records[1], true), records[1]);
  CHECK(b.subject == doctest::Approx(0.0));
  CHECK((a.identification + b.identification) / 2.0 == doctest::Approx(0.5));
  CHECK(b.action == doctest::Approx(1.0));  // action itself still matches
}

TEST_CASE("metrics are invariant to consistent id relabeling") {
  auto records = small_dataset(111, 3);
  for (const auto& rec : records) {
    RecordScores base = score_run(gold_run(rec), rec);

    // relabel ids by reversal, consistently across scenes / grounding / run
    instgen::DatasetRecord rel = rec;
    int max_id = 0;
    for (const auto& o : rec.scene_initial.objects) max_id = std::max(max_id, o.id);
    auto relabel = [&](int id) { return max_id - id; };
    for (auto& o : rel.scene_initial.objects) o.id = relabel(o.id);
    for (auto& o : rel.scene_final.objects) o.id = relabel(o.id);
    for (auto& g : rel.gold_grounding) {
      g.subject_id = relabel(g.subject_id);
      g.reference_id = relabel(g.reference_id);
    }

    pipeline::HardRun run = gold_run(rec);
    pipeline::HardRun run_rel;
    run_rel.program = run.program;
    for (const auto& s : run.grounded.steps) {
      visreason::GroundedStep t = s;
      t.subject.hard_id = relabel(s.subject.hard_id);
      t.reference.hard_id = relabel(s.reference.hard_id);
      run_rel.grounded.steps.push_back(t);
    }
    for (const auto& g : run.subgoals) run_rel.subgoals.push_back({relabel(g.object_id), g.target});
    for (const auto& [id, loc] : run.final_world) run_rel.final_world[relabel(id)] = loc;

    RecordScores moved = score_run(run_rel, rel);
    CHECK(moved.iou == doctest::Approx(base.iou));
    CHECK(moved.iou_m == doctest::Approx(base.iou_m));
    CHECK(moved.subject == doctest::Approx(base.subject));
    CHECK(moved.predicate == doctest::Approx(base.predicate));
    CHECK(moved.placement == doctest::Approx(base.placement));
  }
}

TEST_CASE("metric report serialization is stable") {
  MetricReport rep;
  rep.overall = {0.5, 0.25, 1.0, 0.5, 0.5, 0.5, 0.25, 4};
  rep.buckets["single_simple"] = rep.overall;
  std::string a = report_json(rep);
  std::string b = report_json(rep);
  CHECK(a == b);
  CHECK(a.find("\"iou\": 0.5") != std::string::npos);
  std::string table = report_table(rep);
  CHECK(table.find("single_simple") != std::string::npos);
}

TEST_CASE("generalization curve shapes and counts") {
  auto records = small_dataset(99, 4);
  Models models = demo_models(17, records);
  GeneralizationCurves curves = generalization_suite(models, 5, 3, 3, 4, 1, 2);
  REQUIRE(curves.by_objects.size() == 2);
  REQUIRE(curves.by_steps.size() == 2);
  for (const auto& p : curves.by_objects) {
    CHECK(p.count == 3);
    CHECK(p.ci_low <= p.iou_m);
    CHECK(p.ci_high >= p.iou_m);
  }
  write_curves_csv("te_curves.csv", curves);
  std::ifstream in("te_curves.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "curve,x,iou_m,count,ci_low,ci_high");
  std::remove("te_curves.csv");
}
