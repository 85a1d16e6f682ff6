#include "manip/pipeline.hpp"

#include <cmath>

namespace manip::pipeline {

using blocksworld::Scene;
using blocksworld::WorldState;
using mpdsl::NodeKind;
using mpdsl::NodePtr;

tc::ParamRegistry Models::registry() {
  tc::ParamRegistry reg;
  ce.register_params(reg);
  am.register_params(reg);
  parser.register_params(reg);
  splitter.register_params(reg);
  return reg;
}

Models make_models(const std::vector<std::vector<instgen::Token>>& vocab_corpus,
                   std::uint64_t seed) {
  Rng rng(seed);
  Models m{
      langreason::Vocab::build(vocab_corpus),
      visreason::make_concept_embeddings(rng),
      actsim::make_action_model(rng),
      langreason::ParserModel{},
      langreason::SplitterModel{},
  };
  m.parser = langreason::make_parser(m.vocab, mpdsl::full_lexicon_config(2, true), rng);
  m.splitter = langreason::make_splitter(m.vocab, rng);
  return m;
}

void save_models(const std::string& checkpoint_path, Models& models,
                 const std::vector<std::pair<std::string, std::string>>& meta) {
  tc::ParamRegistry reg = models.registry();
  tc::save_checkpoint(checkpoint_path, reg, meta);
}

void load_models(const std::string& checkpoint_path, Models& models) {
  tc::ParamRegistry reg = models.registry();
  tc::load_checkpoint(checkpoint_path, reg);
}

// ---------------------------------------------------------------------------
// soft execution

SoftWorld make_soft_world(tc::Tape& tape, const Scene& scene) {
  SoftWorld w;
  w.symbolic = &scene;
  for (const auto& o : scene.objects) {
    w.ids.push_back(o.id);
    w.locs.push_back(tape.leaf({o.loc.x1, o.loc.y1, o.loc.x2, o.loc.y2, o.loc.d}));
    w.features.push_back(tape.leaf(o.feature));
  }
  return w;
}

namespace {

visreason::SceneCtx ctx_from_world(const SoftWorld& world) {
  visreason::SceneCtx ctx;
  ctx.features = world.features;
  ctx.locs = world.locs;
  ctx.ids = world.ids;
  ctx.symbolic = world.symbolic;
  return ctx;
}

tc::Value geometry_node(tc::Tape& tape, tc::Value loc) {
  tc::Value x1 = tape.slice(loc, 0, 1);
  tc::Value y1 = tape.slice(loc, 1, 1);
  tc::Value x2 = tape.slice(loc, 2, 1);
  tc::Value y2 = tape.slice(loc, 3, 1);
  tc::Value d = tape.slice(loc, 4, 1);
  tc::Value cx = tape.scale(tape.add(x1, x2), 0.5);
  tc::Value cy = tape.scale(tape.add(y1, y2), 0.5);
  tc::Value w = tape.sub(x2, x1);
  tc::Value h = tape.sub(y2, y1);
  return tape.concat({cx, cy, w, h, d, tape.div(w, h)});
}

}  // namespace

tc::Value expected_loc(tc::Tape& tape, const SoftWorld& world, tc::Value soft_att) {
  tc::Value acc = tape.scale_by(world.locs[0], tape.slice(soft_att, 0, 1));
  for (std::size_t i = 1; i < world.locs.size(); ++i) {
    acc = tape.add(acc, tape.scale_by(world.locs[i], tape.slice(soft_att, i, 1)));
  }
  return acc;
}

void soft_apply_move(tc::Tape& tape, SoftWorld& world, actsim::ActionModel& am, Act act,
                     tc::Value subject_soft, tc::Value reference_soft) {
  tc::Value subj_loc = expected_loc(tape, world, subject_soft);
  tc::Value ref_loc = expected_loc(tape, world, reference_soft);
  tc::Value target = actsim::simulate_node(tape, am, act, subj_loc, ref_loc);
  for (std::size_t i = 0; i < world.locs.size(); ++i) {
    tc::Value s_i = tape.slice(subject_soft, i, 1);
    tc::Value blended =
        tape.add(world.locs[i], tape.scale_by(tape.sub(target, world.locs[i]), s_i));
    world.locs[i] = blended;
    // appearance entries persist; geometry follows the blended location
    world.features[i] = tape.concat(
        {tape.slice(world.features[i], 0, blocksworld::kGeometryOffset),
         geometry_node(tape, blended)});
  }
}

SoftExecResult soft_execute(tc::Tape& tape, const mpdsl::ManipulationProgram& program,
                            const Scene& scene, visreason::ConceptEmbeddings& ce,
                            actsim::ActionModel& am) {
  mpdsl::typecheck(program);
  SoftWorld world = make_soft_world(tape, scene);
  visreason::LearnedScorer scorer(ce);
  visreason::VisualConfig train_cfg = ce.cfg.training_view();
  for (const NodePtr& step : program.steps) {
    if (step->kind == NodeKind::Idle) continue;
    visreason::SceneCtx ctx = ctx_from_world(world);
    visreason::ArgEval subject = visreason::eval_obj(tape, step->subject, ctx, scorer, train_cfg);
    visreason::ArgEval reference =
        visreason::eval_obj(tape, step->reference, ctx, scorer, train_cfg);
    soft_apply_move(tape, world, am, step->act, subject.soft, reference.soft);
  }
  return {world.ids, world.locs};
}

// ---------------------------------------------------------------------------
// loss

tc::Value iou_node(tc::Tape& tape, tc::Value a, tc::Value b) {
  auto coord = [&](tc::Value v, std::size_t k) { return tape.slice(v, k, 1); };
  tc::Value zero = tape.leaf(0.0);
  tc::Value iw = tape.max_ew(
      tape.sub(tape.min_ew(coord(a, 2), coord(b, 2)), tape.max_ew(coord(a, 0), coord(b, 0))),
      zero);
  tc::Value ih = tape.max_ew(
      tape.sub(tape.min_ew(coord(a, 3), coord(b, 3)), tape.max_ew(coord(a, 1), coord(b, 1))),
      zero);
  tc::Value inter = tape.mul(iw, ih);
  // degenerate predictions clamp to zero area instead of going negative
  tc::Value wa = tape.max_ew(tape.sub(coord(a, 2), coord(a, 0)), zero);
  tc::Value ha = tape.max_ew(tape.sub(coord(a, 3), coord(a, 1)), zero);
  tc::Value wb = tape.max_ew(tape.sub(coord(b, 2), coord(b, 0)), zero);
  tc::Value hb = tape.max_ew(tape.sub(coord(b, 3), coord(b, 1)), zero);
  tc::Value uni = tape.sub(tape.add(tape.mul(wa, ha), tape.mul(wb, hb)), inter);
  return tape.div(inter, tape.add_const(uni, 1e-12));
}

tc::Value loss_act_node(tc::Tape& tape, const std::vector<int>& ids,
                        const std::vector<tc::Value>& pred_locs, const WorldState& gold,
                        const LossConfig& cfg) {
  if (ids.size() != gold.size()) throw data_error("loss_act: id sets differ in size");
  tc::Value total = tape.leaf(0.0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = gold.find(ids[i]);
    if (it == gold.end()) {
      throw data_error("loss_act: gold world missing id " + std::to_string(ids[i]));
    }
    const auto& g = it->second;
    tc::Value gold_loc = tape.leaf({g.x1, g.y1, g.x2, g.y2, g.d});
    tc::Value diff = tape.sub(pred_locs[i], gold_loc);
    tc::Value dist = cfg.norm == LossNorm::L1 ? tape.sum(tape.abs(diff))
                                              : tape.sqrt(tape.add_const(tape.dot(diff, diff),
                                                                         1e-18));
    total = tape.add(total, dist);
    if (cfg.beta != 0.0) {
      tc::Value one_minus_iou =
          tape.add_const(tape.neg(iou_node(tape, pred_locs[i], gold_loc)), 1.0);
      total = tape.add(total, tape.scale(one_minus_iou, cfg.beta));
    }
  }
  return total;
}

double loss_act(const WorldState& pred, const WorldState& gold, const LossConfig& cfg) {
  if (pred.size() != gold.size()) throw data_error("loss_act: id sets differ in size");
  tc::Tape tape;
  std::vector<int> ids;
  std::vector<tc::Value> locs;
  for (const auto& [id, loc] : pred) {
    ids.push_back(id);
    locs.push_back(tape.leaf({loc.x1, loc.y1, loc.x2, loc.y2, loc.d}));
  }
  return tape.scalar(loss_act_node(tape, ids, locs, gold, cfg));
}

// ---------------------------------------------------------------------------
// hard pipeline

HardRun run_hard_program(Models& models, const mpdsl::ManipulationProgram& program,
                         const Scene& scene, std::vector<visreason::TraceEntry>* trace) {
  HardRun out;
  out.program = program;
  visreason::LearnedScorer scorer(models.ce);
  out.grounded = visreason::ground(program, scene, scorer, models.ce.cfg,
                                   actsim::simulator_fn(models.am), trace);
  auto [subgoals, world] =
      actsim::execute_program(models.am, out.grounded, blocksworld::world_of(scene));
  out.subgoals = std::move(subgoals);
  out.final_world = std::move(world);
  return out;
}

HardRun run_hard(Models& models, const std::string& instruction, const Scene& scene,
                 std::vector<visreason::TraceEntry>* trace) {
  mpdsl::ManipulationProgram program =
      langreason::infer_program(models.splitter, models.parser, instruction);
  return run_hard_program(models, program, scene, trace);
}

}  // namespace manip::pipeline
