#include "manip/visreason.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace manip::visreason {

using blocksworld::Scene;
using mpdsl::NodeKind;
using mpdsl::NodePtr;

void ConceptEmbeddings::register_object_params(tc::ParamRegistry& reg) {
  reg.add(concept_emb);
  reg.add(proj_color);
  reg.add(proj_shape);
}

void ConceptEmbeddings::register_relational_params(tc::ParamRegistry& reg) {
  for (auto& net : rel_nets) reg.add(net);
}

void ConceptEmbeddings::register_params(tc::ParamRegistry& reg) {
  register_object_params(reg);
  register_relational_params(reg);
}

ConceptEmbeddings make_concept_embeddings(Rng& rng, const VisualConfig& cfg) {
  ConceptEmbeddings ce;
  ce.cfg = cfg;
  ce.concept_emb = tc::make_embedding("visreason.concept_emb", kNumObjectConcepts, cfg.embed_dim,
                                      rng);
  ce.proj_color = tc::make_param("visreason.proj_color", {cfg.embed_dim, blocksworld::kFeatureDim});
  ce.proj_shape = tc::make_param("visreason.proj_shape", {cfg.embed_dim, blocksworld::kFeatureDim});
  double bound = std::sqrt(6.0 / (cfg.embed_dim + blocksworld::kFeatureDim));
  for (double& v : ce.proj_color.value) v = rng.uniform(-bound, bound);
  for (double& v : ce.proj_shape.value) v = rng.uniform(-bound, bound);
  for (std::size_t r = 0; r < kNumRels; ++r) {
    ce.rel_nets.push_back(tc::make_dense("visreason.rel_" + std::string(kRelNames[r]),
                                         {7, cfg.rel_hidden, 1},
                                         {tc::Activation::Tanh, tc::Activation::Identity}, rng));
  }
  return ce;
}

std::size_t SceneCtx::pos_of(int id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return i;
  }
  throw data_error("SceneCtx: unknown object id " + std::to_string(id));
}

SceneCtx make_ctx(tc::Tape& tape, const Scene& scene) {
  SceneCtx ctx;
  ctx.symbolic = &scene;
  for (const auto& o : scene.objects) {
    ctx.features.push_back(tape.leaf(o.feature));
    ctx.locs.push_back(tape.leaf({o.loc.x1, o.loc.y1, o.loc.x2, o.loc.y2, o.loc.d}));
    ctx.ids.push_back(o.id);
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// scorers

tc::Value LearnedScorer::concept_prob(tc::Tape& tape, const SceneCtx& ctx, std::size_t pos,
                                      std::size_t concept_idx) {
  if (concept_idx >= kNumObjectConcepts) throw data_error("concept_prob: unknown concept index");
  const VisualConfig& cfg = ce_.cfg;
  bool is_color = object_concept_is_color(concept_idx);

  auto key = std::make_pair(pos, is_color);
  auto it = ctx.proj_cache.find(key);
  tc::Value proj;
  if (it != ctx.proj_cache.end()) {
    proj = it->second;
  } else {
    tc::Parameter& pm = is_color ? ce_.proj_color : ce_.proj_shape;
    proj = tape.matvec(tape.param(pm), cfg.embed_dim, blocksworld::kFeatureDim,
                       ctx.features[pos]);
    ctx.proj_cache.emplace(key, proj);
  }

  tc::Value emb = tape.slice(tape.param(ce_.concept_emb.table), concept_idx * cfg.embed_dim,
                             cfg.embed_dim);
  tc::Value dot = tape.dot(proj, emb);
  tc::Value na = tape.sqrt(tape.dot(proj, proj));
  tc::Value nb = tape.sqrt(tape.dot(emb, emb));
  tc::Value cos = tape.div(dot, tape.add_const(tape.mul(na, nb), 1e-12));
  return tape.sigmoid(tape.scale(tape.add_const(cos, -cfg.gamma), 1.0 / cfg.tau));
}

tc::Value LearnedScorer::rel_score(tc::Tape& tape, const SceneCtx& ctx, std::size_t pos_i,
                                   std::size_t pos_j, Rel rel) {
  std::size_t r = static_cast<std::size_t>(rel);
  if (r >= ce_.rel_nets.size()) throw data_error("rel_score: unknown relation");
  tc::Value li = ctx.locs[pos_i];
  tc::Value lj = ctx.locs[pos_j];
  auto cx = [&](tc::Value l) {
    return tape.scale(tape.add(tape.slice(l, 0, 1), tape.slice(l, 2, 1)), 0.5);
  };
  auto cy = [&](tc::Value l) {
    return tape.scale(tape.add(tape.slice(l, 1, 1), tape.slice(l, 3, 1)), 0.5);
  };
  auto wd = [&](tc::Value l) { return tape.sub(tape.slice(l, 2, 1), tape.slice(l, 0, 1)); };
  auto ht = [&](tc::Value l) { return tape.sub(tape.slice(l, 3, 1), tape.slice(l, 1, 1)); };

  tc::Value in = tape.concat({tape.sub(cx(li), cx(lj)), tape.sub(cy(li), cy(lj)),
                              tape.sub(tape.slice(li, 4, 1), tape.slice(lj, 4, 1)), wd(li), ht(li),
                              wd(lj), ht(lj)});
  return tape.sigmoid(tc::forward(tape, ce_.rel_nets[r], in));
}

tc::Value OracleScorer::concept_prob(tc::Tape& tape, const SceneCtx& ctx, std::size_t pos,
                                     std::size_t concept_idx) {
  if (!ctx.symbolic) throw logic_error("OracleScorer needs a symbolic scene in the ctx");
  if (concept_idx >= kNumObjectConcepts) throw data_error("concept_prob: unknown concept index");
  const auto& o = ctx.symbolic->by_id(ctx.ids[pos]);
  bool has = object_concept_is_color(concept_idx)
                 ? object_concept_index(o.color) == concept_idx
                 : object_concept_index(o.shape) == concept_idx;
  return tape.leaf(has ? 1.0 : 0.0);
}

tc::Value OracleScorer::rel_score(tc::Tape& tape, const SceneCtx& ctx, std::size_t pos_i,
                                  std::size_t pos_j, Rel rel) {
  // relations read the current locations, which track world updates
  const double* a = tape.data(ctx.locs[pos_i]);
  const double* b = tape.data(ctx.locs[pos_j]);
  blocksworld::Location la{a[0], a[1], a[2], a[3], a[4]};
  blocksworld::Location lb{b[0], b[1], b[2], b[3], b[4]};
  return tape.leaf(blocksworld::gold_relation(rel, la, lb) ? 1.0 : 0.0);
}

// ---------------------------------------------------------------------------
// executor primitives

tc::Value exec_scene(tc::Tape& tape, std::size_t n) {
  return tape.leaf(std::vector<double>(n, 1.0));
}

tc::Value exec_filter(tc::Tape& tape, tc::Value att, std::size_t concept_idx, const SceneCtx& ctx,
                      Scorer& scorer) {
  if (tape.len(att) != ctx.size()) throw data_error("exec_filter: attention length mismatch");
  std::vector<tc::Value> probs;
  probs.reserve(ctx.size());
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    probs.push_back(scorer.concept_prob(tape, ctx, i, concept_idx));
  }
  return tape.min_ew(att, tape.concat(probs));
}

UniqueResult exec_unique(tc::Tape& tape, tc::Value att, const SceneCtx& ctx,
                         const VisualConfig& cfg) {
  if (tape.len(att) < 1) throw data_error("exec_unique: empty attention");
  UniqueResult out;
  out.soft = tape.softmax(
      tape.scale(tape.log(tape.add_const(att, cfg.epsilon)), 1.0 / cfg.tau_unique));
  const double* a = tape.data(att);
  std::size_t best = 0;
  for (std::size_t i = 1; i < tape.len(att); ++i) {
    // strict max; ties keep the lower id
    if (a[i] > a[best] || (a[i] == a[best] && ctx.ids[i] < ctx.ids[best])) best = i;
  }
  out.hard_pos = static_cast<int>(best);
  out.hard_id = ctx.ids[best];
  return out;
}

tc::Value exec_relate(tc::Tape& tape, tc::Value subject_soft, Rel rel, const SceneCtx& ctx,
                      Scorer& scorer) {
  std::size_t n = ctx.size();
  if (tape.len(subject_soft) != n) throw data_error("exec_relate: attention length mismatch");
  std::vector<tc::Value> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<tc::Value> row;
    row.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
      // no self-relation
      row.push_back(i == j ? tape.leaf(0.0) : scorer.rel_score(tape, ctx, i, j, rel));
    }
    rows.push_back(tape.dot(subject_soft, tape.concat(row)));
  }
  return tape.clamp(tape.concat(rows), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// tree evaluation

tc::Value eval_objset(tc::Tape& tape, const NodePtr& node, const SceneCtx& ctx, Scorer& scorer,
                      const VisualConfig& cfg, int step, std::vector<TraceEntry>* trace) {
  tc::Value out;
  switch (node->kind) {
    case NodeKind::SceneAll:
      out = exec_scene(tape, ctx.size());
      break;
    case NodeKind::Filter: {
      tc::Value child = eval_objset(tape, node->child, ctx, scorer, cfg, step, trace);
      out = exec_filter(tape, child, node->concept_idx, ctx, scorer);
      break;
    }
    case NodeKind::Relate: {
      ArgEval subject = eval_obj(tape, node->child, ctx, scorer, cfg, step, trace);
      out = exec_relate(tape, subject.soft, node->rel, ctx, scorer);
      break;
    }
    default:
      throw data_error("eval_objset: node is not ObjSet-typed: " + mpdsl::to_sexpr(node));
  }
  if (trace) trace->push_back({step, mpdsl::to_sexpr(node), tape.to_vector(out)});
  return out;
}

ArgEval eval_obj(tc::Tape& tape, const NodePtr& node, const SceneCtx& ctx, Scorer& scorer,
                 const VisualConfig& cfg, int step, std::vector<TraceEntry>* trace) {
  if (node->kind != NodeKind::Unique) {
    throw data_error("eval_obj: node is not a Unique: " + mpdsl::to_sexpr(node));
  }
  tc::Value att = eval_objset(tape, node->child, ctx, scorer, cfg, step, trace);
  UniqueResult u = exec_unique(tape, att, ctx, cfg);
  if (trace) trace->push_back({step, mpdsl::to_sexpr(node), tape.to_vector(u.soft)});
  return {u.soft, u.hard_pos, u.hard_id};
}

// ---------------------------------------------------------------------------
// grounding with hard world threading

GroundedProgram ground(const mpdsl::ManipulationProgram& program, const Scene& scene,
                       Scorer& scorer, const VisualConfig& cfg, const ActionFn& action_fn,
                       std::vector<TraceEntry>* trace) {
  mpdsl::typecheck(program);
  GroundedProgram out;
  Scene cur = scene;
  for (std::size_t s = 0; s < program.steps.size(); ++s) {
    const NodePtr& step = program.steps[s];
    if (step->kind == NodeKind::Idle) {
      GroundedStep g;
      g.is_idle = true;
      out.steps.push_back(g);
      continue;
    }
    tc::Tape tape;
    SceneCtx ctx = make_ctx(tape, cur);
    ArgEval subject = eval_obj(tape, step->subject, ctx, scorer, cfg, static_cast<int>(s), trace);
    ArgEval reference =
        eval_obj(tape, step->reference, ctx, scorer, cfg, static_cast<int>(s), trace);

    GroundedStep g;
    g.act = step->act;
    g.subject = {AttentionVector{tape.to_vector(subject.soft)}, subject.hard_id};
    g.reference = {AttentionVector{tape.to_vector(reference.soft)}, reference.hard_id};
    out.steps.push_back(g);

    blocksworld::WorldState world = blocksworld::world_of(cur);
    world[subject.hard_id] =
        action_fn(step->act, world.at(subject.hard_id), world.at(reference.hard_id));
    cur = blocksworld::with_world(cur, world);
  }
  return out;
}

void write_trace(const std::string& path, const std::vector<TraceEntry>& trace) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open trace file for writing: " + path);
  for (const auto& e : trace) {
    nlohmann::json j = {{"step", e.step}, {"node", e.node}, {"att", e.att}};
    out << j.dump() << "\n";
  }
}

}  // namespace manip::visreason
