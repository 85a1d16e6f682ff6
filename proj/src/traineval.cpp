#include "manip/traineval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace manip::traineval {

using blocksworld::Location;
using blocksworld::Scene;
using blocksworld::WorldState;
using instgen::DatasetRecord;
using mpdsl::NodeKind;
using mpdsl::NodePtr;

std::vector<double> advantages(const std::vector<double>& rewards) {
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back(r - mean);
  return out;
}

tc::Value reinforce_surrogate(tc::Tape& tape, const std::vector<tc::Value>& log_probs,
                              const std::vector<double>& rewards) {
  if (log_probs.size() != rewards.size() || log_probs.size() < 2) {
    throw data_error("reinforce_surrogate: need at least two sampled log-probs");
  }
  std::vector<double> adv = advantages(rewards);
  double scale = 1.0 / static_cast<double>(rewards.size() - 1);
  tc::Value total = tape.leaf(0.0);
  for (std::size_t k = 0; k < adv.size(); ++k) {
    total = tape.add(total, tape.scale(tape.neg(log_probs[k]), adv[k] * scale));
  }
  return total;
}

// ---------------------------------------------------------------------------
// plain-double fast path for the enumeration reward grid. Mirrors the tape
// semantics op for op; test_traineval pins the two paths together.

namespace {

struct PlainEval {
  const Scene& scene;
  Models& models;
  std::size_t n;
  std::vector<std::array<double, 5>> locs;
  std::vector<std::vector<double>> features;
  // concept probs cache: [concept][object]
  std::vector<std::vector<double>> concept_probs;

  PlainEval(const Scene& s, Models& m) : scene(s), models(m), n(s.size()) {
    for (const auto& o : s.objects) {
      locs.push_back({o.loc.x1, o.loc.y1, o.loc.x2, o.loc.y2, o.loc.d});
      features.push_back(o.feature);
    }
    concept_probs.assign(kNumObjectConcepts, {});
  }

  static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

  const std::vector<double>& probs_for(std::size_t concept_idx) {
    auto& cache = concept_probs[concept_idx];
    if (!cache.empty()) return cache;
    const auto& cfg = models.ce.cfg;
    bool is_color = object_concept_is_color(concept_idx);
    const tc::Parameter& proj = is_color ? models.ce.proj_color : models.ce.proj_shape;
    const tc::Parameter& table = models.ce.concept_emb.table;
    cache.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> p(cfg.embed_dim, 0.0);
      for (std::size_t r = 0; r < cfg.embed_dim; ++r) {
        double acc = 0.0;
        const double* row = proj.value.data() + r * blocksworld::kFeatureDim;
        for (std::size_t c = 0; c < blocksworld::kFeatureDim; ++c) {
          acc += row[c] * features[i][c];
        }
        p[r] = acc;
      }
      const double* emb = table.value.data() + concept_idx * cfg.embed_dim;
      double dot = 0, na = 0, nb = 0;
      for (std::size_t k = 0; k < cfg.embed_dim; ++k) {
        dot += p[k] * emb[k];
        na += p[k] * p[k];
        nb += emb[k] * emb[k];
      }
      double cos = dot / (std::sqrt(na) * std::sqrt(nb) + 1e-12);
      cache[i] = sigmoid((cos - cfg.gamma) / cfg.tau);
    }
    return cache;
  }

  double rel_score(std::size_t i, std::size_t j, Rel rel) {
    const auto& net = models.ce.rel_nets[static_cast<std::size_t>(rel)];
    const auto& a = locs[i];
    const auto& b = locs[j];
    double in[7] = {0.5 * (a[0] + a[2]) - 0.5 * (b[0] + b[2]),
                    0.5 * (a[1] + a[3]) - 0.5 * (b[1] + b[3]),
                    a[4] - b[4],
                    a[2] - a[0],
                    a[3] - a[1],
                    b[2] - b[0],
                    b[3] - b[1]};
    return sigmoid(dense_forward(net, in, 7));
  }

  // straight dense forward returning the single output (nets used here end
  // in one unit) or filling `out5`
  double dense_forward(const tc::DenseNet& net, const double* in, std::size_t len,
                       double* out5 = nullptr) {
    std::vector<double> cur(in, in + len);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      std::size_t rows = net.widths[l + 1], cols = net.widths[l];
      std::vector<double> nxt(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = net.biases[l].value[r];
        const double* row = net.weights[l].value.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * cur[c];
        nxt[r] = net.activations[l] == tc::Activation::Tanh
                     ? std::tanh(acc)
                     : (net.activations[l] == tc::Activation::Relu ? std::max(0.0, acc) : acc);
      }
      cur = std::move(nxt);
    }
    if (out5) {
      for (std::size_t k = 0; k < cur.size() && k < 5; ++k) out5[k] = cur[k];
      return 0.0;
    }
    return cur[0];
  }

  std::vector<double> eval_objset(const NodePtr& node) {
    switch (node->kind) {
      case NodeKind::SceneAll:
        return std::vector<double>(n, 1.0);
      case NodeKind::Filter: {
        std::vector<double> att = eval_objset(node->child);
        const auto& probs = probs_for(node->concept_idx);
        for (std::size_t i = 0; i < n; ++i) att[i] = std::min(att[i], probs[i]);
        return att;
      }
      case NodeKind::Relate: {
        std::vector<double> subject = unique_soft(eval_objset(node->child->child));
        std::vector<double> out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            acc += subject[j] * rel_score(i, j, node->rel);
          }
          out[i] = std::min(1.0, std::max(0.0, acc));
        }
        return out;
      }
      default:
        throw logic_error("reward grid: unexpected node kind");
    }
  }

  std::vector<double> unique_soft(const std::vector<double>& att) {
    // mirrors the training view of the Unique temperature
    const auto cfg = models.ce.cfg.training_view();
    std::vector<double> logits(n);
    for (std::size_t i = 0; i < n; ++i) logits[i] = std::log(att[i] + cfg.epsilon) / cfg.tau_unique;
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::exp(logits[i] - mx);
      z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
  }
};

double plain_iou_term(const double* a, const double* b) {
  double iw = std::max(std::min(a[2], b[2]) - std::max(a[0], b[0]), 0.0);
  double ih = std::max(std::min(a[3], b[3]) - std::max(a[1], b[1]), 0.0);
  double inter = iw * ih;
  double wa = std::max(a[2] - a[0], 0.0), ha = std::max(a[3] - a[1], 0.0);
  double wb = std::max(b[2] - b[0], 0.0), hb = std::max(b[3] - b[1], 0.0);
  double uni = wa * ha + wb * hb - inter;
  return inter / (uni + 1e-12);
}

}  // namespace

EnumRewardGrid build_reward_grid(const DatasetRecord& record, Models& models,
                                 const mpdsl::EnumConfig& space, const LossConfig& loss) {
  EnumRewardGrid grid;
  grid.acts = space.acts;
  grid.forms = mpdsl::enumerate_argument_forms(space);

  PlainEval ev(record.scene_initial, models);
  std::size_t n = ev.n;
  std::size_t nf = grid.forms.size();

  // per-form soft attentions and expected locations
  std::vector<std::vector<double>> softs(nf);
  std::vector<std::array<double, 5>> elocs(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    softs[f] = ev.unique_soft(ev.eval_objset(grid.forms[f]->child));
    std::array<double, 5> e{};
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < 5; ++k) e[k] += softs[f][i] * ev.locs[i][k];
    }
    elocs[f] = e;
  }

  std::vector<std::array<double, 5>> gold(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = record.scene_final.by_id(record.scene_initial.objects[i].id).loc;
    gold[i] = {g.x1, g.y1, g.x2, g.y2, g.d};
  }

  const auto& net = models.am.net;
  std::size_t emb_dim = models.am.cfg.embed_dim;
  std::size_t h1 = net.widths[1];
  // first layer decomposed over the three input blocks
  auto block_pre = [&](std::size_t col0, const double* x, std::size_t len) {
    std::vector<double> pre(h1, 0.0);
    for (std::size_t r = 0; r < h1; ++r) {
      const double* row = net.weights[0].value.data() + r * net.widths[0];
      double acc = 0.0;
      for (std::size_t c = 0; c < len; ++c) acc += row[col0 + c] * x[c];
      pre[r] = acc;
    }
    return pre;
  };
  std::vector<std::vector<double>> pre_act(grid.acts.size());
  for (std::size_t a = 0; a < grid.acts.size(); ++a) {
    const double* emb = models.am.act_emb.table.value.data() +
                        static_cast<std::size_t>(grid.acts[a]) * emb_dim;
    pre_act[a] = block_pre(0, emb, emb_dim);
  }
  std::vector<std::vector<double>> pre_subj(nf), pre_ref(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    pre_subj[f] = block_pre(emb_dim, elocs[f].data(), 5);
    pre_ref[f] = block_pre(emb_dim + 5, elocs[f].data(), 5);
  }

  grid.rewards.resize(grid.acts.size() * nf * nf);
  std::size_t h2 = net.widths[2];
  std::vector<double> hid1(h1), hid2(h2);
  double target[5];
  for (std::size_t a = 0; a < grid.acts.size(); ++a) {
    for (std::size_t s = 0; s < nf; ++s) {
      for (std::size_t r = 0; r < nf; ++r) {
        for (std::size_t k = 0; k < h1; ++k) {
          hid1[k] = std::tanh(pre_act[a][k] + pre_subj[s][k] + pre_ref[r][k] +
                              net.biases[0].value[k]);
        }
        for (std::size_t k = 0; k < h2; ++k) {
          const double* row = net.weights[1].value.data() + k * h1;
          double acc = net.biases[1].value[k];
          for (std::size_t c = 0; c < h1; ++c) acc += row[c] * hid1[c];
          hid2[k] = std::tanh(acc);
        }
        for (std::size_t k = 0; k < 5; ++k) {
          const double* row = net.weights[2].value.data() + k * h2;
          double acc = net.biases[2].value[k];
          for (std::size_t c = 0; c < h2; ++c) acc += row[c] * hid2[c];
          target[k] = PlainEval::sigmoid(acc);
        }
        // soft world blend + L_act
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double w = softs[s][i];
          double pred[5];
          for (std::size_t k = 0; k < 5; ++k) {
            pred[k] = ev.locs[i][k] + w * (target[k] - ev.locs[i][k]);
          }
          double dist = 0.0;
          if (loss.norm == pipeline::LossNorm::L1) {
            for (std::size_t k = 0; k < 5; ++k) dist += std::fabs(pred[k] - gold[i][k]);
          } else {
            double acc = 0.0;
            for (std::size_t k = 0; k < 5; ++k) {
              acc += (pred[k] - gold[i][k]) * (pred[k] - gold[i][k]);
            }
            dist = std::sqrt(acc + 1e-18);
          }
          total += dist + loss.beta * (1.0 - plain_iou_term(pred, gold[i].data()));
        }
        grid.rewards[(a * nf + s) * nf + r] = -total;
      }
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// training steps

namespace {

WorldState gold_world(const DatasetRecord& rec) { return blocksworld::world_of(rec.scene_final); }

struct ExampleTapes {
  tc::Tape tape;  // parser + soft execution graph for this example
};

}  // namespace

StepStats reinforce_step(Models& models, const std::vector<const DatasetRecord*>& batch,
                         const TrainConfig& cfg, ReinforceMode mode, tc::Optimizer& opt,
                         Rng& rng) {
  if (cfg.n_samples < 2 && mode == ReinforceMode::Sample) {
    throw usage_error("reinforce_step: n_samples must be at least 2");
  }
  StepStats stats;
  double batch_scale = 1.0 / static_cast<double>(batch.size());

  for (const DatasetRecord* rec : batch) {
    auto tokens = instgen::lex(rec->instruction);
    mpdsl::EnumConfig space = langreason::instruction_space(tokens, models.parser.space);
    tc::Tape tape;
    tc::Value h_enc = langreason::encode_tokens(tape, models.parser, tokens, 0, tokens.size());
    WorldState gw = gold_world(*rec);

    // sampled decodes: loss backprop for the visual/action modules, and the
    // surrogate in sampling mode
    std::vector<tc::Value> log_probs;
    std::vector<double> rewards;
    std::vector<tc::Value> losses;
    for (std::size_t k = 0; k < cfg.n_samples; ++k) {
      langreason::ParseGraph g = langreason::decode_move(
          tape, models.parser, h_enc, space, langreason::DecodeMode::Sample, &rng);
      if (g.truncated) {
        ++stats.truncated;
        continue;
      }
      pipeline::SoftExecResult ex = pipeline::soft_execute(
          tape, mpdsl::single_step(g.node), rec->scene_initial, models.ce, models.am);
      tc::Value L = pipeline::loss_act_node(tape, ex.ids, ex.final_locs, gw, cfg.loss);
      log_probs.push_back(g.log_prob);
      rewards.push_back(-tape.scalar(L));
      losses.push_back(L);
    }
    if (losses.empty()) {
      ++stats.skipped;
      continue;
    }

    tc::Value mean_loss = losses[0];
    for (std::size_t k = 1; k < losses.size(); ++k) mean_loss = tape.add(mean_loss, losses[k]);
    mean_loss = tape.scale(mean_loss, 1.0 / static_cast<double>(losses.size()));

    tc::Value example_loss = mean_loss;
    if (mode == ReinforceMode::Sample) {
      if (log_probs.size() >= 2) {
        example_loss = tape.add(example_loss, reinforce_surrogate(tape, log_probs, rewards));
      }
    } else {
      // exact expectation over the decoder's whole (keyword-restricted)
      // space: the modules train on sum_k q_k L_k and the parser on
      // sum_k q_k (r_k - mu) (-log q_k)
      langreason::EnumParse ep = langreason::enumerate_parse(tape, models.parser, h_enc, space);
      std::size_t na = ep.acts.size(), nf = ep.forms.size();

      visreason::LearnedScorer scorer(models.ce);
      visreason::VisualConfig train_cfg = models.ce.cfg.training_view();
      pipeline::SoftWorld world = pipeline::make_soft_world(tape, rec->scene_initial);
      visreason::SceneCtx ctx;
      ctx.features = world.features;
      ctx.locs = world.locs;
      ctx.ids = world.ids;
      ctx.symbolic = world.symbolic;
      std::vector<tc::Value> softs(nf), elocs(nf);
      for (std::size_t f = 0; f < nf; ++f) {
        softs[f] = visreason::eval_obj(tape, ep.forms[f], ctx, scorer, train_cfg).soft;
        elocs[f] = pipeline::expected_loc(tape, world, softs[f]);
      }

      std::vector<double> act_p(na);
      std::vector<std::vector<double>> subj_p(na), ref_p(na);
      for (std::size_t a = 0; a < na; ++a) {
        act_p[a] = std::exp(tape.scalar(ep.act_lp[a]));
        subj_p[a].resize(nf);
        ref_p[a].resize(nf);
        for (std::size_t f = 0; f < nf; ++f) {
          subj_p[a][f] = std::exp(tape.scalar(ep.subj_lp[a][f]));
          ref_p[a][f] = std::exp(tape.scalar(ep.ref_lp[a][f]));
        }
      }

      std::vector<double> program_rewards(na * nf * nf);
      tc::Value expected_L = tape.leaf(0.0);
      for (std::size_t a = 0; a < na; ++a) {
        for (std::size_t s = 0; s < nf; ++s) {
          for (std::size_t r = 0; r < nf; ++r) {
            tc::Value target =
                actsim::simulate_node(tape, models.am, ep.acts[a], elocs[s], elocs[r]);
            std::vector<tc::Value> pred(world.locs.size());
            for (std::size_t i = 0; i < world.locs.size(); ++i) {
              tc::Value s_i = tape.slice(softs[s], i, 1);
              pred[i] = tape.add(world.locs[i],
                                 tape.scale_by(tape.sub(target, world.locs[i]), s_i));
            }
            tc::Value L = pipeline::loss_act_node(tape, world.ids, pred, gw, cfg.loss);
            double q = act_p[a] * subj_p[a][s] * ref_p[a][r];
            program_rewards[(a * nf + s) * nf + r] = -tape.scalar(L);
            expected_L = tape.add(expected_L, tape.scale(L, q));
          }
        }
      }

      double mu = 0.0;
      for (std::size_t a = 0; a < na; ++a) {
        for (std::size_t s = 0; s < nf; ++s) {
          double qa = act_p[a] * subj_p[a][s];
          for (std::size_t r = 0; r < nf; ++r) {
            mu += qa * ref_p[a][r] * program_rewards[(a * nf + s) * nf + r];
          }
        }
      }
      // factored advantage mass: log q = lp_act + lp_subj + lp_ref
      tc::Value surr = tape.leaf(0.0);
      for (std::size_t a = 0; a < na; ++a) {
        double w_act = 0.0;
        std::vector<double> w_subj(nf, 0.0), w_ref(nf, 0.0);
        for (std::size_t s = 0; s < nf; ++s) {
          for (std::size_t r = 0; r < nf; ++r) {
            double w = act_p[a] * subj_p[a][s] * ref_p[a][r] *
                       (program_rewards[(a * nf + s) * nf + r] - mu);
            w_act += w;
            w_subj[s] += w;
            w_ref[r] += w;
          }
        }
        surr = tape.add(surr, tape.scale(tape.neg(ep.act_lp[a]), w_act));
        for (std::size_t f = 0; f < nf; ++f) {
          surr = tape.add(surr, tape.scale(tape.neg(ep.subj_lp[a][f]), w_subj[f]));
          surr = tape.add(surr, tape.scale(tape.neg(ep.ref_lp[a][f]), w_ref[f]));
        }
      }
      example_loss = tape.add(tape.add(expected_L, surr), tape.scale(mean_loss, 0.0));
    }

    for (double L : rewards) stats.mean_loss -= L;
    stats.samples += rewards.size();
    tape.backward(tape.scale(example_loss, batch_scale));
  }

  if (stats.samples > 0) stats.mean_loss /= static_cast<double>(stats.samples);
  opt.step();
  return stats;
}

StepStats splitter_step(Models& models, const std::vector<const DatasetRecord*>& batch,
                        const TrainConfig& cfg, tc::Optimizer& opt, Rng& rng) {
  StepStats stats;
  double batch_scale = 1.0 / static_cast<double>(batch.size());

  for (const DatasetRecord* rec : batch) {
    auto tokens = instgen::lex(rec->instruction);
    tc::Tape tape;
    WorldState gw = gold_world(*rec);

    // parse cache: segments repeat across segmentation samples
    std::map<std::pair<std::size_t, std::size_t>, NodePtr> parse_cache;
    auto parse_segment = [&](std::size_t lo, std::size_t hi) -> NodePtr {
      auto key = std::make_pair(lo, hi);
      auto it = parse_cache.find(key);
      if (it != parse_cache.end()) return it->second;
      std::vector<instgen::Token> seg(tokens.begin() + static_cast<std::ptrdiff_t>(lo),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(hi));
      langreason::ParseResult r =
          langreason::parse_step(models.parser, seg, langreason::DecodeMode::Argmax);
      NodePtr node = r.truncated ? nullptr : r.node;
      parse_cache.emplace(key, node);
      return node;
    };

    std::vector<tc::Value> log_probs;
    std::vector<double> rewards;
    for (std::size_t k = 0; k < cfg.n_samples; ++k) {
      langreason::SplitSample sample = langreason::split_sample(tape, models.splitter, tokens,
                                                                rng);
      mpdsl::ManipulationProgram program;
      bool ok = true;
      for (const auto& [lo, hi] : sample.segments) {
        NodePtr node = parse_segment(lo, hi);
        if (!node) {
          ok = false;
          break;
        }
        program.steps.push_back(node);
      }
      if (!ok) {
        ++stats.truncated;
        continue;
      }
      // frozen downstream modules: forward-only reward
      tc::Tape scratch;
      pipeline::SoftExecResult ex =
          pipeline::soft_execute(scratch, program, rec->scene_initial, models.ce, models.am);
      tc::Value L = pipeline::loss_act_node(scratch, ex.ids, ex.final_locs, gw, cfg.loss);
      log_probs.push_back(sample.log_prob);
      rewards.push_back(-scratch.scalar(L));
    }
    if (log_probs.size() < 2) {
      ++stats.skipped;
      continue;
    }
    for (double r : rewards) stats.mean_loss -= r;
    stats.samples += rewards.size();
    tape.backward(tape.scale(reinforce_surrogate(tape, log_probs, rewards), batch_scale));
  }

  if (stats.samples > 0) stats.mean_loss /= static_cast<double>(stats.samples);
  opt.step();
  return stats;
}

// ---------------------------------------------------------------------------
// metrics

namespace {

// degenerate predicted boxes earn zero overlap instead of an error
double metric_iou(const Location& pred, const Location& gold) {
  if (!(pred.x1 < pred.x2 && pred.y1 < pred.y2)) return 0.0;
  return blocksworld::iou(pred, gold);
}

}  // namespace

RecordScores score_run(const pipeline::HardRun& run, const DatasetRecord& rec) {
  RecordScores out;
  const WorldState& pred = run.final_world;
  WorldState gold = blocksworld::world_of(rec.scene_final);
  WorldState initial = blocksworld::world_of(rec.scene_initial);

  double iou_sum = 0;
  for (const auto& [id, loc] : gold) iou_sum += metric_iou(pred.at(id), loc);
  out.iou = iou_sum / static_cast<double>(gold.size());

  std::vector<int> moved;
  for (const auto& g : rec.gold_grounding) {
    if (std::find(moved.begin(), moved.end(), g.subject_id) == moved.end()) {
      moved.push_back(g.subject_id);
    }
  }
  double iou_m_sum = 0;
  for (int id : moved) iou_m_sum += metric_iou(pred.at(id), gold.at(id));
  out.iou_m = moved.empty() ? 1.0 : iou_m_sum / static_cast<double>(moved.size());

  // closed world over the predicted program's subjects
  std::vector<int> pred_subjects;
  for (const auto& s : run.grounded.steps) {
    if (!s.is_idle) pred_subjects.push_back(s.subject.hard_id);
  }
  for (const auto& [id, loc] : initial) {
    bool untouched = std::find(pred_subjects.begin(), pred_subjects.end(), id) ==
                     pred_subjects.end();
    if (untouched && !(pred.at(id) == loc)) out.closed_world_ok = false;
  }

  // per-step grounded-program comparison; gold step targets re-derived for
  // the placement metric
  Scene gold_walk = rec.scene_initial;
  std::size_t steps = rec.gold_grounding.size();
  double a_sum = 0, s_sum = 0, p_sum = 0, pl_sum = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    const instgen::GroundedStep& g = rec.gold_grounding[s];
    instgen::GroundedStep check;
    gold_walk = instgen::gold_execute_step(rec.gold_program.steps[s], gold_walk, {}, &check);
    Location gold_target = blocksworld::world_of(gold_walk).at(g.subject_id);

    if (s < run.grounded.steps.size() && !run.grounded.steps[s].is_idle) {
      const auto& p = run.grounded.steps[s];
      if (p.act == g.act) a_sum += 1;
      if (p.subject.hard_id == g.subject_id) s_sum += 1;
      if (p.reference.hard_id == g.reference_id) p_sum += 1;
      if (s < run.subgoals.size()) {
        const Location& t = run.subgoals[s].target;
        double cx = t.cx(), cy = t.cy();
        if (cx >= gold_target.x1 && cx <= gold_target.x2 && cy >= gold_target.y1 &&
            cy <= gold_target.y2) {
          pl_sum += 1;
        }
      }
    }
  }
  double ns = static_cast<double>(steps);
  out.action = a_sum / ns;
  out.subject = s_sum / ns;
  out.predicate = p_sum / ns;
  out.identification = out.subject;
  out.placement = pl_sum / ns;
  return out;
}

namespace {

RecordScores score_record(Models& models, const DatasetRecord& rec) {
  return score_run(pipeline::run_hard(models, rec.instruction, rec.scene_initial), rec);
}

void accumulate(MetricSet& set, const RecordScores& s) {
  set.iou += s.iou;
  set.iou_m += s.iou_m;
  set.program_action += s.action;
  set.program_subject += s.subject;
  set.program_predicate += s.predicate;
  set.identification += s.identification;
  set.placement += s.placement;
  ++set.count;
}

void finalize(MetricSet& set) {
  if (set.count == 0) return;
  double n = static_cast<double>(set.count);
  set.iou /= n;
  set.iou_m /= n;
  set.program_action /= n;
  set.program_subject /= n;
  set.program_predicate /= n;
  set.identification /= n;
  set.placement /= n;
}

std::string bucket_key(const DatasetRecord& rec) {
  std::string steps = rec.n_steps == 1 ? "single" : "double";
  return steps + "_" + (rec.complex_reasoning ? "complex" : "simple");
}

}  // namespace

MetricReport evaluate(Models& models, const std::vector<const DatasetRecord*>& records) {
  MetricReport report;
  for (const DatasetRecord* rec : records) {
    RecordScores s = score_record(models, *rec);
    accumulate(report.overall, s);
    accumulate(report.buckets[bucket_key(*rec)], s);
    if (!s.closed_world_ok) ++report.closed_world_violations;
  }
  finalize(report.overall);
  for (auto& [key, set] : report.buckets) finalize(set);
  return report;
}

MetricReport evaluate(Models& models, const std::vector<DatasetRecord>& records) {
  std::vector<const DatasetRecord*> ptrs;
  for (const auto& r : records) ptrs.push_back(&r);
  return evaluate(models, ptrs);
}

namespace {

nlohmann::json set_json(const MetricSet& s) {
  return {{"iou", s.iou},
          {"iou_m", s.iou_m},
          {"program_action", s.program_action},
          {"program_subject", s.program_subject},
          {"program_predicate", s.program_predicate},
          {"identification", s.identification},
          {"placement", s.placement},
          {"count", s.count}};
}

}  // namespace

std::string report_json(const MetricReport& report) {
  nlohmann::json buckets = nlohmann::json::object();
  for (const auto& [key, set] : report.buckets) buckets[key] = set_json(set);
  nlohmann::json j = {{"overall", set_json(report.overall)},
                      {"buckets", buckets},
                      {"closed_world_violations", report.closed_world_violations}};
  return j.dump(2);
}

std::string report_table(const MetricReport& report) {
  std::ostringstream out;
  auto row = [&](const std::string& name, const MetricSet& s) {
    out << "  " << name;
    for (std::size_t pad = name.size(); pad < 16; ++pad) out << ' ';
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "iou=%.3f iou_m=%.3f prog=%.3f/%.3f/%.3f ident=%.3f place=%.3f n=%zu",
                  s.iou, s.iou_m, s.program_action, s.program_subject, s.program_predicate,
                  s.identification, s.placement, s.count);
    out << buf << "\n";
  };
  out << "metrics (program = action/subject/predicate):\n";
  row("overall", report.overall);
  for (const auto& [key, set] : report.buckets) row(key, set);
  if (report.closed_world_violations > 0) {
    out << "  closed-world violations: " << report.closed_world_violations << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// curriculum

namespace {

std::vector<double> snapshot(const tc::ParamRegistry& reg) {
  std::vector<double> out;
  for (const tc::Parameter* p : reg.params) out.insert(out.end(), p->value.begin(),
                                                       p->value.end());
  return out;
}

void restore(tc::ParamRegistry& reg, const std::vector<double>& snap) {
  std::size_t at = 0;
  for (tc::Parameter* p : reg.params) {
    std::copy(snap.begin() + at, snap.begin() + at + p->size(), p->value.begin());
    at += p->size();
  }
}

struct StagePools {
  std::vector<const DatasetRecord*> train;
  std::vector<const DatasetRecord*> val;
};

StagePools carve_val(const std::vector<const DatasetRecord*>& pool, double val_fraction) {
  StagePools out;
  std::size_t stride = val_fraction > 0 ? static_cast<std::size_t>(1.0 / val_fraction) : 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (stride > 0 && i % stride == stride - 1) {
      out.val.push_back(pool[i]);
    } else {
      out.train.push_back(pool[i]);
    }
  }
  if (out.val.empty() && !pool.empty()) out.val.push_back(pool.back());
  return out;
}

}  // namespace

void run_stage(Models& models, int stage, const std::vector<const DatasetRecord*>& pool,
               const TrainConfig& cfg, StageResult* result) {
  if (pool.empty()) {
    throw data_error("run_stage: stage " + std::to_string(stage) + " bucket is empty");
  }
  result->stage = stage;
  StagePools pools = carve_val(pool, cfg.val_fraction);

  tc::Optimizer opt;
  opt.lr = cfg.lr;
  switch (stage) {
    case 1:
      models.parser.space.allow_relate = false;
      opt.add(models.ce.concept_emb);
      opt.add(models.ce.proj_color);
      opt.add(models.ce.proj_shape);
      opt.add(models.am.act_emb);
      opt.add(models.am.net);
      {
        tc::ParamRegistry preg;
        models.parser.register_params(preg);
        for (tc::Parameter* p : preg.params) opt.add(*p);
      }
      break;
    case 2: {
      models.parser.space.allow_relate = true;
      for (auto& net : models.ce.rel_nets) opt.add(net);
      tc::ParamRegistry preg;
      models.parser.register_params(preg);
      for (tc::Parameter* p : preg.params) opt.add(*p);
      break;
    }
    case 3: {
      models.parser.space.allow_relate = true;
      tc::ParamRegistry sreg;
      models.splitter.register_params(sreg);
      for (tc::Parameter* p : sreg.params) opt.add(*p);
      break;
    }
    default:
      throw usage_error("run_stage: stage must be 1, 2 or 3");
  }

  tc::ParamRegistry all = models.registry();
  Rng rng(cfg.seed + static_cast<std::uint64_t>(stage) * 7919);

  double best_val = -1.0;
  std::vector<double> best_params;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<const DatasetRecord*> order = pools.train;
    rng.shuffle(order);

    ReinforceMode mode = (stage == 1 && epoch < cfg.warmup_epochs) ? ReinforceMode::Enumerate
                                                                   : ReinforceMode::Sample;
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      std::vector<const DatasetRecord*> batch(
          order.begin() + static_cast<std::ptrdiff_t>(at),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(at + cfg.batch_size,
                                                               order.size())));
      StepStats stats = stage == 3 ? splitter_step(models, batch, cfg, opt, rng)
                                   : reinforce_step(models, batch, cfg, mode, opt, rng);
      loss_sum += stats.mean_loss;
      ++batches;
      // frozen parameters still accumulate grads through the shared graph
      for (tc::Parameter* p : all.params) p->zero_grad();
    }

    MetricReport val_report = evaluate(models, pools.val);
    EpochPoint pt{epoch, batches ? loss_sum / static_cast<double>(batches) : 0.0,
                  val_report.overall.iou_m};
    result->curve.push_back(pt);

    if (pt.val_iou_m > best_val + 1e-6) {
      best_val = pt.val_iou_m;
      best_params = snapshot(all);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (!best_params.empty()) restore(all, best_params);
}

CurriculumResult run_curriculum(const std::vector<DatasetRecord>& records,
                                const instgen::Manifest& manifest, Models& models,
                                const TrainConfig& cfg, const std::string& out_dir) {
  std::vector<const DatasetRecord*> train, test;
  for (std::size_t i : manifest.train_indices) train.push_back(&records.at(i));
  for (std::size_t i : manifest.test_indices) test.push_back(&records.at(i));

  std::vector<const DatasetRecord*> stage1_pool, stage2_pool, stage3_pool;
  for (const DatasetRecord* r : train) {
    if (r->n_steps == 1 && !r->complex_reasoning) stage1_pool.push_back(r);
    if (r->n_steps == 1 && r->complex_reasoning) stage2_pool.push_back(r);
    if (r->n_steps >= 2) stage3_pool.push_back(r);
  }
  if (stage1_pool.empty() || stage2_pool.empty() || stage3_pool.empty()) {
    throw data_error("run_curriculum: dataset lacks a curriculum bucket");
  }

  auto maybe_save = [&](const std::string& name, int stage) {
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    pipeline::save_models(out_dir + "/" + name, models,
                          {{"stage", std::to_string(stage)},
                           {"seed", std::to_string(cfg.seed)}});
  };

  CurriculumResult out;

  run_stage(models, 1, stage1_pool, cfg, &out.stage1);
  out.stage1.test_report = evaluate(models, test);
  maybe_save("stage1.ckpt", 1);
  {
    tc::ParamRegistry a;
    models.am.register_params(a);
    out.theta_a_hash_after_stage1 = tc::param_hash(a);
  }

  run_stage(models, 2, stage2_pool, cfg, &out.stage2);
  out.stage2.test_report = evaluate(models, test);
  maybe_save("stage2.ckpt", 2);
  {
    tc::ParamRegistry frozen;
    models.am.register_params(frozen);
    models.ce.register_params(frozen);
    models.parser.register_params(frozen);
    out.frozen_hash_before_stage3 = tc::param_hash(frozen);
  }

  run_stage(models, 3, stage3_pool, cfg, &out.stage3);
  out.stage3.test_report = evaluate(models, test);
  maybe_save("stage3.ckpt", 3);
  {
    tc::ParamRegistry a;
    models.am.register_params(a);
    out.theta_a_hash_after_stage3 = tc::param_hash(a);
    tc::ParamRegistry frozen;
    models.am.register_params(frozen);
    models.ce.register_params(frozen);
    models.parser.register_params(frozen);
    out.frozen_hash_after_stage3 = tc::param_hash(frozen);
  }

  if (!out_dir.empty()) {
    for (const StageResult* sr : {&out.stage1, &out.stage2, &out.stage3}) {
      std::ofstream curve(out_dir + "/curve_stage" + std::to_string(sr->stage) + ".csv");
      curve << "epoch,train_loss,val_iou_m\n";
      for (const auto& pt : sr->curve) {
        curve << pt.epoch << "," << pt.train_loss << "," << pt.val_iou_m << "\n";
      }
      std::ofstream rep(out_dir + "/report_stage" + std::to_string(sr->stage) + ".json");
      rep << report_json(sr->test_report) << "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// generalization suites

GeneralizationCurves generalization_suite(Models& models, std::uint64_t seed,
                                          std::size_t records_per_point, int n_lo, int n_hi,
                                          int k_lo, int k_hi) {
  GeneralizationCurves out;

  auto point = [&](const instgen::DatasetConfig& cfg, std::uint64_t point_seed, double x) {
    auto records = instgen::generate_dataset(point_seed, records_per_point, cfg);
    std::vector<double> vals;
    for (const auto& rec : records) {
      RecordScores s = score_record(models, rec);
      vals.push_back(s.iou_m);
    }
    CurvePoint pt;
    pt.x = x;
    pt.count = vals.size();
    double mean = 0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= std::max<std::size_t>(1, vals.size() - 1);
    double half = 1.96 * std::sqrt(var / static_cast<double>(vals.size()));
    pt.iou_m = mean;
    pt.ci_low = mean - half;
    pt.ci_high = mean + half;
    return pt;
  };

  for (int n = n_lo; n <= n_hi; ++n) {
    instgen::DatasetConfig cfg;
    cfg.n_objects_min = cfg.n_objects_max = n;
    out.by_objects.push_back(point(cfg, seed + static_cast<std::uint64_t>(n) * 101,
                                   static_cast<double>(n)));
  }
  for (int k = k_lo; k <= k_hi; ++k) {
    instgen::DatasetConfig cfg;
    cfg.steps_min = cfg.steps_max = k;
    cfg.n_objects_min = 4;
    cfg.n_objects_max = 5;
    out.by_steps.push_back(point(cfg, seed + 100000 + static_cast<std::uint64_t>(k) * 101,
                                 static_cast<double>(k)));
  }
  return out;
}

void write_curves_csv(const std::string& path, const GeneralizationCurves& curves) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open curves file for writing: " + path);
  out << "curve,x,iou_m,count,ci_low,ci_high\n";
  for (const auto& p : curves.by_objects) {
    out << "objects," << p.x << "," << p.iou_m << "," << p.count << "," << p.ci_low << ","
        << p.ci_high << "\n";
  }
  for (const auto& p : curves.by_steps) {
    out << "steps," << p.x << "," << p.iou_m << "," << p.count << "," << p.ci_low << ","
        << p.ci_high << "\n";
  }
}

}  // namespace manip::traineval
