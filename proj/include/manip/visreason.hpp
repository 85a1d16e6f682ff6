#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "manip/blocksworld.hpp"
#include "manip/mpdsl.hpp"
#include "manip/tensorcore.hpp"

namespace manip::visreason {

namespace tc = manip::tensorcore;

struct AttentionVector {
  std::vector<double> probs;  // every entry in [0,1]
};

struct VisualConfig {
  std::size_t embed_dim = 16;
  std::size_t rel_hidden = 16;
  double gamma = 0.2;        // cosine shift
  double tau = 0.1;          // concept temperature
  double tau_unique = 0.05;  // Unique softmax temperature (grounding)
  // softer Unique during training; the sharp value saturates to one-hot on
  // untrained concepts and starves theta_V of gradient
  double tau_unique_train = 0.5;
  double epsilon = 1e-6;

  VisualConfig training_view() const {
    VisualConfig out = *this;
    out.tau_unique = tau_unique_train;
    return out;
  }
};

// theta_V: object-level concept embeddings + per-class feature projections,
// and one pairwise scorer per relational concept
struct ConceptEmbeddings {
  VisualConfig cfg;
  tc::Embedding concept_emb;  // kNumObjectConcepts x embed_dim
  tc::Parameter proj_color;   // embed_dim x feature_dim
  tc::Parameter proj_shape;
  std::vector<tc::DenseNet> rel_nets;  // kNumRels nets, 7 -> hidden -> 1

  void register_object_params(tc::ParamRegistry& reg);
  void register_relational_params(tc::ParamRegistry& reg);
  void register_params(tc::ParamRegistry& reg);
};

ConceptEmbeddings make_concept_embeddings(Rng& rng, const VisualConfig& cfg = {});

// Per-step view of the scene on a tape: object features and locations as
// values (constants for inference, graph nodes for soft training worlds).
struct SceneCtx {
  std::vector<tc::Value> features;
  std::vector<tc::Value> locs;  // 5-vectors
  std::vector<int> ids;         // position -> object id
  const blocksworld::Scene* symbolic = nullptr;  // attribute truth for the oracle scorer
  // per-object feature projections, reused across concepts of one class;
  // lifetime is tied to the ctx's tape
  mutable std::map<std::pair<std::size_t, bool>, tc::Value> proj_cache;

  std::size_t size() const { return ids.size(); }
  std::size_t pos_of(int id) const;
};

SceneCtx make_ctx(tc::Tape& tape, const blocksworld::Scene& scene);

class Scorer {
 public:
  virtual ~Scorer() = default;
  // P(object at pos carries the object-level concept)
  virtual tc::Value concept_prob(tc::Tape& tape, const SceneCtx& ctx, std::size_t pos,
                                 std::size_t concept_idx) = 0;
  // P(object at pos_i stands in `rel` to object at pos_j)
  virtual tc::Value rel_score(tc::Tape& tape, const SceneCtx& ctx, std::size_t pos_i,
                              std::size_t pos_j, Rel rel) = 0;
};

class LearnedScorer : public Scorer {
 public:
  explicit LearnedScorer(ConceptEmbeddings& ce) : ce_(ce) {}

  tc::Value concept_prob(tc::Tape& tape, const SceneCtx& ctx, std::size_t pos,
                         std::size_t concept_idx) override;
  tc::Value rel_score(tc::Tape& tape, const SceneCtx& ctx, std::size_t pos_i, std::size_t pos_j,
                      Rel rel) override;

 private:
  ConceptEmbeddings& ce_;
};

// hard 0/1 probabilities from symbolic attributes and gold relational
// predicates; ctx.symbolic must be set
class OracleScorer : public Scorer {
 public:
  tc::Value concept_prob(tc::Tape& tape, const SceneCtx& ctx, std::size_t pos,
                         std::size_t concept_idx) override;
  tc::Value rel_score(tc::Tape& tape, const SceneCtx& ctx, std::size_t pos_i, std::size_t pos_j,
                      Rel rel) override;
};

// ---------------------------------------------------------------------------
// executor primitives (attention-vector algebra)

tc::Value exec_scene(tc::Tape& tape, std::size_t n);
tc::Value exec_filter(tc::Tape& tape, tc::Value att, std::size_t concept_idx, const SceneCtx& ctx,
                      Scorer& scorer);

struct UniqueResult {
  tc::Value soft;  // softmax(log(att+eps)/tau_u), sums to 1
  int hard_pos = 0;
  int hard_id = 0;
};
UniqueResult exec_unique(tc::Tape& tape, tc::Value att, const SceneCtx& ctx,
                         const VisualConfig& cfg);

tc::Value exec_relate(tc::Tape& tape, tc::Value subject_soft, Rel rel, const SceneCtx& ctx,
                      Scorer& scorer);

struct ArgEval {
  tc::Value soft;
  int hard_pos = 0;
  int hard_id = 0;
};

struct TraceEntry {
  int step = 0;
  std::string node;
  std::vector<double> att;
};

// bottom-up evaluation of an ObjSet / Obj subtree
tc::Value eval_objset(tc::Tape& tape, const mpdsl::NodePtr& node, const SceneCtx& ctx,
                      Scorer& scorer, const VisualConfig& cfg, int step = 0,
                      std::vector<TraceEntry>* trace = nullptr);
ArgEval eval_obj(tc::Tape& tape, const mpdsl::NodePtr& node, const SceneCtx& ctx, Scorer& scorer,
                 const VisualConfig& cfg, int step = 0, std::vector<TraceEntry>* trace = nullptr);

// ---------------------------------------------------------------------------
// grounding

struct GroundedArg {
  AttentionVector soft;
  int hard_id = 0;
};

struct GroundedStep {
  bool is_idle = false;
  Act act = Act::MovTop;
  GroundedArg subject;
  GroundedArg reference;
};

struct GroundedProgram {
  std::vector<GroundedStep> steps;
};

using ActionFn = std::function<blocksworld::Location(
    Act, const blocksworld::Location&, const blocksworld::Location&)>;

// Grounds every step bottom-up; between steps the world advances by applying
// action_fn to the hard grounding (locations move, geometry features
// refresh), so later references see the updated world.
GroundedProgram ground(const mpdsl::ManipulationProgram& program, const blocksworld::Scene& scene,
                       Scorer& scorer, const VisualConfig& cfg, const ActionFn& action_fn,
                       std::vector<TraceEntry>* trace = nullptr);

void write_trace(const std::string& path, const std::vector<TraceEntry>& trace);

}  // namespace manip::visreason
