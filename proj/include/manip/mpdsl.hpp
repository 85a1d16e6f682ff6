#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "manip/concepts.hpp"
#include "manip/error.hpp"

namespace manip::mpdsl {

enum class NodeKind { SceneAll, Filter, Unique, Relate, Move, Idle };
enum class DslType { ObjSet, Obj, WorldStep };

const char* to_string(DslType t);

struct ProgramNode;
using NodePtr = std::shared_ptr<const ProgramNode>;

// Immutable AST node. Move takes explicit subject/reference children; the
// World argument of Table-style signatures is the implicit step-threading
// state handled by the executor.
struct ProgramNode {
  NodeKind kind = NodeKind::SceneAll;
  NodePtr child;               // Filter / Unique / Relate
  NodePtr subject, reference;  // Move
  std::size_t concept_idx = 0;  // Filter: object-concept index
  Rel rel = Rel::Left;          // Relate
  Act act = Act::MovTop;        // Move
};

NodePtr scene_all();
NodePtr filter(NodePtr child, std::size_t concept_idx);
NodePtr filter(NodePtr child, Color c);
NodePtr filter(NodePtr child, Shape s);
NodePtr unique(NodePtr child);
NodePtr relate(NodePtr child, Rel rel);
NodePtr move(Act act, NodePtr subject, NodePtr reference);
NodePtr idle();

bool equal(const NodePtr& a, const NodePtr& b);
std::size_t depth(const NodePtr& node);

// returns the node's type; throws Error naming the offending subtree with
// expected/actual types on a violation
DslType typecheck(const NodePtr& node);
bool well_typed(const NodePtr& node);

struct ManipulationProgram {
  std::vector<NodePtr> steps;  // each Move or Idle

  std::size_t size() const { return steps.size(); }
};

bool equal(const ManipulationProgram& a, const ManipulationProgram& b);
void typecheck(const ManipulationProgram& program);

ManipulationProgram compose(const std::vector<ManipulationProgram>& programs);
ManipulationProgram single_step(NodePtr step);

// canonical lowercase s-expressions; parse is whitespace-insensitive
std::string to_sexpr(const NodePtr& node);
std::string to_sexpr(const ManipulationProgram& program);  // (do ...) when multi-step
NodePtr node_from_sexpr(const std::string& text);
ManipulationProgram program_from_sexpr(const std::string& text);

// ---------------------------------------------------------------------------
// bounded enumeration of single-step Move programs

struct EnumConfig {
  std::vector<std::size_t> concepts;  // object-concept indices
  std::vector<Rel> rels;
  std::vector<Act> acts;
  std::size_t max_filters = 2;
  bool allow_relate = true;
};

EnumConfig full_lexicon_config(std::size_t max_filters = 2, bool allow_relate = true);

// All Obj-typed argument forms reachable under cfg: Unique over a filter
// chain, optionally around one Relate. Chains carry strictly increasing
// concept indices so no two forms are set-semantically equivalent.
std::vector<NodePtr> enumerate_argument_forms(const EnumConfig& cfg);

// deterministic, duplicate-free stream over act x subject-form x reference-form
class ProgramEnumerator {
 public:
  explicit ProgramEnumerator(const EnumConfig& cfg);

  bool done() const;
  NodePtr next();
  std::size_t total() const;

 private:
  std::vector<Act> acts_;
  std::vector<NodePtr> forms_;
  std::size_t act_ = 0, subj_ = 0, ref_ = 0;
};

}  // namespace manip::mpdsl
