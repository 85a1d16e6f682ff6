#pragma once

#include <utility>
#include <vector>

#include "manip/blocksworld.hpp"
#include "manip/tensorcore.hpp"
#include "manip/visreason.hpp"

namespace manip::actsim {

namespace tc = manip::tensorcore;

struct ActionConfig {
  std::size_t embed_dim = 16;
  std::size_t hidden = 64;
};

// theta_A: action embeddings plus a dense head mapping
// [action emb | subject loc | reference loc] to the target location
struct ActionModel {
  ActionConfig cfg;
  tc::Embedding act_emb;
  tc::DenseNet net;  // (embed_dim + 10) -> hidden -> hidden -> 5

  void register_params(tc::ParamRegistry& reg);
};

ActionModel make_action_model(Rng& rng, const ActionConfig& cfg = {});

// differentiable core; output squashed into [0,1]^5
tc::Value simulate_node(tc::Tape& tape, ActionModel& am, Act act, tc::Value subj_loc,
                        tc::Value ref_loc);

blocksworld::Location simulate_action(ActionModel& am, Act act, const blocksworld::Location& subj,
                                      const blocksworld::Location& ref);

// adapts the model to the grounding world-update callback
visreason::ActionFn simulator_fn(ActionModel& am);

struct SubGoal {
  int object_id = -1;
  blocksworld::Location target;

  bool operator==(const SubGoal&) const = default;
};

// Applies the grounded steps in order: each Move rewrites only its subject's
// location (closed world); Idle leaves the world untouched and emits no
// sub-goal.
std::pair<std::vector<SubGoal>, blocksworld::WorldState> execute_program(
    ActionModel& am, const visreason::GroundedProgram& gp, const blocksworld::WorldState& world);

// same contract with an arbitrary action rule (gold-geometry oracles)
std::pair<std::vector<SubGoal>, blocksworld::WorldState> execute_with(
    const visreason::GroundedProgram& gp, const blocksworld::WorldState& world,
    const visreason::ActionFn& action_fn);

// line-delimited {step, object_id, target:[5]} records; the motion-planner
// hand-off boundary
void write_subgoal_trace(const std::string& path, const std::vector<SubGoal>& subgoals);

}  // namespace manip::actsim
