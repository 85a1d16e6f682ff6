#include "manip/actsim.hpp"

#include <fstream>

#include "json.hpp"

namespace manip::actsim {

using blocksworld::Location;
using blocksworld::WorldState;
using visreason::GroundedProgram;

void ActionModel::register_params(tc::ParamRegistry& reg) {
  reg.add(act_emb);
  reg.add(net);
}

ActionModel make_action_model(Rng& rng, const ActionConfig& cfg) {
  ActionModel am;
  am.cfg = cfg;
  am.act_emb = tc::make_embedding("actsim.act_emb", kNumActs, cfg.embed_dim, rng);
  am.net = tc::make_dense("actsim.net", {cfg.embed_dim + 10, cfg.hidden, cfg.hidden, 5},
                          {tc::Activation::Tanh, tc::Activation::Tanh, tc::Activation::Identity},
                          rng);
  return am;
}

tc::Value simulate_node(tc::Tape& tape, ActionModel& am, Act act, tc::Value subj_loc,
                        tc::Value ref_loc) {
  std::size_t a = static_cast<std::size_t>(act);
  if (a >= kNumActs) throw data_error("simulate_node: unknown action");
  if (tape.len(subj_loc) != 5 || tape.len(ref_loc) != 5) {
    throw data_error("simulate_node: locations must be 5-vectors");
  }
  tc::Value emb = tc::lookup(tape, am.act_emb, a);
  tc::Value in = tape.concat({emb, subj_loc, ref_loc});
  return tape.sigmoid(tc::forward(tape, am.net, in));
}

Location simulate_action(ActionModel& am, Act act, const Location& subj, const Location& ref) {
  tc::Tape tape;
  tc::Value out = simulate_node(tape, am, act, tape.leaf({subj.x1, subj.y1, subj.x2, subj.y2,
                                                          subj.d}),
                                tape.leaf({ref.x1, ref.y1, ref.x2, ref.y2, ref.d}));
  const double* v = tape.data(out);
  return Location{v[0], v[1], v[2], v[3], v[4]};
}

visreason::ActionFn simulator_fn(ActionModel& am) {
  return [&am](Act act, const Location& subj, const Location& ref) {
    return simulate_action(am, act, subj, ref);
  };
}

std::pair<std::vector<SubGoal>, WorldState> execute_with(const GroundedProgram& gp,
                                                         const WorldState& world,
                                                         const visreason::ActionFn& action_fn) {
  WorldState cur = world;
  std::vector<SubGoal> subgoals;
  for (const auto& step : gp.steps) {
    if (step.is_idle) continue;
    auto subj = cur.find(step.subject.hard_id);
    auto ref = cur.find(step.reference.hard_id);
    if (subj == cur.end() || ref == cur.end()) {
      throw data_error("execute_program: grounded id not present in the world");
    }
    Location target = action_fn(step.act, subj->second, ref->second);
    subj->second = target;
    subgoals.push_back({step.subject.hard_id, target});
  }
  return {subgoals, cur};
}

std::pair<std::vector<SubGoal>, WorldState> execute_program(ActionModel& am,
                                                            const GroundedProgram& gp,
                                                            const WorldState& world) {
  return execute_with(gp, world, simulator_fn(am));
}

void write_subgoal_trace(const std::string& path, const std::vector<SubGoal>& subgoals) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open sub-goal trace for writing: " + path);
  for (std::size_t i = 0; i < subgoals.size(); ++i) {
    const auto& g = subgoals[i];
    nlohmann::json j = {
        {"step", i},
        {"object_id", g.object_id},
        {"target", {g.target.x1, g.target.y1, g.target.x2, g.target.y2, g.target.d}}};
    out << j.dump() << "\n";
  }
}

}  // namespace manip::actsim
