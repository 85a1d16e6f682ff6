#pragma once

#include <string>
#include <vector>

#include "manip/actsim.hpp"
#include "manip/blocksworld.hpp"
#include "manip/instgen.hpp"
#include "manip/langreason.hpp"
#include "manip/mpdsl.hpp"
#include "manip/tensorcore.hpp"
#include "manip/visreason.hpp"

namespace manip::pipeline {

namespace tc = manip::tensorcore;

// every learned module of the system, plus the shared vocabulary
struct Models {
  langreason::Vocab vocab;
  visreason::ConceptEmbeddings ce;
  actsim::ActionModel am;
  langreason::ParserModel parser;
  langreason::SplitterModel splitter;

  tc::ParamRegistry registry();
};

Models make_models(const std::vector<std::vector<instgen::Token>>& vocab_corpus,
                   std::uint64_t seed);

void save_models(const std::string& checkpoint_path, Models& models,
                 const std::vector<std::pair<std::string, std::string>>& meta = {});
void load_models(const std::string& checkpoint_path, Models& models);

// ---------------------------------------------------------------------------
// differentiable soft execution of a whole program

struct SoftWorld {
  std::vector<int> ids;                 // position -> object id
  std::vector<tc::Value> locs;          // 5-vectors, evolve across steps
  std::vector<tc::Value> features;      // appearance carried, geometry refreshed
  const blocksworld::Scene* symbolic;   // initial attributes
};

SoftWorld make_soft_world(tc::Tape& tape, const blocksworld::Scene& scene);

// expected location under a normalized attention
tc::Value expected_loc(tc::Tape& tape, const SoftWorld& world, tc::Value soft_att);

// Applies one soft Move: every object's location blends toward the predicted
// target with its subject weight; geometry feature entries are recomputed
// from the blended locations.
void soft_apply_move(tc::Tape& tape, SoftWorld& world, actsim::ActionModel& am, Act act,
                     tc::Value subject_soft, tc::Value reference_soft);

// Grounds and executes the whole program softly (training path). Returns the
// final per-object location values.
struct SoftExecResult {
  std::vector<int> ids;
  std::vector<tc::Value> final_locs;
};

SoftExecResult soft_execute(tc::Tape& tape, const mpdsl::ManipulationProgram& program,
                            const blocksworld::Scene& scene, visreason::ConceptEmbeddings& ce,
                            actsim::ActionModel& am);

// ---------------------------------------------------------------------------
// L_act = sum_i ||pred_i - gold_i|| + beta (1 - IoU(pred box, gold box))

enum class LossNorm { L1, L2 };

struct LossConfig {
  double beta = 1.0;
  LossNorm norm = LossNorm::L1;
};

tc::Value iou_node(tc::Tape& tape, tc::Value box_a, tc::Value box_b);

tc::Value loss_act_node(tc::Tape& tape, const std::vector<int>& ids,
                        const std::vector<tc::Value>& pred_locs,
                        const blocksworld::WorldState& gold, const LossConfig& cfg);

double loss_act(const blocksworld::WorldState& pred, const blocksworld::WorldState& gold,
                const LossConfig& cfg);

// full hard pipeline for one instruction: parse (argmax), ground, execute
struct HardRun {
  mpdsl::ManipulationProgram program;
  visreason::GroundedProgram grounded;
  std::vector<actsim::SubGoal> subgoals;
  blocksworld::WorldState final_world;
};

HardRun run_hard(Models& models, const std::string& instruction,
                 const blocksworld::Scene& scene,
                 std::vector<visreason::TraceEntry>* trace = nullptr);
HardRun run_hard_program(Models& models, const mpdsl::ManipulationProgram& program,
                         const blocksworld::Scene& scene,
                         std::vector<visreason::TraceEntry>* trace = nullptr);

}  // namespace manip::pipeline
