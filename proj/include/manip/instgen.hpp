#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "manip/blocksworld.hpp"
#include "manip/concepts.hpp"
#include "manip/mpdsl.hpp"

namespace manip::instgen {

enum class TokenKind { Keyword, Structural, Noise };
enum class KeywordClass { None, Color, Shape, Rel, Act };

struct Token {
  std::string surface;  // multi-word keyword phrases stay one token
  TokenKind kind = TokenKind::Noise;
  KeywordClass kclass = KeywordClass::None;
  std::size_t concept_idx = 0;  // Color/Shape payload
  Rel rel = Rel::Left;
  Act act = Act::MovTop;
  std::size_t offset = 0;  // char offset in the instruction
};

// Lossless keyword lexing: concatenating surfaces reproduces the input
// modulo whitespace. Unknown words become noise tokens.
std::vector<Token> lex(const std::string& instruction);

// indices of structural connective tokens ("then"); a gold segment boundary
// sits directly before each
std::vector<std::size_t> connective_positions(const std::vector<Token>& tokens);

// Deterministic grammar parser for the template language. Throws a
// position-annotated data error on non-template input.
mpdsl::ManipulationProgram oracle_parse(const std::string& instruction);
mpdsl::ManipulationProgram oracle_parse(const std::vector<Token>& tokens);

// ---------------------------------------------------------------------------
// gold (hard set) semantics over symbolic attributes and gold relations

// denotation of an ObjSet-typed node; sorted ids
std::vector<int> gold_set(const mpdsl::NodePtr& node, const blocksworld::Scene& scene);
// denotation of an Obj-typed (Unique) node; lowest id on ties or empty set
int gold_object(const mpdsl::NodePtr& node, const blocksworld::Scene& scene,
                bool* unique_out = nullptr);

struct GroundedStep {
  int subject_id = -1;
  int reference_id = -1;
  Act act = Act::MovTop;

  bool operator==(const GroundedStep&) const = default;
};

// grounds and executes one Move step with gold semantics; Idle returns the
// scene unchanged
blocksworld::Scene gold_execute_step(const mpdsl::NodePtr& step, const blocksworld::Scene& scene,
                                     const blocksworld::GoldActionConfig& cfg,
                                     GroundedStep* grounding = nullptr);

// ---------------------------------------------------------------------------
// dataset generation

struct DatasetRecord {
  std::string instruction;
  blocksworld::Scene scene_initial;
  blocksworld::Scene scene_final;
  mpdsl::ManipulationProgram gold_program;
  std::vector<GroundedStep> gold_grounding;
  int n_steps = 1;
  bool complex_reasoning = false;  // complexity bucket: simple vs complex
};

struct DatasetConfig {
  int n_objects_min = 3;
  int n_objects_max = 5;
  int steps_min = 1;
  int steps_max = 2;
  double complex_fraction = 0.5;
  double multi_step_fraction = 0.4;  // share of records above steps_min
  double two_attribute_fraction = 0.4;
  blocksworld::SceneConfig scene;
  blocksworld::GoldActionConfig gold_action;
  int record_retry_budget = 300;
};

std::vector<DatasetRecord> generate_dataset(std::uint64_t seed, std::size_t count,
                                            const DatasetConfig& cfg);

// re-runs gold grounding + gold actions over scene_initial and checks the
// record end to end (final-scene equality, denotation uniqueness)
void verify_record(const DatasetRecord& record, const DatasetConfig& cfg);

std::string record_to_json(const DatasetRecord& record);
DatasetRecord record_from_json(const std::string& line);

struct Manifest {
  std::uint64_t seed = 0;
  std::size_t count = 0;
  DatasetConfig cfg;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

// stratified 80:20 split by (step-count, complexity) bucket
Manifest make_manifest(std::uint64_t seed, const std::vector<DatasetRecord>& records,
                       const DatasetConfig& cfg);

void write_dataset(const std::string& data_path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_dataset(const std::string& data_path);
void write_manifest(const std::string& path, const Manifest& manifest);
Manifest read_manifest(const std::string& path);

}  // namespace manip::instgen
