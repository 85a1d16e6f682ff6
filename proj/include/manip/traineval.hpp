#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "manip/instgen.hpp"
#include "manip/pipeline.hpp"

namespace manip::traineval {

namespace tc = manip::tensorcore;
using pipeline::LossConfig;
using pipeline::Models;

struct TrainConfig {
  LossConfig loss;
  std::size_t n_samples = 8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t warmup_epochs = 2;  // stage-1 enumeration epochs
  std::size_t patience = 5;
  double lr = 1e-3;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

// centered rewards used as advantages
std::vector<double> advantages(const std::vector<double>& rewards);

// sum_k (r_k - mean r) * (-log q_k) / (n-1). The 1/(n-1) scaling makes the
// estimator's expectation equal the exact enumeration gradient.
tc::Value reinforce_surrogate(tc::Tape& tape, const std::vector<tc::Value>& log_probs,
                              const std::vector<double>& rewards);

// ---------------------------------------------------------------------------
// exact-expectation reward grid (plain-double fast path over the enumerated
// single-step space; consistency with the tape path is unit-tested)

struct EnumRewardGrid {
  std::vector<Act> acts;
  std::vector<mpdsl::NodePtr> forms;
  std::vector<double> rewards;  // [act][subj][ref] row-major, reward = -L_act

  double at(std::size_t a, std::size_t s, std::size_t r) const {
    return rewards[(a * forms.size() + s) * forms.size() + r];
  }
};

EnumRewardGrid build_reward_grid(const instgen::DatasetRecord& record, Models& models,
                                 const mpdsl::EnumConfig& space, const LossConfig& loss);

enum class ReinforceMode { Sample, Enumerate };

struct StepStats {
  double mean_loss = 0.0;
  std::size_t samples = 0;
  std::size_t truncated = 0;
  std::size_t skipped = 0;
};

// One gradient update over a batch: parser surrogate (sampled or exact
// enumeration) plus mean sampled loss backprop for the visual/action
// modules. `opt` holds exactly the stage's trainable parameters.
StepStats reinforce_step(Models& models, const std::vector<const instgen::DatasetRecord*>& batch,
                         const TrainConfig& cfg, ReinforceMode mode, tc::Optimizer& opt,
                         Rng& rng);

// stage-3 batch update for the splitter (everything else frozen)
StepStats splitter_step(Models& models, const std::vector<const instgen::DatasetRecord*>& batch,
                        const TrainConfig& cfg, tc::Optimizer& opt, Rng& rng);

// ---------------------------------------------------------------------------
// metrics

struct MetricSet {
  double iou = 0.0;
  double iou_m = 0.0;
  double program_action = 0.0;
  double program_subject = 0.0;
  double program_predicate = 0.0;
  double identification = 0.0;
  double placement = 0.0;
  std::size_t count = 0;
};

struct MetricReport {
  MetricSet overall;
  std::map<std::string, MetricSet> buckets;  // single/double x simple/complex
  std::size_t closed_world_violations = 0;
};

// per-record metric arithmetic over a finished pipeline run
struct RecordScores {
  double iou = 0, iou_m = 0;
  double action = 0, subject = 0, predicate = 0, identification = 0, placement = 0;
  bool closed_world_ok = true;
};

RecordScores score_run(const pipeline::HardRun& run, const instgen::DatasetRecord& rec);

MetricReport evaluate(Models& models, const std::vector<const instgen::DatasetRecord*>& records);
MetricReport evaluate(Models& models, const std::vector<instgen::DatasetRecord>& records);

std::string report_table(const MetricReport& report);
std::string report_json(const MetricReport& report);

// ---------------------------------------------------------------------------
// curriculum

struct EpochPoint {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_iou_m = 0.0;
};

struct StageResult {
  int stage = 0;
  std::vector<EpochPoint> curve;
  MetricReport test_report;
};

struct CurriculumResult {
  StageResult stage1, stage2, stage3;
  std::uint64_t theta_a_hash_after_stage1 = 0;
  std::uint64_t theta_a_hash_after_stage3 = 0;
  std::uint64_t frozen_hash_before_stage3 = 0;  // theta_A + theta_V + theta_P
  std::uint64_t frozen_hash_after_stage3 = 0;
};

// Three stages over the manifest's train split: (1) single-step simple,
// object concepts + actions + parser; (2) single-step complex, relational
// concepts + parser, actions frozen; (3) multi-step, splitter only.
// Checkpoints and reports land in out_dir when non-empty.
CurriculumResult run_curriculum(const std::vector<instgen::DatasetRecord>& records,
                                const instgen::Manifest& manifest, Models& models,
                                const TrainConfig& cfg, const std::string& out_dir);

// single stage; stages 2 and 3 require the earlier stages' parameters
void run_stage(Models& models, int stage,
               const std::vector<const instgen::DatasetRecord*>& pool, const TrainConfig& cfg,
               StageResult* result);

// ---------------------------------------------------------------------------
// combinatorial generalization

struct CurvePoint {
  double x = 0.0;
  double iou_m = 0.0;
  std::size_t count = 0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct GeneralizationCurves {
  std::vector<CurvePoint> by_objects;  // N = n_lo..n_hi
  std::vector<CurvePoint> by_steps;    // k = k_lo..k_hi
};

GeneralizationCurves generalization_suite(Models& models, std::uint64_t seed,
                                          std::size_t records_per_point = 200, int n_lo = 5,
                                          int n_hi = 10, int k_lo = 1, int k_hi = 7);

void write_curves_csv(const std::string& path, const GeneralizationCurves& curves);

}  // namespace manip::traineval
