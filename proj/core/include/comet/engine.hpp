#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "comet/checkpoint.hpp"
#include "comet/hyperparams.hpp"
#include "comet/optimizer.hpp"
#include "comet/report.hpp"
#include "comet/scenario.hpp"
#include "comet/stream.hpp"

namespace comet::engine {

/// Adaptation strategy for a run.
enum class Variant {
  SourceOnly,  // frozen source model, no updates
  CometP,      // adaptation against frozen source prototypes
  CometF,      // adaptation against running target prototypes
};

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

/// Committed decision for one sample: the predicted class, or the
/// source-class-count sentinel for "unknown", plus the evidence it rests on.
struct Prediction {
  std::size_t label = 0;
  double entropy = 0.0;
  double max_prob = 0.0;
};

/// Source training output with a little context for reporting.
struct PretrainResult {
  io::Checkpoint checkpoint;
  std::size_t epochs_run = 0;
  double val_accuracy = 0.0;
};

/// Trains the source model with cross-entropy on the scenario's source set,
/// early-stopping on validation accuracy, then freezes per-class feature
/// prototypes. Fully determined by the scenario (including its seed).
PretrainResult pretrain_source(const scenario::ScenarioConfig& cfg);

/// Frozen-model predictions for one batch under rejection threshold delta:
/// argmax when normalized entropy <= delta, otherwise unknown.
std::vector<Prediction> infer(const model::ComposedModel& m, const num::Tensor& inputs,
                              double delta);

/// What one adaptation step produced, before its batch's ground truth is
/// ever consulted.
struct StepOutcome {
  std::vector<Prediction> predictions;
  std::size_t tagged_known = 0;
  std::size_t tagged_unknown = 0;
  std::size_t tagged_uncertain = 0;
  double contrastive = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

/// Online adapter: owns the student/teacher pair, the prototype bank and the
/// optimizer state for one run. step() performs, in order: student forward
/// and prediction commit, teacher pseudo-labeling, prototype accumulation
/// (running banks), loss assembly over the jittered layout, one student
/// update, one teacher EMA update. Ground-truth labels never enter.
class Adapter {
 public:
  Adapter(const io::Checkpoint& source, Variant variant,
          const scenario::ScenarioConfig& cfg);

  StepOutcome step(const num::Tensor& batch_inputs, std::size_t batch_index);

  const model::StudentTeacherPair& pair() const { return pair_; }
  const proto::PrototypeBank& bank() const { return bank_; }
  std::size_t steps_taken() const { return steps_; }

 private:
  scenario::ScenarioConfig cfg_;
  HyperParams hp_;
  Variant variant_;
  model::StudentTeacherPair pair_;
  proto::PrototypeBank bank_;
  num::SgdMomentum optimizer_;
  double augment_sigma_ = 0.0;
  std::size_t steps_ = 0;
};

/// Per-batch slice of a run record.
struct BatchRecord {
  std::size_t index = 0;
  std::vector<Prediction> predictions;
  std::vector<std::size_t> truth;
  std::size_t tagged_known = 0;
  std::size_t tagged_unknown = 0;
  std::size_t tagged_uncertain = 0;
  double contrastive = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

/// Full record of one run: every batch in stream order plus pooled metrics.
struct RunResult {
  std::string scenario_name;
  Variant variant = Variant::SourceOnly;
  std::uint64_t seed = 0;
  std::size_t classes = 0;  // source classes; `classes` itself marks unknown
  std::size_t pretrain_epochs = 0;
  double pretrain_val_accuracy = 0.0;
  HyperParams hyper;
  std::vector<BatchRecord> batches;
  report::MetricSummary summary;
};

/// Runs one variant over the scenario's stream. When `source` is null the
/// source model is pretrained in-process; passing a checkpoint lets several
/// runs share one pretraining.
RunResult run_experiment(const scenario::ScenarioConfig& cfg, Variant variant,
                         const io::Checkpoint* source = nullptr);

/// Writes `<prefix>.record.jsonl` (one line per batch) and
/// `<prefix>.summary.json` under `dir`, both atomically. Returns the two
/// serialized payloads' byte counts for logging.
std::pair<std::size_t, std::size_t> write_run_record(const RunResult& run,
                                                     const std::filesystem::path& dir,
                                                     const std::string& prefix);

/// Serialized forms, exposed for byte-level determinism checks.
std::string run_record_lines(const RunResult& run);
std::string run_summary_json(const RunResult& run);

}  // namespace comet::engine
