#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "comet/scenario.hpp"

namespace comet::engine {
struct RunResult;
enum class Variant;
}  // namespace comet::engine

namespace comet::report {

/// Fraction of positions where pred == truth. Errors on empty or
/// mismatched inputs.
double accuracy(const std::vector<std::size_t>& pred,
                const std::vector<std::size_t>& truth);

/// Harmonic mean of known- and unknown-class accuracy. Both arguments must
/// lie in [0, 1]; returns 0 when both are 0.
double h_score(double known_accuracy, double unknown_accuracy);

/// Pooled evaluation of a prediction/truth pairing. `classes` is the number
/// of source classes; the label equal to `classes` is the unknown bucket.
struct MetricSummary {
  std::size_t samples = 0;
  std::size_t known_total = 0;
  std::size_t unknown_total = 0;
  double accuracy = 0.0;
  double known_accuracy = 0.0;    // meaningful only when known_total > 0
  double unknown_accuracy = 0.0;  // meaningful only when unknown_total > 0
  std::optional<double> h_score;  // set only when both sides are present
  std::map<std::size_t, double> per_class;  // truth label -> accuracy
};

MetricSummary summarize(const std::vector<std::size_t>& pred,
                        const std::vector<std::size_t>& truth, std::size_t classes);

/// h_score when defined, otherwise plain accuracy (the sensible scalar for
/// streams that lack one of the two sides, e.g. partial-overlap setups).
double headline_metric(const MetricSummary& s);

/// Shortest round-trippable decimal text for a double; locale-independent.
std::string format_double(double v);

/// One configuration axis to vary while everything else stays fixed.
enum class SweepAxis {
  BatchSize,       // values: integers; stream length rescales to keep the
                   // total sample budget constant
  Alpha,           // teacher momentum
  Delta,           // inference rejection threshold
  ThresholdPair,   // "lower/upper" pseudo-label thresholds
  LossCombo,       // "contrastive" | "entropy" | "both"
};

SweepAxis parse_axis(const std::string& name);
std::string axis_name(SweepAxis axis);

struct SweepCell {
  std::string variant;
  std::string value;
  std::uint64_t seed = 0;
  double metric = 0.0;
};

struct SweepResult {
  SweepAxis axis;
  std::string metric_name;  // "h_score" or "accuracy"
  std::vector<SweepCell> cells;
};

/// Applies one axis value to a scenario copy. Exposed for tests.
scenario::ScenarioConfig apply_axis(const scenario::ScenarioConfig& base,
                                    SweepAxis axis, const std::string& value);

/// Grid of runs over axis values x seeds x variants. Pretraining happens
/// once per seed and is shared across the grid; `jobs` > 1 runs cells on a
/// thread pool. Cell order in the result is variant-major, then value, then
/// seed, independent of scheduling.
SweepResult run_sweep(const scenario::ScenarioConfig& base, SweepAxis axis,
                      const std::vector<std::string>& values,
                      const std::vector<std::uint64_t>& seeds,
                      const std::vector<engine::Variant>& variants,
                      std::size_t jobs = 1);

/// Per-cell table plus per-(variant, value) means, as CSV text.
std::string sweep_table_csv(const SweepResult& sweep);
std::string sweep_means_csv(const SweepResult& sweep);

/// Writes table.csv and means.csv under `dir`, atomically.
void write_sweep(const SweepResult& sweep, const std::filesystem::path& dir);

}  // namespace comet::report
