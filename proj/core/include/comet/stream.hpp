#pragma once

#include <cstdint>
#include <vector>

#include "comet/rng.hpp"
#include "comet/scenario.hpp"
#include "comet/tensor.hpp"

namespace comet::stream {

/// Marker for "not one of the model's classes" in evaluation labels: the
/// value is the source class count, one past the last known class index.
inline std::size_t unknown_label(const scenario::ClassSplit& split) {
  return split.source_classes();
}

/// Class means for every class in the split, source classes first, then
/// target-private. Source means sit on well-separated axis directions when
/// the input dimension allows (pairwise distance separation * sqrt(2)),
/// otherwise on a circle sized to honor the separation; target-private means
/// are placed at reduced radius between the source clusters, which is what
/// makes them rejectable by entropy rather than confidently claimable.
num::Tensor class_means(const scenario::ScenarioConfig& cfg);

/// Labeled draw from class c: mean + sigma * standard normal per axis.
void sample_class(const num::Tensor& means, std::size_t c, double sigma, Rng& rng,
                  double* out, std::size_t dim);

/// Applies the configured shift to one sample in place:
/// rotate -> per-axis scale -> translate -> additive noise.
class DomainShift {
 public:
  DomainShift(const scenario::TransformSpec& spec, std::size_t input_dim,
              double source_sigma);
  void apply(double* x, std::size_t dim, Rng& rng) const;
  bool identity() const { return identity_; }

 private:
  std::vector<double> rotations_rad_;
  std::vector<double> translation_;
  std::vector<double> axis_scale_;
  double noise_sigma_ = 0.0;
  bool identity_ = true;
};

/// Balanced labeled source set: samples_per_class draws for each source
/// class, rows grouped by class. No domain shift is applied.
struct SourceDataset {
  num::Tensor inputs;               // [n, input_dim]
  std::vector<std::size_t> labels;  // class in [0, source_classes)
};

SourceDataset generate_source_dataset(const scenario::ScenarioConfig& cfg);

/// One stream step. `inputs` is all the adaptation path may see; `truth`
/// exists for the metrics path and uses unknown_label() for target-private
/// samples.
struct TargetBatch {
  std::size_t index = 0;
  num::Tensor inputs;
  std::vector<std::size_t> truth;
};

/// Single-pass target stream. Batches are generated per index from an
/// index-derived seed, so batch t has the same content no matter how long
/// the stream runs, and next() hands each batch out exactly once; there is
/// no rewind and no random access.
class TargetStream {
 public:
  explicit TargetStream(const scenario::ScenarioConfig& cfg);

  std::size_t batch_count() const { return batch_count_; }
  std::size_t batch_size() const { return batch_size_; }
  bool exhausted() const { return cursor_ >= batch_count_; }

  /// Next batch; consuming past the end raises Error{InvalidState}.
  TargetBatch next();

 private:
  num::Tensor means_;
  std::vector<std::size_t> target_class_ids_;  // global ids the stream draws from
  scenario::ClassSplit split_;
  DomainShift shift_;
  double sigma_;
  std::uint64_t seed_;
  std::size_t input_dim_;
  std::size_t batch_count_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
};

/// Gaussian jitter: x + sigma_aug * standard normal per axis.
num::Tensor augment(const num::Tensor& row, double sigma_aug, Rng& rng);

}  // namespace comet::stream
