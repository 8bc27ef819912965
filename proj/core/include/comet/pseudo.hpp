#pragma once

#include <cstddef>
#include <vector>

#include "comet/tensor.hpp"

namespace comet::pseudo {

/// Three-way pseudo-label for one target sample.
enum class Tag { Known, Unknown, Uncertain };

struct PseudoLabel {
  Tag tag = Tag::Uncertain;
  /// Class index in [0, classes); only meaningful when tag == Known.
  std::size_t known_class = 0;
};

/// Entropy thresholds for the assignment rule. Requires 0 <= lower < upper <= 1.
struct Thresholds {
  double lower = 0.25;
  double upper = 0.75;
  void validate() const;
};

/// Shannon entropy of a probability vector normalized by log(K), so the
/// result lies in [0, 1] regardless of K. 0 log 0 is taken as 0; positive
/// entries below 1e-12 are clamped before the log. An exactly uniform vector
/// returns exactly 1 and a one-hot vector exactly 0.
///
/// `probs` is one row: nonnegative entries summing to 1 within 1e-9, K >= 2.
double normalized_entropy(const double* probs, std::size_t k);
double normalized_entropy(const num::Tensor& probs);  // rank-1 convenience

/// Applies the assignment rule to each row of a [n, K] probability matrix:
///   entropy <= lower  -> Known(argmax row), ties resolved to the lowest index
///   entropy >= upper  -> Unknown
///   otherwise         -> Uncertain
/// Both comparisons are closed, so a row sitting exactly on a threshold is
/// assigned, not left Uncertain.
std::vector<PseudoLabel> assign(const num::Tensor& probs, const Thresholds& thresholds);

/// Row argmax with lowest-index tie-breaking.
std::size_t argmax_row(const double* row, std::size_t k);

}  // namespace comet::pseudo
