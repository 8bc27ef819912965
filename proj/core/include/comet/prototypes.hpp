#pragma once

#include <cstddef>
#include <vector>

#include "comet/network.hpp"
#include "comet/pseudo.hpp"
#include "comet/tensor.hpp"

namespace comet::proto {

/// How a bank's contents evolve during adaptation.
enum class BankMode {
  FrozenSource,   // class means fixed at source-training time
  RunningTarget,  // running sums over pseudo-labeled target features
};

/// Per-class feature prototypes, stored as (sum, count) so means are exact
/// arithmetic means of everything accumulated. A frozen bank rejects updates;
/// a running bank starts empty and classes become available once their first
/// feature arrives.
class PrototypeBank {
 public:
  PrototypeBank(BankMode mode, std::size_t classes, std::size_t feature_dim);

  /// Frozen bank from labeled source features. Every class in [0, classes)
  /// must appear at least once.
  static PrototypeBank from_source_features(const num::Tensor& features,
                                            const std::vector<std::size_t>& labels,
                                            std::size_t classes);

  /// Adds each Known-tagged row of `features` to its class sum.
  /// Only valid on a RunningTarget bank.
  void accumulate(const num::Tensor& features,
                  const std::vector<pseudo::PseudoLabel>& labels);

  bool has(std::size_t c) const;

  /// Arithmetic mean for class c. Asking for an absent class is an error;
  /// check has() first.
  num::Tensor prototype(std::size_t c) const;

  BankMode mode() const { return mode_; }
  std::size_t classes() const { return counts_.size(); }
  std::size_t feature_dim() const { return feature_dim_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  const num::Tensor& sums() const { return sums_; }

  /// Direct state restore, for checkpoint loading.
  static PrototypeBank restore(BankMode mode, num::Tensor sums,
                               std::vector<std::uint64_t> counts);

 private:
  BankMode mode_;
  std::size_t feature_dim_;
  num::Tensor sums_;  // [classes, feature_dim]
  std::vector<std::uint64_t> counts_;
};

/// Runs the feature extractor over labeled source inputs and freezes the
/// per-class feature means.
PrototypeBank compute_source_prototypes(const model::ComposedModel& model,
                                        const num::Tensor& inputs,
                                        const std::vector<std::size_t>& labels);

}  // namespace comet::proto
