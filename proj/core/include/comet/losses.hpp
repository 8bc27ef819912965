#pragma once

#include <cstddef>
#include <vector>

#include "comet/network.hpp"
#include "comet/prototypes.hpp"
#include "comet/pseudo.hpp"
#include "comet/tape.hpp"

namespace comet::loss {

/// Role and pseudo-class of one projection row in a contrastive layout.
struct LayoutEntry {
  bool known = false;     // belongs to the known group (sample, jitter or prototype)
  std::size_t cls = 0;    // pseudo-class; meaningless when known == false
};

/// Projections staged for the contrastive objective. Rows hold, in order:
/// known samples, their jittered copies, one prototype per known sample
/// whose class has one available, then unknown samples and their jittered
/// copies. With every prototype available that is 3*N_k + 2*N_u rows.
/// Rows are L2-normalized on the tape, so similarities are cosines.
struct ContrastiveLayout {
  num::ValueId projections;  // invalid when the layout is empty
  std::vector<LayoutEntry> entries;
  std::size_t known_samples = 0;    // N_k
  std::size_t unknown_samples = 0;  // N_u
  std::size_t prototype_rows = 0;

  bool empty() const { return entries.empty(); }
};

/// Stages the layout on `tape` through the student's feature and projection
/// networks. Prototype vectors enter as constants: the objective pulls
/// samples toward them, never the prototypes toward samples. Inputs with
/// zero rows are allowed and simply contribute nothing.
ContrastiveLayout build_layout(num::Tape& tape, const model::StagedModel& student,
                               const num::Tensor& known_inputs,
                               const num::Tensor& known_jitter,
                               const std::vector<std::size_t>& known_classes,
                               const num::Tensor& unknown_inputs,
                               const num::Tensor& unknown_jitter,
                               const proto::PrototypeBank& bank);

/// Supervised contrastive objective over the layout with temperature tau.
/// Anchors run over the known group; positives are same-class known rows;
/// every anchor's denominator carries its other known rows plus one shared
/// unknown-against-known cross term. Exponential sums are evaluated in
/// log space. An empty known group yields a constant zero.
num::ValueId contrastive_loss(num::Tape& tape, const ContrastiveLayout& layout, double tau);

/// Entropy objective on student probabilities [n, K]: mean normalized
/// entropy of Known-tagged rows minus mean normalized entropy of
/// Unknown-tagged rows, both normalized by the full row count n.
/// Uncertain rows contribute zero but still count toward n.
num::ValueId entropy_loss_node(num::Tape& tape, num::ValueId probs,
                               const std::vector<pseudo::PseudoLabel>& labels);

/// Value-level twin of entropy_loss_node, for records and tests.
double entropy_loss(const num::Tensor& probs, const std::vector<pseudo::PseudoLabel>& labels);

/// Value-level contrastive objective on explicit projection rows [m, d]
/// (not yet normalized). Used by tests and the self-check; the adaptation
/// path uses the tape version above.
double contrastive_loss_value(const num::Tensor& projections,
                              const std::vector<LayoutEntry>& entries, double tau);

/// total = contrastive + lambda * entropy, lambda > 0.
double total_loss(double contrastive, double entropy, double lambda);

}  // namespace comet::loss
