#include "comet/losses.hpp"

#include <cmath>

#include "comet/error.hpp"

namespace comet::loss {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0)) {
    throw Error(Error::Code::InvalidArgument, "[contrastive] tau must be positive");
  }
}

}  // namespace

ContrastiveLayout build_layout(num::Tape& tape, const model::StagedModel& student,
                               const num::Tensor& known_inputs,
                               const num::Tensor& known_jitter,
                               const std::vector<std::size_t>& known_classes,
                               const num::Tensor& unknown_inputs,
                               const num::Tensor& unknown_jitter,
                               const proto::PrototypeBank& bank) {
  const std::size_t n_k = known_classes.size();
  const std::size_t n_u = unknown_inputs.rank() == 2 ? unknown_inputs.shape[0] : 0;
  if (known_inputs.rank() == 2 && known_inputs.shape[0] != n_k) {
    throw Error(Error::Code::ShapeMismatch, "[layout] known inputs vs classes count");
  }
  if (n_k > 0 && !known_jitter.same_shape(known_inputs)) {
    throw Error(Error::Code::ShapeMismatch, "[layout] known jitter shape mismatch");
  }
  if (n_u > 0 && !unknown_jitter.same_shape(unknown_inputs)) {
    throw Error(Error::Code::ShapeMismatch, "[layout] unknown jitter shape mismatch");
  }

  ContrastiveLayout layout;
  layout.known_samples = n_k;
  layout.unknown_samples = n_u;
  if (n_k == 0 && n_u == 0) {
    return layout;
  }

  // Prototype rows: one per known sample whose class is available, carrying
  // that sample's pseudo-class. Entering as constants keeps them fixed
  // attraction points for the gradient.
  std::vector<std::size_t> proto_classes;
  for (std::size_t c : known_classes) {
    if (bank.has(c)) proto_classes.push_back(c);
  }
  layout.prototype_rows = proto_classes.size();

  std::vector<num::ValueId> feature_blocks;
  if (n_k > 0) {
    num::ValueId block = tape.constant(num::concat_rows({known_inputs, known_jitter}));
    feature_blocks.push_back(model::features_node(tape, student, block));
  }
  if (!proto_classes.empty()) {
    num::Tensor protos = num::Tensor::zeros({proto_classes.size(), bank.feature_dim()});
    for (std::size_t i = 0; i < proto_classes.size(); ++i) {
      const num::Tensor p = bank.prototype(proto_classes[i]);
      std::copy(p.data.begin(), p.data.end(), protos.data.begin() + i * bank.feature_dim());
    }
    feature_blocks.push_back(tape.constant(std::move(protos)));
  }
  if (n_u > 0) {
    num::ValueId block = tape.constant(num::concat_rows({unknown_inputs, unknown_jitter}));
    feature_blocks.push_back(model::features_node(tape, student, block));
  }

  num::ValueId features = feature_blocks.size() == 1 ? feature_blocks[0]
                                                     : tape.concat_rows(feature_blocks);
  layout.projections = tape.l2_normalize(projection_node(tape, student, features));

  for (std::size_t i = 0; i < n_k; ++i) layout.entries.push_back({true, known_classes[i]});
  for (std::size_t i = 0; i < n_k; ++i) layout.entries.push_back({true, known_classes[i]});
  for (std::size_t c : proto_classes) layout.entries.push_back({true, c});
  for (std::size_t i = 0; i < 2 * n_u; ++i) layout.entries.push_back({false, 0});
  return layout;
}

num::ValueId contrastive_loss(num::Tape& tape, const ContrastiveLayout& layout, double tau) {
  check_tau(tau);
  if (layout.empty()) {
    return tape.constant(num::Tensor::scalar(0.0));
  }
  if (tape.value(layout.projections).rows() != layout.entries.size()) {
    throw Error(Error::Code::ShapeMismatch,
                "[contrastive] layout entries do not match projection rows");
  }

  std::vector<std::size_t> known_idx, unknown_idx;
  for (std::size_t i = 0; i < layout.entries.size(); ++i) {
    (layout.entries[i].known ? known_idx : unknown_idx).push_back(i);
  }
  if (known_idx.empty()) {
    return tape.constant(num::Tensor::scalar(0.0));
  }

  num::ValueId sims = tape.scale(tape.matmul_nt(layout.projections, layout.projections),
                                 1.0 / tau);

  // Cross term: every unknown row against every known row. Independent of
  // the anchor, so its log-sum is evaluated once and merged into each
  // denominator below.
  num::ValueId cross_lse;
  if (!unknown_idx.empty()) {
    std::vector<num::IndexPair> cross;
    cross.reserve(unknown_idx.size() * known_idx.size());
    for (std::size_t u : unknown_idx) {
      for (std::size_t j : known_idx) {
        cross.push_back({u, j});
      }
    }
    cross_lse = tape.logsumexp_pairs(sims, std::move(cross));
  }

  std::vector<num::IndexPair> positive_pairs;
  std::vector<double> positive_coeffs;
  std::vector<num::ValueId> denominators;

  for (std::size_t i : known_idx) {
    std::vector<num::IndexPair> others;
    others.reserve(known_idx.size() - 1);
    std::size_t positives = 0;
    for (std::size_t a : known_idx) {
      if (a == i) continue;
      others.push_back({i, a});
      if (layout.entries[a].cls == layout.entries[i].cls) ++positives;
    }
    if (positives == 0 || others.empty()) continue;  // nothing to attract

    const double w = -1.0 / static_cast<double>(positives);
    for (std::size_t a : known_idx) {
      if (a != i && layout.entries[a].cls == layout.entries[i].cls) {
        positive_pairs.push_back({i, a});
        positive_coeffs.push_back(w);
      }
    }
    num::ValueId denom = tape.logsumexp_pairs(sims, std::move(others));
    if (cross_lse.valid()) {
      denom = tape.logaddexp(denom, cross_lse);
    }
    denominators.push_back(denom);
  }

  if (denominators.empty()) {
    return tape.constant(num::Tensor::scalar(0.0));
  }
  num::ValueId numerator = tape.select_sum(sims, std::move(positive_pairs),
                                           std::move(positive_coeffs));
  return tape.add(numerator, tape.add_n(denominators));
}

num::ValueId entropy_loss_node(num::Tape& tape, num::ValueId probs,
                               const std::vector<pseudo::PseudoLabel>& labels) {
  const num::Tensor& p = tape.value(probs);
  if (p.rank() != 2 || p.shape[0] != labels.size()) {
    throw Error(Error::Code::ShapeMismatch,
                "[entropy_loss] probabilities " + num::shape_str(p.shape) + " vs " +
                    std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = p.shape[0], k = p.shape[1];

  // Weight matrix W with row-constant coefficients c_i, so that
  // sum_ij W_ij * p_ij * log p_ij equals the signed mean of normalized
  // entropies: c_i = -sign_i / (n * log K).
  const double unit = 1.0 / (static_cast<double>(n) * std::log(static_cast<double>(k)));
  num::Tensor weights = num::Tensor::zeros({n, k});
  for (std::size_t i = 0; i < n; ++i) {
    double c = 0.0;
    if (labels[i].tag == pseudo::Tag::Known) c = -unit;
    if (labels[i].tag == pseudo::Tag::Unknown) c = unit;
    for (std::size_t j = 0; j < k; ++j) weights.at(i, j) = c;
  }
  num::ValueId plogp = tape.mul(probs, tape.log_clamped(probs));
  return tape.sum_all(tape.mul(plogp, tape.constant(std::move(weights))));
}

double entropy_loss(const num::Tensor& probs, const std::vector<pseudo::PseudoLabel>& labels) {
  if (probs.rank() != 2 || probs.shape[0] != labels.size()) {
    throw Error(Error::Code::ShapeMismatch,
                "[entropy_loss] probabilities " + num::shape_str(probs.shape) + " vs " +
                    std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = probs.shape[0], k = probs.shape[1];
  double known = 0.0, unknown = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i].tag == pseudo::Tag::Uncertain) continue;
    const double h = pseudo::normalized_entropy(probs.data.data() + i * k, k);
    if (labels[i].tag == pseudo::Tag::Known) {
      known += h;
    } else {
      unknown += h;
    }
  }
  return (known - unknown) / static_cast<double>(n);
}

double contrastive_loss_value(const num::Tensor& projections,
                              const std::vector<LayoutEntry>& entries, double tau) {
  check_tau(tau);
  if (entries.empty()) return 0.0;
  num::Tape tape;
  ContrastiveLayout layout;
  layout.projections = tape.l2_normalize(tape.constant(projections));
  layout.entries = entries;
  return tape.value(contrastive_loss(tape, layout, tau)).scalar_value();
}

double total_loss(double contrastive, double entropy, double lambda) {
  if (!(lambda > 0.0)) {
    throw Error(Error::Code::InvalidArgument, "[total_loss] lambda must be positive");
  }
  return contrastive + lambda * entropy;
}

}  // namespace comet::loss
