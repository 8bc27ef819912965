#include "comet/prototypes.hpp"

#include <string>

#include "comet/error.hpp"

namespace comet::proto {

namespace {

void check_features(const num::Tensor& features, std::size_t expected_dim,
                    std::size_t label_count) {
  if (features.rank() != 2 || features.shape[1] != expected_dim) {
    throw Error(Error::Code::ShapeMismatch,
                "[prototypes] features must be [n, " + std::to_string(expected_dim) +
                    "], got " + num::shape_str(features.shape));
  }
  if (features.shape[0] != label_count) {
    throw Error(Error::Code::ShapeMismatch,
                "[prototypes] " + std::to_string(features.shape[0]) + " feature rows vs " +
                    std::to_string(label_count) + " labels");
  }
}

}  // namespace

PrototypeBank::PrototypeBank(BankMode mode, std::size_t classes, std::size_t feature_dim)
    : mode_(mode),
      feature_dim_(feature_dim),
      sums_(num::Tensor::zeros({classes, feature_dim})),
      counts_(classes, 0) {
  if (classes == 0 || feature_dim == 0) {
    throw Error(Error::Code::InvalidArgument,
                "[prototypes] classes and feature_dim must be positive");
  }
}

PrototypeBank PrototypeBank::from_source_features(const num::Tensor& features,
                                                  const std::vector<std::size_t>& labels,
                                                  std::size_t classes) {
  if (features.rank() != 2) {
    throw Error(Error::Code::ShapeMismatch,
                "[prototypes] features must be rank 2, got " + num::shape_str(features.shape));
  }
  PrototypeBank bank(BankMode::FrozenSource, classes, features.shape[1]);
  check_features(features, bank.feature_dim_, labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t c = labels[i];
    if (c >= classes) {
      throw Error(Error::Code::InvalidArgument,
                  "[prototypes] label " + std::to_string(c) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
    for (std::size_t j = 0; j < bank.feature_dim_; ++j) {
      bank.sums_.at(c, j) += features.at(i, j);
    }
    ++bank.counts_[c];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (bank.counts_[c] == 0) {
      throw Error(Error::Code::DegenerateInput,
                  "[prototypes] class " + std::to_string(c) + " has no source samples");
    }
  }
  return bank;
}

void PrototypeBank::accumulate(const num::Tensor& features,
                               const std::vector<pseudo::PseudoLabel>& labels) {
  if (mode_ != BankMode::RunningTarget) {
    throw Error(Error::Code::InvalidState,
                "[prototypes] accumulate called on a frozen source bank");
  }
  check_features(features, feature_dim_, labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].tag != pseudo::Tag::Known) continue;
    const std::size_t c = labels[i].known_class;
    if (c >= counts_.size()) {
      throw Error(Error::Code::InvalidArgument,
                  "[prototypes] pseudo-label class " + std::to_string(c) + " outside [0, " +
                      std::to_string(counts_.size()) + ")");
    }
    for (std::size_t j = 0; j < feature_dim_; ++j) {
      sums_.at(c, j) += features.at(i, j);
    }
    ++counts_[c];
  }
}

bool PrototypeBank::has(std::size_t c) const {
  return c < counts_.size() && counts_[c] > 0;
}

num::Tensor PrototypeBank::prototype(std::size_t c) const {
  if (!has(c)) {
    throw Error(Error::Code::InvalidState,
                "[prototypes] class " + std::to_string(c) + " has no prototype yet");
  }
  num::Tensor mean = num::Tensor::zeros({feature_dim_});
  const double inv = 1.0 / static_cast<double>(counts_[c]);
  for (std::size_t j = 0; j < feature_dim_; ++j) {
    mean.data[j] = sums_.at(c, j) * inv;
  }
  return mean;
}

PrototypeBank PrototypeBank::restore(BankMode mode, num::Tensor sums,
                                     std::vector<std::uint64_t> counts) {
  if (sums.rank() != 2 || sums.shape[0] != counts.size()) {
    throw Error(Error::Code::ShapeMismatch,
                "[prototypes] restore: sums " + num::shape_str(sums.shape) + " vs " +
                    std::to_string(counts.size()) + " counts");
  }
  PrototypeBank bank(mode, counts.size(), sums.shape[1]);
  bank.sums_ = std::move(sums);
  bank.counts_ = std::move(counts);
  return bank;
}

PrototypeBank compute_source_prototypes(const model::ComposedModel& model,
                                        const num::Tensor& inputs,
                                        const std::vector<std::size_t>& labels) {
  const num::Tensor features = model::forward_features(model, inputs);
  return PrototypeBank::from_source_features(features, labels,
                                             model.config.num_known_classes);
}

}  // namespace comet::proto
