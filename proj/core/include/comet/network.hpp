#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "comet/tape.hpp"
#include "comet/tensor.hpp"

namespace comet::model {

/// Dimensions of the three sub-networks.
///
///   g    feature extractor: input -> g_hidden... -> feature_dim, ReLU after
///        every layer (features are post-activation)
///   h    classifier head: single linear layer feature_dim -> classes
///   proj embedding head for the contrastive objective: one hidden ReLU layer
///        then linear, output fed to L2 normalization downstream
struct NetworkConfig {
  std::size_t input_dim = 2;
  std::size_t feature_dim = 32;
  std::size_t num_known_classes = 2;
  std::size_t projection_dim = 16;
  std::vector<std::size_t> g_hidden = {64};
  std::size_t proj_hidden = 32;

  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

/// One network triple (g, h, proj) with a named, deterministically ordered
/// parameter set. Weights are initialized uniform in [-1/sqrt(fan_in),
/// +1/sqrt(fan_in)], biases zero, fill order fixed by the seed alone.
struct ComposedModel {
  NetworkConfig config;
  num::ParameterSet params;

  static ComposedModel init(const NetworkConfig& config, std::uint64_t seed);

  /// Re-draws only the proj.* parameters, leaving g and h untouched.
  void reinit_projection(std::uint64_t seed);
};

/// Handles to one model's parameters staged on a tape. `trainable` staging
/// makes every parameter a differentiable leaf; constant staging is used for
/// evaluation-only passes.
struct StagedModel {
  const NetworkConfig* config = nullptr;
  std::map<std::string, num::ValueId> ids;
};

StagedModel stage(num::Tape& tape, const ComposedModel& model, bool trainable);

/// g applied to a [n, input_dim] batch -> [n, feature_dim].
num::ValueId features_node(num::Tape& tape, const StagedModel& m, num::ValueId x);
/// h applied to features -> [n, classes] logits.
num::ValueId logits_node(num::Tape& tape, const StagedModel& m, num::ValueId feats);
/// proj applied to features -> [n, projection_dim], raw (not normalized).
num::ValueId projection_node(num::Tape& tape, const StagedModel& m, num::ValueId feats);

// Evaluation-only conveniences; each builds a throwaway tape internally so
// the arithmetic is identical to the recorded path.
num::Tensor forward_features(const ComposedModel& model, const num::Tensor& batch);
std::pair<num::Tensor, num::Tensor> forward_logits(const ComposedModel& model,
                                                   const num::Tensor& features);
num::Tensor forward_projection(const ComposedModel& model, const num::Tensor& features);

/// Student/teacher pair for mean-teacher adaptation. Both sides share one
/// architecture; the teacher is only ever written through ema_update.
struct StudentTeacherPair {
  ComposedModel student;
  ComposedModel teacher;

  /// Both sides start as exact copies of `source`.
  static StudentTeacherPair from_source(const ComposedModel& source);
};

/// teacher <- alpha * teacher + (1 - alpha) * student, every parameter
/// uniformly. alpha in [0, 1]; structural mismatch between the two sides
/// is an error.
void ema_update(StudentTeacherPair& pair, double alpha);

}  // namespace comet::model
