#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "comet/hyperparams.hpp"
#include "comet/network.hpp"

namespace comet::scenario {

/// Category overlap between the source label set and the target stream.
/// shared + source_private is the model's class count; target-private
/// classes only ever appear in the stream and must be rejected as unknown.
struct ClassSplit {
  std::size_t shared = 2;
  std::size_t source_private = 0;
  std::size_t target_private = 0;

  std::size_t source_classes() const { return shared + source_private; }
  std::size_t target_classes() const { return shared + target_private; }
  std::size_t total_classes() const { return shared + source_private + target_private; }

  /// "partial", "open", "open-partial" or "closed", by which private sets
  /// are populated.
  std::string regime() const;

  void validate() const;
};

/// Affine-plus-noise shift applied to target samples:
///   x' = axis_scale * rotate(x) + translation + noise
/// rotations_deg[k] turns coordinate plane (2k, 2k+1). The translation is
/// either an explicit vector or a magnitude in units of the source sigma,
/// spread evenly across axes. noise_sigma has an explicit value, or tracks
/// the source sigma when match_source_noise is set.
struct TransformSpec {
  std::vector<double> rotations_deg;
  std::optional<std::vector<double>> translation;
  double translation_scale = 0.0;
  std::vector<double> axis_scale = {1.0};
  double noise_sigma = 0.0;
  bool match_source_noise = false;

  bool is_identity() const;
};

struct SourceSpec {
  std::size_t samples_per_class = 100;
  double separation = 6.0;  // lower bound on class-mean pairwise distance
  double sigma = 1.0;       // intra-class standard deviation per axis
};

struct StreamSpec {
  std::size_t num_batches = 150;
  std::size_t batch_size = 128;
  double augment_sigma_scale = 0.1;  // jitter sigma as a fraction of source sigma
};

struct PretrainSpec {
  std::size_t max_epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double val_fraction = 0.1;
  std::size_t patience = 20;
};

/// Everything one experiment needs: data geometry, shift, stream shape,
/// model dimensions and adaptation hyperparameters.
struct ScenarioConfig {
  std::string name = "unnamed";
  std::uint64_t seed = 1;
  ClassSplit split;
  std::size_t input_dim = 2;
  SourceSpec source;
  TransformSpec transform;
  StreamSpec stream;
  PretrainSpec pretrain;
  engine::HyperParams hyper;

  // Model dimensions; input_dim and the class count come from the fields above.
  std::size_t feature_dim = 32;
  std::size_t projection_dim = 16;
  std::vector<std::size_t> g_hidden = {64};
  std::size_t proj_hidden = 32;

  model::NetworkConfig network_config() const;
  void validate() const;
};

/// Parses a scenario file. The format is a JSON object with nested sections;
/// only "split" is required and "seed" is strongly recommended, everything
/// else falls back to the defaults above. Unknown keys anywhere are an error
/// so typos cannot silently fall back to defaults.
ScenarioConfig load_scenario(const std::filesystem::path& path);
ScenarioConfig parse_scenario(const std::string& text, const std::string& origin);

}  // namespace comet::scenario
