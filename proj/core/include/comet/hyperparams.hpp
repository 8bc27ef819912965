#pragma once

namespace comet::engine {

/// Which loss terms drive the student update. Used by the ablation sweep;
/// the default keeps both terms.
enum class LossCombo { Both, ContrastiveOnly, EntropyOnly };

/// Whose feature extractor feeds a running prototype bank.
enum class FeatureSource { Teacher, Student };

/// Adaptation hyperparameters. Defaults reproduce the reference operating
/// point without any flags.
struct HyperParams {
  double alpha = 0.999;          // teacher EMA coefficient
  double delta_l = 0.25;         // pseudo-label lower entropy threshold
  double delta_u = 0.75;         // pseudo-label upper entropy threshold
  double delta = 0.5;            // inference-time rejection threshold
  double tau = 0.1;              // contrastive temperature
  double lambda = 0.1;           // entropy loss weight
  double learning_rate = 0.01;
  double momentum = 0.9;
  LossCombo loss_combo = LossCombo::Both;
  FeatureSource prototype_features = FeatureSource::Teacher;

  void validate() const;
};

}  // namespace comet::engine
