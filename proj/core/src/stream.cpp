#include "comet/stream.hpp"

#include <cmath>

#include "comet/error.hpp"

namespace comet::stream {

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Radius factor for target-private means when no unused axis is left for
/// them. A softmax model is confident everywhere except near its decision
/// boundaries, so interior placements stay close to the origin where those
/// boundaries meet.
constexpr double kPrivateRadiusScale = 0.25;

}  // namespace

num::Tensor class_means(const scenario::ScenarioConfig& cfg) {
  const std::size_t n_src = cfg.split.source_classes();
  const std::size_t n_tp = cfg.split.target_private;
  const std::size_t total = cfg.split.total_classes();
  const std::size_t dim = cfg.input_dim;
  const double s = cfg.source.separation;

  num::Tensor means = num::Tensor::zeros({total, dim});

  if (dim >= n_src) {
    // Axis placement: source class c at s * e_c. Pairwise distance s*sqrt(2).
    for (std::size_t c = 0; c < n_src; ++c) {
      means.at(c, c) = s;
    }
    // Target-private class j: its own axis whenever one is left over. That
    // is a direction the source model never saw class structure in, the
    // analogue of a genuinely novel category, at the same scale as the
    // known classes. With no spare axes, fall back to a short mixture of
    // three consecutive source axes.
    for (std::size_t j = 0; j < n_tp; ++j) {
      if (n_src + j < dim) {
        means.at(n_src + j, n_src + j) = s;
        continue;
      }
      num::Tensor v = num::Tensor::zeros({dim});
      for (std::size_t k = 0; k < 3; ++k) {
        v.data[(j + k) % n_src] += 1.0;
      }
      double norm = 0.0;
      for (double x : v.data) norm += x * x;
      norm = std::sqrt(norm);
      for (std::size_t d = 0; d < dim; ++d) {
        means.at(n_src + j, d) = kPrivateRadiusScale * s * v.data[d] / norm;
      }
    }
  } else {
    // Circle placement in the first two axes for low-dimensional scenarios.
    // Radius chosen so adjacent means sit exactly `separation` apart.
    const double radius = s / (2.0 * std::sin(kPi / static_cast<double>(n_src)));
    for (std::size_t c = 0; c < n_src; ++c) {
      const double angle = 2.0 * kPi * static_cast<double>(c) / static_cast<double>(n_src);
      means.at(c, 0) = radius * std::cos(angle);
      means.at(c, 1) = radius * std::sin(angle);
    }
    for (std::size_t j = 0; j < n_tp; ++j) {
      const double angle =
          2.0 * kPi * (static_cast<double>(j) + 0.5) / static_cast<double>(std::max<std::size_t>(n_tp, 1));
      means.at(n_src + j, 0) = kPrivateRadiusScale * radius * std::cos(angle);
      means.at(n_src + j, 1) = kPrivateRadiusScale * radius * std::sin(angle);
    }
  }
  return means;
}

void sample_class(const num::Tensor& means, std::size_t c, double sigma, Rng& rng,
                  double* out, std::size_t dim) {
  for (std::size_t d = 0; d < dim; ++d) {
    out[d] = means.at(c, d) + sigma * rng.normal();
  }
}

DomainShift::DomainShift(const scenario::TransformSpec& spec, std::size_t input_dim,
                         double source_sigma) {
  for (double deg : spec.rotations_deg) {
    rotations_rad_.push_back(deg * kPi / 180.0);
  }
  if (2 * rotations_rad_.size() > input_dim) {
    throw Error(Error::Code::InvalidArgument,
                "[shift] more rotation planes than the input dimension holds");
  }
  if (spec.translation) {
    translation_ = *spec.translation;
    if (translation_.size() != input_dim) {
      throw Error(Error::Code::ShapeMismatch, "[shift] translation length != input_dim");
    }
  } else {
    // Magnitude translation_scale * sigma, spread evenly over all axes.
    const double per_axis = spec.translation_scale * source_sigma /
                            std::sqrt(static_cast<double>(input_dim));
    translation_.assign(input_dim, per_axis);
  }
  if (spec.axis_scale.size() == 1) {
    axis_scale_.assign(input_dim, spec.axis_scale[0]);
  } else if (spec.axis_scale.size() == input_dim) {
    axis_scale_ = spec.axis_scale;
  } else {
    throw Error(Error::Code::ShapeMismatch, "[shift] axis_scale length != input_dim");
  }
  noise_sigma_ = spec.match_source_noise ? source_sigma : spec.noise_sigma;
  identity_ = spec.is_identity();
}

void DomainShift::apply(double* x, std::size_t dim, Rng& rng) const {
  if (identity_) return;
  for (std::size_t k = 0; k < rotations_rad_.size(); ++k) {
    const double c = std::cos(rotations_rad_[k]);
    const double s = std::sin(rotations_rad_[k]);
    const double a = x[2 * k], b = x[2 * k + 1];
    x[2 * k] = c * a - s * b;
    x[2 * k + 1] = s * a + c * b;
  }
  for (std::size_t d = 0; d < dim; ++d) {
    x[d] = axis_scale_[d] * x[d] + translation_[d];
    if (noise_sigma_ > 0.0) {
      x[d] += noise_sigma_ * rng.normal();
    }
  }
}

SourceDataset generate_source_dataset(const scenario::ScenarioConfig& cfg) {
  cfg.validate();
  const num::Tensor means = class_means(cfg);
  const std::size_t n_src = cfg.split.source_classes();
  const std::size_t per_class = cfg.source.samples_per_class;
  const std::size_t dim = cfg.input_dim;

  SourceDataset out;
  out.inputs = num::Tensor::zeros({n_src * per_class, dim});
  out.labels.reserve(n_src * per_class);

  Rng rng(derive_seed(cfg.seed, "source"));
  std::size_t row = 0;
  for (std::size_t c = 0; c < n_src; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      sample_class(means, c, cfg.source.sigma, rng, &out.inputs.data[row * dim], dim);
      out.labels.push_back(c);
    }
  }
  return out;
}

TargetStream::TargetStream(const scenario::ScenarioConfig& cfg)
    : means_(class_means(cfg)),
      split_(cfg.split),
      shift_(cfg.transform, cfg.input_dim, cfg.source.sigma),
      sigma_(cfg.source.sigma),
      seed_(cfg.seed),
      input_dim_(cfg.input_dim),
      batch_count_(cfg.stream.num_batches),
      batch_size_(cfg.stream.batch_size) {
  cfg.validate();
  // Shared classes keep their source ids; target-private follow after the
  // source-private block in the global mean table.
  for (std::size_t c = 0; c < split_.shared; ++c) {
    target_class_ids_.push_back(c);
  }
  for (std::size_t j = 0; j < split_.target_private; ++j) {
    target_class_ids_.push_back(split_.source_classes() + j);
  }
}

TargetBatch TargetStream::next() {
  if (exhausted()) {
    throw Error(Error::Code::InvalidState,
                "[stream] all " + std::to_string(batch_count_) + " batches already consumed");
  }
  const std::size_t t = cursor_++;
  TargetBatch batch;
  batch.index = t;
  batch.inputs = num::Tensor::zeros({batch_size_, input_dim_});
  batch.truth.reserve(batch_size_);

  Rng rng(derive_seed(seed_, "target", t));
  for (std::size_t i = 0; i < batch_size_; ++i) {
    const std::size_t pick = rng.index(target_class_ids_.size());
    const std::size_t global_class = target_class_ids_[pick];
    double* row = &batch.inputs.data[i * input_dim_];
    sample_class(means_, global_class, sigma_, rng, row, input_dim_);
    shift_.apply(row, input_dim_, rng);
    const bool is_private = global_class >= split_.source_classes();
    batch.truth.push_back(is_private ? unknown_label(split_) : global_class);
  }
  return batch;
}

num::Tensor augment(const num::Tensor& row, double sigma_aug, Rng& rng) {
  if (row.rank() != 1) {
    throw Error(Error::Code::ShapeMismatch,
                "[augment] expected a rank-1 sample, got " + num::shape_str(row.shape));
  }
  num::Tensor out = row;
  if (sigma_aug == 0.0) return out;
  for (double& v : out.data) v += sigma_aug * rng.normal();
  return out;
}

}  // namespace comet::stream
