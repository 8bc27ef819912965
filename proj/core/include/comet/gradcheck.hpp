#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "comet/tensor.hpp"

namespace comet::num {

/// Scalar loss as a pure function of a parameter set. The checker calls this
/// repeatedly with perturbed copies; it must not carry state between calls.
using LossFn = std::function<double(const ParameterSet&)>;

struct GradCheckOptions {
  double step = 1e-5;            // central difference half-width
  double tolerance = 1e-4;       // max allowed relative error
  double zero_guard = 1e-7;      // |analytic| and |numeric| both below: treated equal
  // Central differences carry O(step^2) curvature error plus roundoff, and a
  // piecewise-linear kink inside the interval degrades that to O(step). A
  // |analytic - numeric| gap at or below this floor is attributed to the
  // probe rather than the gradient and counts as matching. 0 disables.
  double abs_guard = 0.0;
  std::size_t max_coords = 0;    // 0 = every coordinate; else a seeded subset per parameter
  std::uint64_t subset_seed = 0; // seed for coordinate subsampling
};

struct GradCheckReport {
  bool passed = true;
  double max_rel_error = 0.0;       // over compared coordinates
  std::size_t coords_checked = 0;
  std::string worst_coordinate;     // "name[i]" of the max error
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central-difference verification of an analytic gradient:
///   numeric = (loss(theta + h e_i) - loss(theta - h e_i)) / (2h)
/// compared coordinate-by-coordinate against `analytic`. Coordinates where
/// both sides are below zero_guard count as matching; otherwise the relative
/// error |a - n| / max(|a|, |n|) must stay within tolerance.
GradCheckReport finite_difference_check(const LossFn& loss,
                                        const ParameterSet& params,
                                        const GradientRecord& analytic,
                                        const GradCheckOptions& options = {});

}  // namespace comet::num
