#include "comet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "comet/error.hpp"
#include "comet/rng.hpp"

namespace comet::num {

GradCheckReport finite_difference_check(const LossFn& loss,
                                        const ParameterSet& params,
                                        const GradientRecord& analytic,
                                        const GradCheckOptions& options) {
  if (!(options.step > 0.0)) {
    throw Error(Error::Code::InvalidArgument, "[gradcheck] step must be positive");
  }
  GradCheckReport report;
  ParameterSet work = params;

  for (const auto& [name, theta] : params) {
    const auto gi = analytic.find(name);
    if (gi == analytic.end() || gi->second.shape != theta.shape) {
      throw Error(Error::Code::ShapeMismatch,
                  "[gradcheck] analytic gradient missing or misshaped for '" + name + "'");
    }

    std::vector<std::size_t> coords(theta.data.size());
    for (std::size_t k = 0; k < coords.size(); ++k) coords[k] = k;
    if (options.max_coords > 0 && coords.size() > options.max_coords) {
      Rng rng(derive_seed(options.subset_seed, "gradcheck", std::hash<std::string>{}(name)));
      rng.shuffle(coords);
      coords.resize(options.max_coords);
      std::sort(coords.begin(), coords.end());
    }

    Tensor& slot = work.at(name);
    for (std::size_t k : coords) {
      const double original = slot.data[k];
      slot.data[k] = original + options.step;
      const double plus = loss(work);
      slot.data[k] = original - options.step;
      const double minus = loss(work);
      slot.data[k] = original;

      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = gi->second.data[k];
      ++report.coords_checked;

      const double mag = std::max(std::abs(a), std::abs(numeric));
      if (mag < options.zero_guard) continue;
      if (std::abs(a - numeric) <= options.abs_guard) continue;
      const double rel = std::abs(a - numeric) / mag;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_coordinate = name + "[" + std::to_string(k) + "]";
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }

  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace comet::num
