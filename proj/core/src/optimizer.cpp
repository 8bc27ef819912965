#include "comet/optimizer.hpp"

#include "comet/error.hpp"

namespace comet::num {

SgdMomentum::SgdMomentum(const ParameterSet& params, double learning_rate, double momentum)
    : learning_rate_(learning_rate), momentum_(momentum) {
  if (!(learning_rate > 0.0)) {
    throw Error(Error::Code::InvalidArgument, "[sgd] learning_rate must be positive");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw Error(Error::Code::InvalidArgument, "[sgd] momentum must lie in [0,1)");
  }
  for (const auto& [name, value] : params) {
    velocity_.emplace(name, Tensor::zeros(value.shape));
  }
}

void SgdMomentum::step(ParameterSet& params, const GradientRecord& grads) {
  if (params.size() != velocity_.size()) {
    throw Error(Error::Code::ShapeMismatch,
                "[sgd] parameter set changed since construction");
  }
  auto vi = velocity_.begin();
  for (auto pi = params.begin(); pi != params.end(); ++pi, ++vi) {
    if (pi->first != vi->first || pi->second.shape != vi->second.shape) {
      throw Error(Error::Code::ShapeMismatch,
                  "[sgd] parameter '" + pi->first + "' does not match optimizer state");
    }
    Tensor& theta = pi->second;
    Tensor& v = vi->second;
    const auto gi = grads.find(pi->first);
    if (gi != grads.end() && gi->second.shape != theta.shape) {
      throw Error(Error::Code::ShapeMismatch,
                  "[sgd] gradient for '" + pi->first + "' has shape " +
                      shape_str(gi->second.shape) + ", parameter is " +
                      shape_str(theta.shape));
    }
    for (std::size_t k = 0; k < theta.data.size(); ++k) {
      const double g = gi != grads.end() ? gi->second.data[k] : 0.0;
      v.data[k] = momentum_ * v.data[k] + g;
      theta.data[k] -= learning_rate_ * v.data[k];
    }
  }
}

}  // namespace comet::num
