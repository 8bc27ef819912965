#pragma once

#include "comet/tensor.hpp"

namespace comet::num {

/// Classical SGD with momentum:
///   v <- momentum * v + g
///   theta <- theta - learning_rate * v
/// Velocity buffers are created at construction, zeroed, one per parameter.
class SgdMomentum {
 public:
  SgdMomentum(const ParameterSet& params, double learning_rate, double momentum);

  /// One update over all parameters in name order. Parameters missing from
  /// `grads` are treated as zero-gradient (their velocity still decays).
  void step(ParameterSet& params, const GradientRecord& grads);

  double learning_rate() const { return learning_rate_; }
  double momentum() const { return momentum_; }
  const ParameterSet& velocity() const { return velocity_; }

 private:
  double learning_rate_;
  double momentum_;
  ParameterSet velocity_;
};

}  // namespace comet::num
