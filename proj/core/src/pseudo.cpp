#include "comet/pseudo.hpp"

#include <cmath>
#include <sstream>

#include "comet/error.hpp"

namespace comet::pseudo {

namespace {

void validate_row(const double* probs, std::size_t k) {
  if (k < 2) {
    throw Error(Error::Code::InvalidArgument,
                "[entropy] need at least 2 classes, got " + std::to_string(k));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (probs[i] < 0.0 || !std::isfinite(probs[i])) {
      throw Error(Error::Code::InvalidArgument,
                  "[entropy] probabilities must be finite and nonnegative");
    }
    sum += probs[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "[entropy] probabilities sum to " << sum << ", expected 1";
    throw Error(Error::Code::InvalidArgument, os.str());
  }
}

}  // namespace

void Thresholds::validate() const {
  if (!(lower >= 0.0 && lower < upper && upper <= 1.0)) {
    std::ostringstream os;
    os << "[thresholds] need 0 <= lower < upper <= 1, got lower=" << lower
       << " upper=" << upper;
    throw Error(Error::Code::InvalidArgument, os.str());
  }
}

double normalized_entropy(const double* probs, std::size_t k) {
  validate_row(probs, k);

  // The uniform vector is the entropy maximizer; return exactly 1 for it so
  // the top of the range is hit without rounding residue from k * (1/k).
  bool uniform = true;
  for (std::size_t i = 1; i < k && uniform; ++i) {
    uniform = probs[i] == probs[0];
  }
  if (uniform) return 1.0;

  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double p = probs[i];
    if (p == 0.0) continue;  // 0 log 0 := 0
    acc += p * std::log(std::max(p, num::kLogClamp));
  }
  const double value = -acc / std::log(static_cast<double>(k));
  // Clamp fp residue so callers can rely on the documented [0, 1] range.
  return value < 0.0 ? 0.0 : (value > 1.0 ? 1.0 : value);
}

double normalized_entropy(const num::Tensor& probs) {
  if (probs.rank() != 1) {
    throw Error(Error::Code::ShapeMismatch,
                "[entropy] expected a rank-1 tensor, got " + num::shape_str(probs.shape));
  }
  return normalized_entropy(probs.data.data(), probs.shape[0]);
}

std::size_t argmax_row(const double* row, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < k; ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

std::vector<PseudoLabel> assign(const num::Tensor& probs, const Thresholds& thresholds) {
  thresholds.validate();
  if (probs.rank() != 2) {
    throw Error(Error::Code::ShapeMismatch,
                "[pseudo.assign] expected [n, classes], got " + num::shape_str(probs.shape));
  }
  const std::size_t n = probs.shape[0], k = probs.shape[1];
  std::vector<PseudoLabel> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = probs.data.data() + i * k;
    const double entropy = normalized_entropy(row, k);
    if (entropy <= thresholds.lower) {
      out[i] = PseudoLabel{Tag::Known, argmax_row(row, k)};
    } else if (entropy >= thresholds.upper) {
      out[i] = PseudoLabel{Tag::Unknown, 0};
    } else {
      out[i] = PseudoLabel{Tag::Uncertain, 0};
    }
  }
  return out;
}

}  // namespace comet::pseudo
