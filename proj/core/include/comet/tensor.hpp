#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace comet::num {

/// Dense row-major array of 64-bit reals with explicit shape. Rank 0
/// (scalar), 1 (vector) and 2 (matrix) are what the pipeline uses.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t numel() const;
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return shape.empty(); }

  /// Rank-2 accessors. Checked only by the debug asserts in at().
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  double scalar_value() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

/// "3x4" style rendering for error messages.
std::string shape_str(const std::vector<std::size_t>& shape);

// ---------------------------------------------------------------------------
// Value-level primitives. Every differentiable operation the pipeline needs
// exists here as a pure function; the autodiff tape wraps these same kernels
// so evaluated and recorded forward passes cannot drift apart.
// Shape violations raise Error{ShapeMismatch} naming the primitive.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [n,k] x [k,m] -> [n,m]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [n,k] x [m,k]^T -> [n,m]
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // [k,n]^T x [k,m] -> [n,m]
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& a, const Tensor& bias);  // [n,m] + [m] per row
Tensor mul(const Tensor& a, const Tensor& b);            // elementwise
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);

/// Softmax over the last axis, stabilized by per-row max subtraction.
Tensor softmax(const Tensor& a);

/// Natural log with inputs clamped up to kLogClamp first, so exact zeros
/// (one-hot probabilities) stay finite.
Tensor log_clamped(const Tensor& a);
inline constexpr double kLogClamp = 1e-12;

/// Divides each row by its Euclidean norm. A zero-norm row is degenerate
/// and raises Error{DegenerateInput} rather than producing NaNs.
Tensor l2_normalize(const Tensor& a);

Tensor sum_all(const Tensor& a);   // -> scalar
Tensor mean_all(const Tensor& a);  // -> scalar
Tensor concat_rows(const std::vector<Tensor>& parts);

/// Cosine similarity of two equal-length vectors. Zero-norm input is an error.
double cosine_similarity(const Tensor& a, const Tensor& b);

/// Named parameter collection. std::map keeps iteration deterministic.
using ParameterSet = std::map<std::string, Tensor>;
using GradientRecord = std::map<std::string, Tensor>;

/// True when both sets hold the same names with the same shapes.
bool structurally_equal(const ParameterSet& a, const ParameterSet& b);

}  // namespace comet::num
