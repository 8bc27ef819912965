#pragma once

#include <cstddef>
#include <vector>

#include "comet/tensor.hpp"

namespace comet::num {

/// Handle to a node on a Tape. Only meaningful for the tape that issued it.
struct ValueId {
  std::size_t index = static_cast<std::size_t>(-1);
  bool valid() const { return index != static_cast<std::size_t>(-1); }
};

/// (row, col) coordinate into a rank-2 node value. Used by the sparse
/// reduction ops that the contrastive objective is assembled from.
struct IndexPair {
  std::size_t row = 0;
  std::size_t col = 0;
};

/// Reverse-mode automatic differentiation over a recorded computation.
///
/// A Tape is built for a single forward pass: leaves go in first (parameters
/// marked differentiable, data as constants), operations are appended in
/// execution order, and backward() walks the record once in reverse. Node
/// creation order is a topological order by construction, so gradient
/// accumulation order is fixed and results are bit-reproducible.
///
/// Forward values are computed eagerly through the same kernels exposed in
/// tensor.hpp. Gradients of every differentiable leaf are available after
/// backward(); leaves that the loss never touched report exact zeros.
class Tape {
 public:
  // -- leaves ---------------------------------------------------------------
  ValueId parameter(Tensor value);  // differentiable leaf
  ValueId constant(Tensor value);   // non-differentiable leaf

  // -- primitives -----------------------------------------------------------
  ValueId matmul(ValueId a, ValueId b);
  ValueId matmul_nt(ValueId a, ValueId b);  // A * B^T
  ValueId add(ValueId a, ValueId b);
  ValueId add_rowvec(ValueId a, ValueId bias);
  ValueId mul(ValueId a, ValueId b);
  ValueId scale(ValueId a, double c);
  ValueId relu(ValueId a);
  ValueId softmax(ValueId a);
  ValueId log_clamped(ValueId a);
  ValueId l2_normalize(ValueId a);
  ValueId sum_all(ValueId a);
  ValueId mean_all(ValueId a);
  ValueId concat_rows(const std::vector<ValueId>& parts);

  // -- sparse scalar reductions ---------------------------------------------
  // These exist for objectives that reduce over index sets of a similarity
  // matrix (with log-sum-exp stabilization where exponentials appear).

  /// sum_k coeffs[k] * a[pairs[k]]  -> scalar
  ValueId select_sum(ValueId a, std::vector<IndexPair> pairs, std::vector<double> coeffs);

  /// log(sum_k exp(a[pairs[k]]))  -> scalar, max-shifted for stability
  ValueId logsumexp_pairs(ValueId a, std::vector<IndexPair> pairs);

  /// log(exp(a) + exp(b)) on scalars, max-shifted for stability
  ValueId logaddexp(ValueId a, ValueId b);

  /// Sum of scalar nodes, accumulated in argument order.
  ValueId add_n(const std::vector<ValueId>& terms);

  // -- access ---------------------------------------------------------------
  const Tensor& value(ValueId id) const;

  /// Gradient of the last backward() root with respect to node `id`.
  /// Zero tensor for nodes off the loss's computation path.
  const Tensor& grad(ValueId id) const;

  /// Seeds d(root)/d(root) = 1 and propagates to all differentiable leaves.
  /// `root` must be scalar-valued. May be called once per tape.
  void backward(ValueId root);

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    Leaf, MatMul, MatMulNT, Add, AddRowVec, Mul, Scale, Relu, Softmax,
    LogClamped, L2Normalize, SumAll, MeanAll, ConcatRows, SelectSum,
    LogSumExpPairs, LogAddExp, AddN,
  };

  struct Node {
    Op op = Op::Leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    double aux = 0.0;                 // Scale factor
    std::vector<IndexPair> pairs;     // SelectSum / LogSumExpPairs
    std::vector<double> coeffs;       // SelectSum
  };

  ValueId push(Node node);
  ValueId make_op(Op op, Tensor value, std::initializer_list<std::size_t> inputs);
  Node& node(ValueId id);
  const Node& node(ValueId id) const;
  void backprop_node(std::size_t i);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace comet::num
