#include "comet/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "comet/error.hpp"

namespace comet::num {

namespace {

[[noreturn]] void tape_error(Error::Code code, const std::string& msg) {
  throw Error(code, "[tape] " + msg);
}

void check_pairs(const char* op, const Tensor& value, const std::vector<IndexPair>& pairs) {
  if (value.rank() != 2) {
    tape_error(Error::Code::ShapeMismatch,
               std::string(op) + " expects a rank-2 input, got " + shape_str(value.shape));
  }
  for (const IndexPair& p : pairs) {
    if (p.row >= value.shape[0] || p.col >= value.shape[1]) {
      std::ostringstream os;
      os << op << " index (" << p.row << "," << p.col << ") outside "
         << shape_str(value.shape);
      tape_error(Error::Code::InvalidArgument, os.str());
    }
  }
}

}  // namespace

ValueId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return ValueId{nodes_.size() - 1};
}

Tape::Node& Tape::node(ValueId id) {
  if (!id.valid() || id.index >= nodes_.size()) {
    tape_error(Error::Code::InvalidArgument, "invalid node handle");
  }
  return nodes_[id.index];
}

const Tape::Node& Tape::node(ValueId id) const {
  if (!id.valid() || id.index >= nodes_.size()) {
    tape_error(Error::Code::InvalidArgument, "invalid node handle");
  }
  return nodes_[id.index];
}

ValueId Tape::parameter(Tensor value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

ValueId Tape::constant(Tensor value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

ValueId Tape::make_op(Op op, Tensor value, std::initializer_list<std::size_t> inputs) {
  Node n;
  n.op = op;
  n.inputs = inputs;
  n.value = std::move(value);
  for (std::size_t in : n.inputs) n.requires_grad |= nodes_[in].requires_grad;
  return push(std::move(n));
}

ValueId Tape::matmul(ValueId a, ValueId b) {
  return make_op(Op::MatMul, num::matmul(node(a).value, node(b).value), {a.index, b.index});
}

ValueId Tape::matmul_nt(ValueId a, ValueId b) {
  return make_op(Op::MatMulNT, num::matmul_nt(node(a).value, node(b).value), {a.index, b.index});
}

ValueId Tape::add(ValueId a, ValueId b) {
  return make_op(Op::Add, num::add(node(a).value, node(b).value), {a.index, b.index});
}

ValueId Tape::add_rowvec(ValueId a, ValueId bias) {
  return make_op(Op::AddRowVec, num::add_rowvec(node(a).value, node(bias).value),
                 {a.index, bias.index});
}

ValueId Tape::mul(ValueId a, ValueId b) {
  return make_op(Op::Mul, num::mul(node(a).value, node(b).value), {a.index, b.index});
}

ValueId Tape::scale(ValueId a, double c) {
  ValueId id = make_op(Op::Scale, num::scale(node(a).value, c), {a.index});
  node(id).aux = c;
  return id;
}

ValueId Tape::relu(ValueId a) {
  return make_op(Op::Relu, num::relu(node(a).value), {a.index});
}

ValueId Tape::softmax(ValueId a) {
  return make_op(Op::Softmax, num::softmax(node(a).value), {a.index});
}

ValueId Tape::log_clamped(ValueId a) {
  return make_op(Op::LogClamped, num::log_clamped(node(a).value), {a.index});
}

ValueId Tape::l2_normalize(ValueId a) {
  return make_op(Op::L2Normalize, num::l2_normalize(node(a).value), {a.index});
}

ValueId Tape::sum_all(ValueId a) {
  return make_op(Op::SumAll, num::sum_all(node(a).value), {a.index});
}

ValueId Tape::mean_all(ValueId a) {
  return make_op(Op::MeanAll, num::mean_all(node(a).value), {a.index});
}

ValueId Tape::concat_rows(const std::vector<ValueId>& parts) {
  if (parts.empty()) {
    tape_error(Error::Code::DegenerateInput, "concat_rows with no parts");
  }
  Node n;
  n.op = Op::ConcatRows;
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (ValueId p : parts) {
    n.inputs.push_back(p.index);
    values.push_back(node(p).value);
    n.requires_grad |= node(p).requires_grad;
  }
  n.value = num::concat_rows(values);
  return push(std::move(n));
}

ValueId Tape::select_sum(ValueId a, std::vector<IndexPair> pairs, std::vector<double> coeffs) {
  if (pairs.size() != coeffs.size()) {
    tape_error(Error::Code::InvalidArgument, "select_sum pairs/coeffs length mismatch");
  }
  check_pairs("select_sum", node(a).value, pairs);
  const Tensor& v = node(a).value;
  const std::size_t cols = v.shape[1];
  double acc = 0.0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    acc += coeffs[k] * v.data[pairs[k].row * cols + pairs[k].col];
  }
  Node n;
  n.op = Op::SelectSum;
  n.inputs = {a.index};
  n.value = Tensor::scalar(acc);
  n.pairs = std::move(pairs);
  n.coeffs = std::move(coeffs);
  n.requires_grad = node(a).requires_grad;
  return push(std::move(n));
}

ValueId Tape::logsumexp_pairs(ValueId a, std::vector<IndexPair> pairs) {
  if (pairs.empty()) {
    tape_error(Error::Code::DegenerateInput, "logsumexp_pairs over an empty set");
  }
  check_pairs("logsumexp_pairs", node(a).value, pairs);
  const Tensor& v = node(a).value;
  const std::size_t cols = v.shape[1];
  double mx = -std::numeric_limits<double>::infinity();
  for (const IndexPair& p : pairs) {
    mx = std::max(mx, v.data[p.row * cols + p.col]);
  }
  double acc = 0.0;
  for (const IndexPair& p : pairs) {
    acc += std::exp(v.data[p.row * cols + p.col] - mx);
  }
  Node n;
  n.op = Op::LogSumExpPairs;
  n.inputs = {a.index};
  n.value = Tensor::scalar(mx + std::log(acc));
  n.pairs = std::move(pairs);
  n.requires_grad = node(a).requires_grad;
  return push(std::move(n));
}

ValueId Tape::logaddexp(ValueId a, ValueId b) {
  const double av = node(a).value.scalar_value();
  const double bv = node(b).value.scalar_value();
  const double mx = std::max(av, bv);
  const double out = mx + std::log(std::exp(av - mx) + std::exp(bv - mx));
  Node n;
  n.op = Op::LogAddExp;
  n.inputs = {a.index, b.index};
  n.value = Tensor::scalar(out);
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

ValueId Tape::add_n(const std::vector<ValueId>& terms) {
  if (terms.empty()) {
    tape_error(Error::Code::DegenerateInput, "add_n with no terms");
  }
  Node n;
  n.op = Op::AddN;
  double acc = 0.0;
  for (ValueId t : terms) {
    acc += node(t).value.scalar_value();
    n.inputs.push_back(t.index);
    n.requires_grad |= node(t).requires_grad;
  }
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

const Tensor& Tape::value(ValueId id) const { return node(id).value; }

const Tensor& Tape::grad(ValueId id) const {
  const Node& n = node(id);
  if (!backward_done_) {
    tape_error(Error::Code::InvalidState, "grad queried before backward()");
  }
  return n.grad;
}

void Tape::backward(ValueId root) {
  Node& r = node(root);
  if (backward_done_) {
    tape_error(Error::Code::InvalidState, "backward() already ran on this tape");
  }
  if (r.value.numel() != 1) {
    tape_error(Error::Code::ShapeMismatch,
               "backward root must be scalar, got " + shape_str(r.value.shape));
  }
  for (Node& n : nodes_) {
    n.grad = Tensor::zeros(n.value.shape);
  }
  r.grad.data[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (!nodes_[i].requires_grad || nodes_[i].op == Op::Leaf) continue;
    backprop_node(i);
  }
  backward_done_ = true;
}

void Tape::backprop_node(std::size_t i) {
  Node& n = nodes_[i];
  const Tensor& g = n.grad;
  auto in = [&](std::size_t k) -> Node& { return nodes_[n.inputs[k]]; };

  switch (n.op) {
    case Op::MatMul: {
      // C = A B: dA += G B^T, dB += A^T G
      Node& a = in(0);
      Node& b = in(1);
      if (a.requires_grad) a.grad = num::add(a.grad, num::matmul_nt(g, b.value));
      if (b.requires_grad) b.grad = num::add(b.grad, num::matmul_tn(a.value, g));
      break;
    }
    case Op::MatMulNT: {
      // C = A B^T: dA += G B, dB += G^T A
      Node& a = in(0);
      Node& b = in(1);
      if (a.requires_grad) a.grad = num::add(a.grad, num::matmul(g, b.value));
      if (b.requires_grad) b.grad = num::add(b.grad, num::matmul_tn(g, a.value));
      break;
    }
    case Op::Add: {
      for (std::size_t k = 0; k < 2; ++k) {
        if (in(k).requires_grad) in(k).grad = num::add(in(k).grad, g);
      }
      break;
    }
    case Op::AddRowVec: {
      Node& a = in(0);
      Node& bias = in(1);
      if (a.requires_grad) a.grad = num::add(a.grad, g);
      if (bias.requires_grad) {
        const std::size_t rows = g.shape[0], cols = g.shape[1];
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            bias.grad.data[c] += g.data[r * cols + c];
          }
        }
      }
      break;
    }
    case Op::Mul: {
      Node& a = in(0);
      Node& b = in(1);
      if (a.requires_grad) a.grad = num::add(a.grad, num::mul(g, b.value));
      if (b.requires_grad) b.grad = num::add(b.grad, num::mul(g, a.value));
      break;
    }
    case Op::Scale: {
      Node& a = in(0);
      if (a.requires_grad) a.grad = num::add(a.grad, num::scale(g, n.aux));
      break;
    }
    case Op::Relu: {
      Node& a = in(0);
      if (!a.requires_grad) break;
      for (std::size_t k = 0; k < g.data.size(); ++k) {
        if (a.value.data[k] > 0.0) a.grad.data[k] += g.data[k];
      }
      break;
    }
    case Op::Softmax: {
      // dx_j = p_j (g_j - sum_k g_k p_k), row-wise
      Node& a = in(0);
      if (!a.requires_grad) break;
      const std::size_t cols = n.value.rank() == 2 ? n.value.shape[1] : n.value.shape[0];
      const std::size_t rows = n.value.numel() / cols;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* p = n.value.data.data() + r * cols;
        const double* gr = g.data.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * p[c];
        for (std::size_t c = 0; c < cols; ++c) {
          a.grad.data[r * cols + c] += p[c] * (gr[c] - dot);
        }
      }
      break;
    }
    case Op::LogClamped: {
      // Below the clamp the output is constant, so the derivative is zero.
      Node& a = in(0);
      if (!a.requires_grad) break;
      for (std::size_t k = 0; k < g.data.size(); ++k) {
        const double x = a.value.data[k];
        if (x > kLogClamp) a.grad.data[k] += g.data[k] / x;
      }
      break;
    }
    case Op::L2Normalize: {
      // y = x / |x|: dx = (g - (g . y) y) / |x|, row-wise
      Node& a = in(0);
      if (!a.requires_grad) break;
      const std::size_t cols = n.value.rank() == 2 ? n.value.shape[1] : n.value.shape[0];
      const std::size_t rows = n.value.numel() / cols;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a.value.data.data() + r * cols;
        const double* y = n.value.data.data() + r * cols;
        const double* gr = g.data.data() + r * cols;
        double sq = 0.0, dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          sq += x[c] * x[c];
          dot += gr[c] * y[c];
        }
        const double norm = std::sqrt(sq);
        for (std::size_t c = 0; c < cols; ++c) {
          a.grad.data[r * cols + c] += (gr[c] - dot * y[c]) / norm;
        }
      }
      break;
    }
    case Op::SumAll: {
      Node& a = in(0);
      if (!a.requires_grad) break;
      const double gv = g.data[0];
      for (double& d : a.grad.data) d += gv;
      break;
    }
    case Op::MeanAll: {
      Node& a = in(0);
      if (!a.requires_grad) break;
      const double gv = g.data[0] / static_cast<double>(a.value.numel());
      for (double& d : a.grad.data) d += gv;
      break;
    }
    case Op::ConcatRows: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        Node& p = in(k);
        const std::size_t count = p.value.numel();
        if (p.requires_grad) {
          for (std::size_t j = 0; j < count; ++j) {
            p.grad.data[j] += g.data[offset + j];
          }
        }
        offset += count;
      }
      break;
    }
    case Op::SelectSum: {
      Node& a = in(0);
      if (!a.requires_grad) break;
      const double gv = g.data[0];
      const std::size_t cols = a.value.shape[1];
      for (std::size_t k = 0; k < n.pairs.size(); ++k) {
        a.grad.data[n.pairs[k].row * cols + n.pairs[k].col] += gv * n.coeffs[k];
      }
      break;
    }
    case Op::LogSumExpPairs: {
      // d lse / d x_p = exp(x_p - lse); duplicated pairs accumulate.
      Node& a = in(0);
      if (!a.requires_grad) break;
      const double gv = g.data[0];
      const double lse = n.value.data[0];
      const std::size_t cols = a.value.shape[1];
      for (const IndexPair& p : n.pairs) {
        const double x = a.value.data[p.row * cols + p.col];
        a.grad.data[p.row * cols + p.col] += gv * std::exp(x - lse);
      }
      break;
    }
    case Op::LogAddExp: {
      const double gv = g.data[0];
      const double out = n.value.data[0];
      for (std::size_t k = 0; k < 2; ++k) {
        Node& t = in(k);
        if (t.requires_grad) {
          t.grad.data[0] += gv * std::exp(t.value.data[0] - out);
        }
      }
      break;
    }
    case Op::AddN: {
      const double gv = g.data[0];
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        if (in(k).requires_grad) in(k).grad.data[0] += gv;
      }
      break;
    }
    case Op::Leaf:
      break;
  }
}

}  // namespace comet::num
