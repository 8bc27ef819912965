#include "comet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "comet/error.hpp"

namespace comet::num {

namespace {

[[noreturn]] void shape_error(const char* primitive, const Tensor& a, const Tensor& b) {
  std::ostringstream os;
  os << "[" << primitive << "] operands do not conform: " << shape_str(a.shape)
     << " vs " << shape_str(b.shape);
  throw Error(Error::Code::ShapeMismatch, os.str());
}

[[noreturn]] void shape_error(const char* primitive, const Tensor& a, const char* detail) {
  std::ostringstream os;
  os << "[" << primitive << "] " << detail << ", got " << shape_str(a.shape);
  throw Error(Error::Code::ShapeMismatch, os.str());
}

void require_matrix(const char* primitive, const Tensor& a) {
  if (a.rank() != 2) shape_error(primitive, a, "expected a rank-2 operand");
}

/// Rows/cols view that treats a vector as a single row, so the "last axis"
/// operations share one code path for rank 1 and rank 2.
struct RowView {
  std::size_t rows, cols;
};

RowView row_view(const char* primitive, const Tensor& a) {
  if (a.rank() == 1) return {1, a.shape[0]};
  if (a.rank() == 2) return {a.shape[0], a.shape[1]};
  shape_error(primitive, a, "expected rank 1 or 2");
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  std::size_t n = 1;
  for (std::size_t dim : shape) n *= dim;
  if (n != data.size()) {
    std::ostringstream os;
    os << "[tensor] shape " << shape_str(shape) << " wants " << n
       << " elements, got " << data.size();
    throw Error(Error::Code::ShapeMismatch, os.str());
  }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t dim : shape) n *= dim;
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  std::size_t n = 1;
  for (std::size_t dim : shape) n *= dim;
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::vector(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::numel() const { return data.size(); }

std::size_t Tensor::rows() const { return shape.empty() ? 1 : shape[0]; }

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape[1];
  if (rank() == 1) return shape[0];
  return 1;
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }

double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

double Tensor::scalar_value() const {
  if (numel() != 1) {
    throw Error(Error::Code::ShapeMismatch,
                "[tensor.scalar_value] expected a single element, got " + shape_str(shape));
  }
  return data[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  if (shape.empty()) return "scalar";
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.shape[1] != b.shape[0]) shape_error("matmul", a, b);
  const std::size_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double av = a.data[i * k + l];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) {
        out.data[i * m + j] += av * b.data[l * m + j];
      }
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix("matmul_nt", a);
  require_matrix("matmul_nt", b);
  if (a.shape[1] != b.shape[1]) shape_error("matmul_nt", a, b);
  const std::size_t n = a.shape[0], k = a.shape[1], m = b.shape[0];
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) {
        acc += a.data[i * k + l] * b.data[j * k + l];
      }
      out.data[i * m + j] = acc;
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix("matmul_tn", a);
  require_matrix("matmul_tn", b);
  if (a.shape[0] != b.shape[0]) shape_error("matmul_tn", a, b);
  const std::size_t k = a.shape[0], n = a.shape[1], m = b.shape[1];
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t l = 0; l < k; ++l) {
    for (std::size_t i = 0; i < n; ++i) {
      const double av = a.data[l * n + i];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) {
        out.data[i * m + j] += av * b.data[l * m + j];
      }
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_error("add", a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_error("sub", a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& bias) {
  require_matrix("add_rowvec", a);
  if (bias.rank() != 1 || bias.shape[0] != a.shape[1]) shape_error("add_rowvec", a, bias);
  Tensor out = a;
  const std::size_t m = a.shape[1];
  for (std::size_t i = 0; i < a.shape[0]; ++i) {
    for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] += bias.data[j];
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_error("mul", a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (double& v : out.data) v *= c;
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor softmax(const Tensor& a) {
  const RowView rv = row_view("softmax", a);
  Tensor out = a;
  for (std::size_t i = 0; i < rv.rows; ++i) {
    double* row = out.data.data() + i * rv.cols;
    double mx = row[0];
    for (std::size_t j = 1; j < rv.cols; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < rv.cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      denom += row[j];
    }
    for (std::size_t j = 0; j < rv.cols; ++j) row[j] /= denom;
  }
  return out;
}

Tensor log_clamped(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data) v = std::log(std::max(v, kLogClamp));
  return out;
}

Tensor l2_normalize(const Tensor& a) {
  const RowView rv = row_view("l2_normalize", a);
  Tensor out = a;
  for (std::size_t i = 0; i < rv.rows; ++i) {
    double* row = out.data.data() + i * rv.cols;
    double sq = 0.0;
    for (std::size_t j = 0; j < rv.cols; ++j) sq += row[j] * row[j];
    const double norm = std::sqrt(sq);
    if (norm == 0.0) {
      std::ostringstream os;
      os << "[l2_normalize] row " << i << " has zero norm";
      throw Error(Error::Code::DegenerateInput, os.str());
    }
    for (std::size_t j = 0; j < rv.cols; ++j) row[j] /= norm;
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data) acc += v;
  return Tensor::scalar(acc);
}

Tensor mean_all(const Tensor& a) {
  if (a.numel() == 0) {
    throw Error(Error::Code::DegenerateInput, "[mean_all] empty tensor");
  }
  return Tensor::scalar(sum_all(a).data[0] / static_cast<double>(a.numel()));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw Error(Error::Code::DegenerateInput, "[concat_rows] nothing to concatenate");
  }
  std::size_t cols = 0, rows = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 2) shape_error("concat_rows", p, "expected rank-2 parts");
    if (cols == 0) cols = p.shape[1];
    if (p.shape[1] != cols) shape_error("concat_rows", parts[0], p);
    rows += p.shape[0];
  }
  Tensor out = Tensor::zeros({rows, cols});
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data.begin(), p.data.end(), out.data.begin() + offset);
    offset += p.data.size();
  }
  return out;
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.shape != b.shape) {
    shape_error("cosine_similarity", a, b);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    dot += a.data[i] * b.data[i];
    na += a.data[i] * a.data[i];
    nb += b.data[i] * b.data[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw Error(Error::Code::DegenerateInput,
                "[cosine_similarity] zero-norm operand");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

bool structurally_equal(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.shape != ib->second.shape) return false;
  }
  return true;
}

}  // namespace comet::num
