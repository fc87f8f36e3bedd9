#include "mcgcl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "mcgcl/errors.hpp"

namespace mcgcl {

// ---------------------------------------------------------------------------
// Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw DimensionError("Matrix: " + std::to_string(values_.size()) + " values for shape " +
                         shape_string(rows, cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
    values_.insert(values_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

// ---------------------------------------------------------------------------
// CsrMatrix

CsrMatrix CsrMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  CsrMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(rows + 1, 0);
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto& t = triplets[k];
    if (t.row >= rows || t.col >= cols) {
      throw DimensionError("CsrMatrix: entry (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                           ") outside " + shape_string(rows, cols));
    }
    if (!m.col_idx.empty() && k > 0 && triplets[k - 1].row == t.row && triplets[k - 1].col == t.col) {
      m.values.back() += t.value;
      continue;
    }
    m.col_idx.push_back(static_cast<std::uint32_t>(t.col));
    m.values.push_back(t.value);
    ++m.row_ptr[t.row + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

CsrMatrix CsrMatrix::selection(std::size_t cols, std::span<const std::size_t> picks) {
  CsrMatrix m;
  m.rows = picks.size();
  m.cols = cols;
  m.row_ptr.resize(picks.size() + 1);
  m.col_idx.reserve(picks.size());
  m.values.assign(picks.size(), 1.0);
  for (std::size_t r = 0; r < picks.size(); ++r) {
    if (picks[r] >= cols) {
      throw DimensionError("selection: row index " + std::to_string(picks[r]) + " out of range " +
                           std::to_string(cols));
    }
    m.row_ptr[r] = r;
    m.col_idx.push_back(static_cast<std::uint32_t>(picks[r]));
  }
  m.row_ptr[picks.size()] = picks.size();
  return m;
}

Matrix CsrMatrix::to_dense() const {
  Matrix d(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) d(r, col_idx[p]) += values[p];
  return d;
}

CsrMatrix CsrMatrix::transposed() const {
  CsrMatrix t;
  t.rows = cols;
  t.cols = rows;
  t.row_ptr.assign(cols + 1, 0);
  for (auto c : col_idx) ++t.row_ptr[c + 1];
  for (std::size_t c = 0; c < cols; ++c) t.row_ptr[c + 1] += t.row_ptr[c];
  t.col_idx.resize(nnz());
  t.values.resize(nnz());
  std::vector<std::size_t> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) {
      std::size_t dst = cursor[col_idx[p]]++;
      t.col_idx[dst] = static_cast<std::uint32_t>(r);
      t.values[dst] = values[p];
    }
  }
  return t;
}

Matrix CsrMatrix::multiply(const Matrix& rhs) const {
  if (cols != rhs.rows()) {
    throw DimensionError("matmul: " + shape_string(rows, cols) + " vs " + shape_string(rhs.rows(), rhs.cols()));
  }
  const std::size_t m = rhs.cols();
  Matrix out(rows, m);
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.data() + r * m;
    for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) {
      const double v = values[p];
      const double* x = rhs.data() + static_cast<std::size_t>(col_idx[p]) * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += v * x[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nodes and tape

namespace detail {

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Matrix value;
  Matrix grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool leaf = true;
  std::shared_ptr<const CsrMatrix> sparse;
  std::shared_ptr<const CsrMatrix> sparse_t;  // lazily built transpose

  const Matrix& dense() {
    if (sparse && value.rows() != rows) value = sparse->to_dense();
    return value;
  }
  const CsrMatrix& sparse_transposed() {
    if (!sparse_t) sparse_t = std::make_shared<CsrMatrix>(sparse->transposed());
    return *sparse_t;
  }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(const Matrix& g, std::span<const NodePtr> in, Node& out)>;

namespace {

struct Record {
  Primitive op;
  std::vector<NodePtr> inputs;
  NodePtr output;
  BackwardFn backward;
};

thread_local Tape* active = nullptr;

void accumulate(Node& n, Matrix&& g) {
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = std::move(g);
    n.has_grad = true;
    return;
  }
  auto dst = n.grad.values();
  auto src = g.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

struct Tape::Impl {
  std::vector<Record> records;
  bool consumed = false;
};

Tape::Tape() : impl_(std::make_unique<Impl>()) {}
Tape::~Tape() {
  if (active == this) active = nullptr;
}
Tape::Tape(Tape&&) noexcept = default;
Tape& Tape::operator=(Tape&&) noexcept = default;

std::size_t Tape::size() const { return impl_->records.size(); }
bool Tape::consumed() const { return impl_->consumed; }
Primitive Tape::primitive_at(std::size_t i) const { return impl_->records.at(i).op; }

bool Tape::is_topologically_ordered() const {
  std::unordered_set<const Node*> produced;
  for (const auto& r : impl_->records) {
    for (const auto& in : r.inputs) {
      if (!in->leaf && !produced.contains(in.get())) return false;
    }
    produced.insert(r.output.get());
  }
  return true;
}

Recording::Recording(Tape& tape) : previous_(active) { active = &tape; }
Recording::~Recording() { active = previous_; }

Tape* active_tape() { return active; }

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : node_(std::make_shared<Node>()) {}

Tensor::Tensor(Matrix values, bool requires_grad) : node_(std::make_shared<Node>()) {
  if (!values.all_finite()) throw NumericError("Tensor: non-finite value");
  node_->rows = values.rows();
  node_->cols = values.cols();
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::sparse(CsrMatrix matrix) {
  if (!std::all_of(matrix.values.begin(), matrix.values.end(), [](double v) { return std::isfinite(v); })) {
    throw NumericError("Tensor: non-finite sparse value");
  }
  auto node = std::make_shared<Node>();
  node->rows = matrix.rows;
  node->cols = matrix.cols;
  node->sparse = std::make_shared<const CsrMatrix>(std::move(matrix));
  return Tensor(std::move(node));
}

std::size_t Tensor::rows() const { return node_->rows; }
std::size_t Tensor::cols() const { return node_->cols; }
const Matrix& Tensor::value() const { return node_->dense(); }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ContractError("item: tensor is " + shape_string(rows(), cols()));
  return node_->dense()(0, 0);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->leaf; }
bool Tensor::is_sparse() const { return static_cast<bool>(node_->sparse); }
const CsrMatrix* Tensor::sparse_structure() const { return node_->sparse.get(); }
bool Tensor::has_grad() const { return node_->has_grad; }

const Matrix& Tensor::grad() const {
  if (!node_->has_grad) throw ContractError("grad: tensor has no gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->grad = Matrix(node_->rows, node_->cols);
  node_->has_grad = true;
}

void Tensor::clear_grad() {
  node_->grad = Matrix();
  node_->has_grad = false;
}

Matrix& Tensor::mutable_value() {
  if (node_->sparse) throw ContractError("mutable_value: sparse tensors are constant");
  return node_->value;
}

// ---------------------------------------------------------------------------
// Kernels

namespace {

// C (n x m) = A (n x k) * B (k x m)
Matrix gemm_nn(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.data() + i * m;
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

// C (n x m) = A (n x k) * B^T, B is m x k
Matrix gemm_nt(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c(i, j) = s;
    }
  }
  return c;
}

// C (n x m) = A^T * B, A is k x n, B is k x m
Matrix gemm_tn(const Matrix& a, const Matrix& b) {
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  Matrix c(n, m);
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a.data() + p * n;
    const double* bp = b.data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = ap[i];
      double* ci = c.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

std::string shapes_of(std::span<const Tensor> inputs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (i) os << " vs ";
    os << shape_string(inputs[i].rows(), inputs[i].cols());
  }
  return os.str();
}

[[noreturn]] void shape_error(Primitive op, std::span<const Tensor> inputs) {
  throw DimensionError(std::string(primitive_name(op)) + ": incompatible shapes " + shapes_of(inputs));
}

std::size_t broadcast_dim(std::size_t a, std::size_t b, bool& ok) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  ok = false;
  return 0;
}

// Sums g (R x C) down to shape rows x cols, the inverse of broadcasting.
Matrix reduce_to(const Matrix& g, std::size_t rows, std::size_t cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) out(rows == 1 ? 0 : i, cols == 1 ? 0 : j) += g(i, j);
  return out;
}

template <typename F>
Matrix broadcast_apply(const Matrix& a, const Matrix& b, std::size_t R, std::size_t C, F f) {
  Matrix out(R, C);
  if (a.rows() == R && a.cols() == C && b.rows() == R && b.cols() == C) {
    for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] = f(a.data()[k], b.data()[k]);
    return out;
  }
  const bool ar = a.rows() == 1, ac = a.cols() == 1, br = b.rows() == 1, bc = b.cols() == 1;
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) out(i, j) = f(a(ar ? 0 : i, ac ? 0 : j), b(br ? 0 : i, bc ? 0 : j));
  return out;
}

constexpr double kNormFloor = 1e-12;
constexpr double kLogFloor = 1e-30;

std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> n(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double v : m.row(i)) s += v * v;
    n[i] = std::sqrt(s);
  }
  return n;
}

struct Evaluation {
  Matrix value;
  BackwardFn backward;
};

void expect_arity(Primitive op, std::span<const Tensor> inputs, std::size_t n) {
  if (inputs.size() != n) {
    throw ContractError(std::string(primitive_name(op)) + ": expected " + std::to_string(n) + " inputs, got " +
                        std::to_string(inputs.size()));
  }
}

Evaluation evaluate(Primitive op, std::span<const Tensor> inputs) {
  switch (op) {
    case Primitive::matmul: {
      expect_arity(op, inputs, 2);
      const Tensor &a = inputs[0], &b = inputs[1];
      if (a.cols() != b.rows()) shape_error(op, inputs);
      if (b.requires_grad() && b.is_sparse()) throw ContractError("matmul: sparse operands are constant");
      Matrix out = a.is_sparse() ? a.sparse_structure()->multiply(b.value()) : gemm_nn(a.value(), b.value());
      return {std::move(out), [](const Matrix& g, std::span<const NodePtr> in, Node&) {
                Node& a = *in[0];
                Node& b = *in[1];
                if (a.requires_grad) accumulate(a, gemm_nt(g, b.dense()));
                if (b.requires_grad) {
                  accumulate(b, a.sparse ? a.sparse_transposed().multiply(g) : gemm_tn(a.dense(), g));
                }
              }};
    }
    case Primitive::transpose: {
      expect_arity(op, inputs, 1);
      return {inputs[0].value().transposed(), [](const Matrix& g, std::span<const NodePtr> in, Node&) {
                accumulate(*in[0], g.transposed());
              }};
    }
    case Primitive::add:
    case Primitive::subtract:
    case Primitive::elementwise_multiply: {
      expect_arity(op, inputs, 2);
      const Matrix& a = inputs[0].value();
      const Matrix& b = inputs[1].value();
      bool ok = true;
      const std::size_t R = broadcast_dim(a.rows(), b.rows(), ok);
      const std::size_t C = broadcast_dim(a.cols(), b.cols(), ok);
      if (!ok) shape_error(op, inputs);
      if (op == Primitive::add) {
        return {broadcast_apply(a, b, R, C, [](double x, double y) { return x + y; }),
                [](const Matrix& g, std::span<const NodePtr> in, Node&) {
                  if (in[0]->requires_grad) accumulate(*in[0], reduce_to(g, in[0]->rows, in[0]->cols));
                  if (in[1]->requires_grad) accumulate(*in[1], reduce_to(g, in[1]->rows, in[1]->cols));
                }};
      }
      if (op == Primitive::subtract) {
        return {broadcast_apply(a, b, R, C, [](double x, double y) { return x - y; }),
                [](const Matrix& g, std::span<const NodePtr> in, Node&) {
                  if (in[0]->requires_grad) accumulate(*in[0], reduce_to(g, in[0]->rows, in[0]->cols));
                  if (in[1]->requires_grad) {
                    Matrix r = reduce_to(g, in[1]->rows, in[1]->cols);
                    for (double& v : r.values()) v = -v;
                    accumulate(*in[1], std::move(r));
                  }
                }};
      }
      return {broadcast_apply(a, b, R, C, [](double x, double y) { return x * y; }),
              [](const Matrix& g, std::span<const NodePtr> in, Node&) {
                const Matrix& a = in[0]->dense();
                const Matrix& b = in[1]->dense();
                auto times = [](double x, double y) { return x * y; };
                if (in[0]->requires_grad) {
                  accumulate(*in[0], reduce_to(broadcast_apply(g, b, g.rows(), g.cols(), times), a.rows(), a.cols()));
                }
                if (in[1]->requires_grad) {
                  accumulate(*in[1], reduce_to(broadcast_apply(g, a, g.rows(), g.cols(), times), b.rows(), b.cols()));
                }
              }};
    }
    case Primitive::scalar_multiply: {
      expect_arity(op, inputs, 2);
      if (inputs[1].rows() != 1 || inputs[1].cols() != 1) shape_error(op, inputs);
      if (inputs[1].requires_grad()) throw ContractError("scalar_multiply: the scalar must be a constant");
      const double s = inputs[1].item();
      Matrix out = inputs[0].value();
      for (double& v : out.values()) v *= s;
      return {std::move(out), [s](const Matrix& g, std::span<const NodePtr> in, Node&) {
                Matrix r = g;
                for (double& v : r.values()) v *= s;
                accumulate(*in[0], std::move(r));
              }};
    }
    case Primitive::tanh: {
      expect_arity(op, inputs, 1);
      Matrix out = inputs[0].value();
      for (double& v : out.values()) v = std::tanh(v);
      return {std::move(out), [](const Matrix& g, std::span<const NodePtr> in, Node& out) {
                Matrix r = g;
                auto y = out.value.values();
                auto rv = r.values();
                for (std::size_t k = 0; k < rv.size(); ++k) rv[k] *= 1.0 - y[k] * y[k];
                accumulate(*in[0], std::move(r));
              }};
    }
    case Primitive::relu: {
      expect_arity(op, inputs, 1);
      Matrix out = inputs[0].value();
      for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
      return {std::move(out), [](const Matrix& g, std::span<const NodePtr> in, Node&) {
                Matrix r = g;
                auto x = in[0]->dense().values();
                auto rv = r.values();
                for (std::size_t k = 0; k < rv.size(); ++k)
                  if (!(x[k] > 0.0)) rv[k] = 0.0;
                accumulate(*in[0], std::move(r));
              }};
    }
    case Primitive::row_softmax: {
      expect_arity(op, inputs, 1);
      Matrix out = inputs[0].value();
      for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        if (r.empty()) continue;
        const double mx = *std::max_element(r.begin(), r.end());
        double s = 0.0;
        for (double& v : r) {
          v = std::exp(v - mx);
          s += v;
        }
        for (double& v : r) v /= s;
      }
      return {std::move(out), [](const Matrix& g, std::span<const NodePtr> in, Node& out) {
                const Matrix& y = out.value;
                Matrix r(g.rows(), g.cols());
                for (std::size_t i = 0; i < g.rows(); ++i) {
                  double dot = 0.0;
                  for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
                  for (std::size_t j = 0; j < g.cols(); ++j) r(i, j) = y(i, j) * (g(i, j) - dot);
                }
                accumulate(*in[0], std::move(r));
              }};
    }
    case Primitive::log: {
      expect_arity(op, inputs, 1);
      Matrix out = inputs[0].value();
      for (double& v : out.values()) v = std::log(std::max(v, kLogFloor));
      return {std::move(out), [](const Matrix& g, std::span<const NodePtr> in, Node&) {
                Matrix r = g;
                auto x = in[0]->dense().values();
                auto rv = r.values();
                for (std::size_t k = 0; k < rv.size(); ++k) rv[k] = x[k] > kLogFloor ? rv[k] / x[k] : 0.0;
                accumulate(*in[0], std::move(r));
              }};
    }
    case Primitive::exp: {
      expect_arity(op, inputs, 1);
      Matrix out = inputs[0].value();
      for (double& v : out.values()) v = std::exp(v);
      return {std::move(out), [](const Matrix& g, std::span<const NodePtr> in, Node& out) {
                Matrix r = g;
                auto y = out.value.values();
                auto rv = r.values();
                for (std::size_t k = 0; k < rv.size(); ++k) rv[k] *= y[k];
                accumulate(*in[0], std::move(r));
              }};
    }
    case Primitive::concat_columns: {
      if (inputs.empty()) throw ContractError("concat_columns: no inputs");
      const std::size_t rows = inputs[0].rows();
      std::size_t cols = 0;
      for (const auto& t : inputs) {
        if (t.rows() != rows) shape_error(op, inputs);
        cols += t.cols();
      }
      Matrix out(rows, cols);
      std::size_t offset = 0;
      for (const auto& t : inputs) {
        const Matrix& v = t.value();
        for (std::size_t i = 0; i < rows; ++i) std::copy(v.row(i).begin(), v.row(i).end(), out.row(i).begin() + offset);
        offset += t.cols();
      }
      return {std::move(out), [](const Matrix& g, std::span<const NodePtr> in, Node&) {
                std::size_t offset = 0;
                for (const auto& n : in) {
                  if (n->requires_grad) {
                    Matrix r(n->rows, n->cols);
                    for (std::size_t i = 0; i < n->rows; ++i) {
                      auto src = g.row(i).subspan(offset, n->cols);
                      std::copy(src.begin(), src.end(), r.row(i).begin());
                    }
                    accumulate(*n, std::move(r));
                  }
                  offset += n->cols;
                }
              }};
    }
    case Primitive::row_select_by_mask: {
      expect_arity(op, inputs, 2);
      const Matrix& a = inputs[0].value();
      const Matrix& mask = inputs[1].value();
      if (mask.cols() != 1 || mask.rows() != a.rows()) shape_error(op, inputs);
      if (inputs[1].requires_grad()) throw ContractError("row_select_by_mask: the mask must be a constant");
      std::vector<std::size_t> picked;
      for (std::size_t i = 0; i < mask.rows(); ++i) {
        if (mask(i, 0) != 0.0 && mask(i, 0) != 1.0) throw ContractError("row_select_by_mask: mask entries must be 0 or 1");
        if (mask(i, 0) == 1.0) picked.push_back(i);
      }
      Matrix out(picked.size(), a.cols());
      for (std::size_t r = 0; r < picked.size(); ++r) std::copy(a.row(picked[r]).begin(), a.row(picked[r]).end(), out.row(r).begin());
      return {std::move(out), [picked = std::move(picked)](const Matrix& g, std::span<const NodePtr> in, Node&) {
                Matrix r(in[0]->rows, in[0]->cols);
                for (std::size_t k = 0; k < picked.size(); ++k) std::copy(g.row(k).begin(), g.row(k).end(), r.row(picked[k]).begin());
                accumulate(*in[0], std::move(r));
              }};
    }
    case Primitive::mean_rows: {
      expect_arity(op, inputs, 1);
      const Matrix& a = inputs[0].value();
      if (a.rows() == 0) throw DimensionError("mean_rows: tensor has no rows");
      Matrix out(1, a.cols());
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += a(i, j);
      for (double& v : out.values()) v /= static_cast<double>(a.rows());
      return {std::move(out), [](const Matrix& g, std::span<const NodePtr> in, Node&) {
                const std::size_t n = in[0]->rows;
                Matrix r(n, in[0]->cols);
                for (std::size_t i = 0; i < n; ++i)
                  for (std::size_t j = 0; j < r.cols(); ++j) r(i, j) = g(0, j) / static_cast<double>(n);
                accumulate(*in[0], std::move(r));
              }};
    }
    case Primitive::squared_l2: {
      expect_arity(op, inputs, 1);
      double s = 0.0;
      for (double v : inputs[0].value().values()) s += v * v;
      return {Matrix(1, 1, s), [](const Matrix& g, std::span<const NodePtr> in, Node&) {
                Matrix r = in[0]->dense();
                const double k = 2.0 * g(0, 0);
                for (double& v : r.values()) v *= k;
                accumulate(*in[0], std::move(r));
              }};
    }
    case Primitive::cosine_similarity_rows: {
      expect_arity(op, inputs, 2);
      const Matrix& a = inputs[0].value();
      const Matrix& b = inputs[1].value();
      if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, inputs);
      const auto na = row_norms(a), nb = row_norms(b);
      Matrix out(a.rows(), 1);
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) dot += a(i, j) * b(i, j);
        out(i, 0) = dot / (std::max(na[i], kNormFloor) * std::max(nb[i], kNormFloor));
      }
      return {std::move(out), [na, nb](const Matrix& g, std::span<const NodePtr> in, Node& out) {
                const Matrix& a = in[0]->dense();
                const Matrix& b = in[1]->dense();
                const std::size_t n = a.rows(), d = a.cols();
                for (int side = 0; side < 2; ++side) {
                  Node& target = *in[side];
                  if (!target.requires_grad) continue;
                  const Matrix& self = side == 0 ? a : b;
                  const Matrix& other = side == 0 ? b : a;
                  const auto& ns = side == 0 ? na : nb;
                  const auto& no = side == 0 ? nb : na;
                  Matrix r(n, d);
                  for (std::size_t i = 0; i < n; ++i) {
                    const double fs = std::max(ns[i], kNormFloor), fo = std::max(no[i], kNormFloor);
                    const double s = out.value(i, 0);
                    const bool floored = ns[i] <= kNormFloor;
                    for (std::size_t j = 0; j < d; ++j) {
                      double v = other(i, j) / (fs * fo);
                      if (!floored) v -= s * self(i, j) / (fs * fs);
                      r(i, j) = g(i, 0) * v;
                    }
                  }
                  accumulate(target, std::move(r));
                }
              }};
    }
    case Primitive::row_l2_normalize: {
      expect_arity(op, inputs, 1);
      const Matrix& a = inputs[0].value();
      const auto norms = row_norms(a);
      Matrix out = a;
      for (std::size_t i = 0; i < a.rows(); ++i) {
        const double f = std::max(norms[i], kNormFloor);
        for (double& v : out.row(i)) v /= f;
      }
      return {std::move(out), [norms](const Matrix& g, std::span<const NodePtr> in, Node& out) {
                const Matrix& y = out.value;
                Matrix r(g.rows(), g.cols());
                for (std::size_t i = 0; i < g.rows(); ++i) {
                  const double f = std::max(norms[i], kNormFloor);
                  double dot = 0.0;
                  if (norms[i] > kNormFloor)
                    for (std::size_t j = 0; j < g.cols(); ++j) dot += y(i, j) * g(i, j);
                  for (std::size_t j = 0; j < g.cols(); ++j) r(i, j) = (g(i, j) - y(i, j) * dot) / f;
                }
                accumulate(*in[0], std::move(r));
              }};
    }
  }
  throw ContractError("unknown primitive");
}

}  // namespace

std::string_view primitive_name(Primitive op) {
  switch (op) {
    case Primitive::matmul: return "matmul";
    case Primitive::transpose: return "transpose";
    case Primitive::add: return "add";
    case Primitive::subtract: return "subtract";
    case Primitive::elementwise_multiply: return "elementwise_multiply";
    case Primitive::scalar_multiply: return "scalar_multiply";
    case Primitive::tanh: return "tanh";
    case Primitive::row_softmax: return "row_softmax";
    case Primitive::log: return "log";
    case Primitive::exp: return "exp";
    case Primitive::concat_columns: return "concat_columns";
    case Primitive::row_select_by_mask: return "row_select_by_mask";
    case Primitive::mean_rows: return "mean_rows";
    case Primitive::squared_l2: return "squared_l2";
    case Primitive::cosine_similarity_rows: return "cosine_similarity_rows";
    case Primitive::relu: return "relu";
    case Primitive::row_l2_normalize: return "row_l2_normalize";
  }
  return "unknown";
}

Tensor apply_primitive(Primitive op, std::span<const Tensor> inputs) {
  Evaluation ev = evaluate(op, inputs);
  if (!ev.value.all_finite()) {
    throw NumericError(std::string(primitive_name(op)) + ": non-finite output");
  }
  auto node = std::make_shared<Node>();
  node->rows = ev.value.rows();
  node->cols = ev.value.cols();
  node->value = std::move(ev.value);
  node->leaf = false;

  Tape* tape = active;
  const bool tracked =
      tape != nullptr && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (tracked) {
    if (tape->impl_->consumed) throw ContractError(std::string(primitive_name(op)) + ": record already consumed");
    node->requires_grad = true;
    Record rec{op, {}, node, std::move(ev.backward)};
    rec.inputs.reserve(inputs.size());
    for (const auto& t : inputs) rec.inputs.push_back(t.node_);
    tape->impl_->records.push_back(std::move(rec));
  }
  return Tensor(std::move(node));
}

std::size_t backward(Tape& record, const Tensor& loss) {
  auto& impl = *record.impl_;
  if (impl.consumed) throw ContractError("backward: record already consumed");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + shape_string(loss.rows(), loss.cols()));
  }
  std::size_t end = impl.records.size();
  while (end > 0 && impl.records[end - 1].output != loss.node_) --end;
  if (end == 0) throw ContractError("backward: loss was not produced by this record");

  impl.consumed = true;
  accumulate(*loss.node_, Matrix(1, 1, 1.0));
  std::size_t visited = 0;
  for (std::size_t k = end; k-- > 0;) {
    Record& r = impl.records[k];
    ++visited;
    Node& out = *r.output;
    if (!out.has_grad) continue;
    r.backward(out.grad, r.inputs, out);
    // Intermediate gradients are not needed once propagated.
    out.grad = Matrix();
    out.has_grad = false;
  }
  for (auto& r : impl.records) {
    for (auto& in : r.inputs) {
      if (in->leaf && in->requires_grad && !in->has_grad) {
        in->grad = Matrix(in->rows, in->cols);
        in->has_grad = true;
      }
    }
  }
  return visited;
}

// ---------------------------------------------------------------------------
// ops

namespace ops {
namespace {

Tensor apply(Primitive op, std::initializer_list<Tensor> inputs) {
  return apply_primitive(op, std::span<const Tensor>(inputs.begin(), inputs.size()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) { return apply(Primitive::matmul, {a, b}); }
Tensor transpose(const Tensor& a) { return apply(Primitive::transpose, {a}); }
Tensor add(const Tensor& a, const Tensor& b) { return apply(Primitive::add, {a, b}); }
Tensor subtract(const Tensor& a, const Tensor& b) { return apply(Primitive::subtract, {a, b}); }
Tensor multiply(const Tensor& a, const Tensor& b) { return apply(Primitive::elementwise_multiply, {a, b}); }
Tensor scale(const Tensor& a, double s) { return apply(Primitive::scalar_multiply, {a, Tensor::scalar(s)}); }
Tensor tanh(const Tensor& a) { return apply(Primitive::tanh, {a}); }
Tensor relu(const Tensor& a) { return apply(Primitive::relu, {a}); }
Tensor row_softmax(const Tensor& a) { return apply(Primitive::row_softmax, {a}); }
Tensor log(const Tensor& a) { return apply(Primitive::log, {a}); }
Tensor exp(const Tensor& a) { return apply(Primitive::exp, {a}); }
Tensor concat_columns(std::span<const Tensor> parts) { return apply_primitive(Primitive::concat_columns, parts); }
Tensor concat_columns(std::initializer_list<Tensor> parts) { return apply(Primitive::concat_columns, parts); }

Tensor row_select_by_mask(const Tensor& a, std::span<const std::uint8_t> mask) {
  Matrix m(mask.size(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) m(i, 0) = mask[i] ? 1.0 : 0.0;
  return apply(Primitive::row_select_by_mask, {a, Tensor::constant(std::move(m))});
}

Tensor mean_rows(const Tensor& a) { return apply(Primitive::mean_rows, {a}); }
Tensor squared_l2(const Tensor& a) { return apply(Primitive::squared_l2, {a}); }
Tensor cosine_similarity_rows(const Tensor& a, const Tensor& b) {
  return apply(Primitive::cosine_similarity_rows, {a, b});
}
Tensor row_l2_normalize(const Tensor& a) { return apply(Primitive::row_l2_normalize, {a}); }

Tensor row_sum(const Tensor& a) { return matmul(a, Tensor::constant(Matrix(a.cols(), 1, 1.0))); }

Tensor sum(const Tensor& a) { return matmul(Tensor::constant(Matrix(1, a.rows(), 1.0)), row_sum(a)); }

Tensor column(const Tensor& a, std::size_t j) {
  if (j >= a.cols()) throw DimensionError("column: index " + std::to_string(j) + " of " + shape_string(a.rows(), a.cols()));
  Matrix e(a.cols(), 1);
  e(j, 0) = 1.0;
  return matmul(a, Tensor::constant(std::move(e)));
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  return matmul(Tensor::sparse(CsrMatrix::selection(a.rows(), rows)), a);
}

Tensor scatter_rows(const Tensor& a, std::span<const std::size_t> positions, std::size_t n) {
  if (positions.size() != a.rows()) throw DimensionError("scatter_rows: position count does not match rows");
  return matmul(Tensor::sparse(CsrMatrix::selection(n, positions).transposed()), a);
}

}  // namespace ops
}  // namespace mcgcl
