#pragma once

// Dense 2-D tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared node holding the value, an
// optional gradient buffer and bookkeeping flags. Values never change after
// construction, except for parameters updated in place by an optimizer
// between tape recordings.
//
// Operations are recorded only while a Recording scope is active on the
// calling thread and at least one input requires a gradient. Outside such a
// scope every primitive evaluates eagerly without bookkeeping, which is what
// evaluation code wants.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mcgcl {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  bool all_finite() const noexcept;
  Matrix transposed() const;
  void fill(double v);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

std::string shape_string(std::size_t rows, std::size_t cols);

// Compressed sparse rows, used for constant operands such as normalized
// adjacency and row-selection matrices.
struct CsrMatrix {
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };

  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1 entries
  std::vector<std::uint32_t> col_idx;
  std::vector<double> values;

  // Duplicate coordinates are summed; columns sorted within each row.
  static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);
  // 0/1 matrix whose row r has a single one at column picks[r].
  static CsrMatrix selection(std::size_t cols, std::span<const std::size_t> picks);

  std::size_t nnz() const noexcept { return values.size(); }
  Matrix to_dense() const;
  CsrMatrix transposed() const;
  // out = this * rhs
  Matrix multiply(const Matrix& rhs) const;
};

enum class Primitive : std::uint8_t {
  matmul,
  transpose,
  add,
  subtract,
  elementwise_multiply,
  scalar_multiply,
  tanh,
  row_softmax,
  log,
  exp,
  concat_columns,
  row_select_by_mask,
  mean_rows,
  squared_l2,
  cosine_similarity_rows,
  // Needed by the relu activation switch and the all-pairs cosine matrix.
  relu,
  row_l2_normalize,
};

std::string_view primitive_name(Primitive op);

namespace detail {
struct Node;
}

class Tape;

class Tensor {
 public:
  // Empty 0x0 constant.
  Tensor();
  explicit Tensor(Matrix values, bool requires_grad = false);

  static Tensor constant(Matrix values) { return Tensor(std::move(values), false); }
  static Tensor parameter(Matrix values) { return Tensor(std::move(values), true); }
  static Tensor scalar(double v) { return Tensor(Matrix(1, 1, v), false); }
  // Sparse-structured constant; matmul with it as left operand uses the CSR path.
  static Tensor sparse(CsrMatrix matrix);

  std::size_t rows() const;
  std::size_t cols() const;

  // Dense value (materialized on first access for sparse tensors).
  const Matrix& value() const;
  double item() const;  // value of a 1x1 tensor

  bool requires_grad() const;
  bool is_leaf() const;
  bool is_sparse() const;
  const CsrMatrix* sparse_structure() const;

  bool has_grad() const;
  const Matrix& grad() const;  // throws ContractError when absent
  void zero_grad();            // grad := zeros (allocates)
  void clear_grad();           // drops the buffer

  // In-place parameter update; shape must match. Used by optimizers only.
  Matrix& mutable_value();

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend class Tape;
  friend Tensor apply_primitive(Primitive op, std::span<const Tensor> inputs);
  friend std::size_t backward(Tape& record, const Tensor& loss);
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

// The ComputationRecord: an ordered list of primitive applications.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept;
  Tape& operator=(Tape&&) noexcept;

  std::size_t size() const;
  bool consumed() const;
  Primitive primitive_at(std::size_t i) const;
  // Every input of record i is a leaf or the output of some record j < i.
  bool is_topologically_ordered() const;

 private:
  struct Impl;
  friend Tensor apply_primitive(Primitive op, std::span<const Tensor> inputs);
  friend std::size_t backward(Tape& record, const Tensor& loss);
  std::unique_ptr<Impl> impl_;
};

// Makes `tape` the active record on this thread for the scope's lifetime.
class Recording {
 public:
  explicit Recording(Tape& tape);
  ~Recording();
  Recording(const Recording&) = delete;
  Recording& operator=(const Recording&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Evaluates one primitive. scalar_multiply takes a 1x1 constant as its
// second input; row_select_by_mask takes an n x 1 constant 0/1 mask.
Tensor apply_primitive(Primitive op, std::span<const Tensor> inputs);

// Populates grad on every requires_grad leaf reached by `record`; leaves on
// the record that the loss does not depend on get zero gradients. Gradients
// accumulate into existing buffers. Returns the number of records visited.
std::size_t backward(Tape& record, const Tensor& loss);

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// add/subtract/multiply broadcast an operand of shape 1x1, 1xc or rx1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor row_softmax(const Tensor& a);
// Input clamped at 1e-30 before the logarithm.
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor concat_columns(std::span<const Tensor> parts);
Tensor concat_columns(std::initializer_list<Tensor> parts);
Tensor row_select_by_mask(const Tensor& a, std::span<const std::uint8_t> mask);
Tensor mean_rows(const Tensor& a);
Tensor squared_l2(const Tensor& a);
// Cosine similarity of corresponding rows; n x 1.
Tensor cosine_similarity_rows(const Tensor& a, const Tensor& b);
Tensor row_l2_normalize(const Tensor& a);

// Compositions of the primitives above.
Tensor sum(const Tensor& a);
Tensor row_sum(const Tensor& a);
Tensor column(const Tensor& a, std::size_t j);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
// Places row r of `a` at row positions[r] of an n x cols result, zeros elsewhere.
Tensor scatter_rows(const Tensor& a, std::span<const std::size_t> positions, std::size_t n);

}  // namespace ops
}  // namespace mcgcl
