#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace linkbench {

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Compressed sparse row matrix in canonical form: column indices strictly
/// increasing within each row. Values are constants from the autodiff point of
/// view.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  /// Takes ownership of CSR arrays; throws ShapeError if they are not canonical.
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
               std::vector<std::size_t> col_indices, std::vector<double> values);

  /// Duplicate coordinates are summed.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);

  /// Keeps entries that are exactly nonzero. `dense` is row-major.
  static SparseMatrix from_dense(std::size_t rows, std::size_t cols, std::span<const double> dense);

  static SparseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  const std::vector<std::size_t>& row_offsets() const noexcept { return row_offsets_; }
  const std::vector<std::size_t>& col_indices() const noexcept { return col_indices_; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Value at (r, c), zero when absent. Binary search within the row.
  double at(std::size_t r, std::size_t c) const;

  std::vector<double> to_dense() const;
  SparseMatrix transposed() const;

  /// Same sparsity pattern, values replaced. Size must equal nnz().
  SparseMatrix with_values(std::vector<double> values) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

}  // namespace linkbench
