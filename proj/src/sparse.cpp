#include "linkbench/sparse.hpp"

#include <algorithm>
#include <string>

#include "linkbench/error.hpp"

namespace linkbench {

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
                           std::vector<std::size_t> col_indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (row_offsets_.size() != rows_ + 1 || row_offsets_.front() != 0 ||
      row_offsets_.back() != col_indices_.size() || col_indices_.size() != values_.size()) {
    throw ShapeError("csr: inconsistent array lengths for " + std::to_string(rows_) + "x" +
                     std::to_string(cols_) + " matrix");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    if (row_offsets_[r] > row_offsets_[r + 1]) throw ShapeError("csr: row_offsets decreasing at row " + std::to_string(r));
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      if (col_indices_[k] >= cols_) throw ShapeError("csr: column index out of range in row " + std::to_string(r));
      if (k > row_offsets_[r] && col_indices_[k] <= col_indices_[k - 1]) {
        throw ShapeError("csr: column indices not strictly increasing in row " + std::to_string(r));
      }
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row >= rows || t.col >= cols) throw IndexError("csr: triplet outside " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  std::sort(triplets.begin(), triplets.end(),
            [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  std::vector<std::size_t> offsets(rows + 1, 0);
  std::vector<std::size_t> cols_out;
  std::vector<double> vals;
  cols_out.reserve(triplets.size());
  vals.reserve(triplets.size());
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    if (i > 0 && triplets[i - 1].row == t.row && triplets[i - 1].col == t.col) {
      vals.back() += t.value;
      continue;
    }
    cols_out.push_back(t.col);
    vals.push_back(t.value);
    ++offsets[t.row + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) offsets[r + 1] += offsets[r];
  return SparseMatrix(rows, cols, std::move(offsets), std::move(cols_out), std::move(vals));
}

SparseMatrix SparseMatrix::from_dense(std::size_t rows, std::size_t cols, std::span<const double> dense) {
  if (dense.size() != rows * cols) throw ShapeError("csr: dense buffer does not match shape");
  std::vector<std::size_t> offsets(rows + 1, 0);
  std::vector<std::size_t> idx;
  std::vector<double> vals;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = dense[r * cols + c];
      if (v != 0.0) {
        idx.push_back(c);
        vals.push_back(v);
      }
    }
    offsets[r + 1] = idx.size();
  }
  return SparseMatrix(rows, cols, std::move(offsets), std::move(idx), std::move(vals));
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<std::size_t> offsets(n + 1);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i <= n; ++i) offsets[i] = i;
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return SparseMatrix(n, n, std::move(offsets), std::move(idx), std::vector<double>(n, 1.0));
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  if (r >= rows_ || c >= cols_) throw IndexError("csr: at() out of range");
  const auto first = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r]);
  const auto last = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r + 1]);
  const auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c) return 0.0;
  return values_[static_cast<std::size_t>(it - col_indices_.begin())];
}

std::vector<double> SparseMatrix::to_dense() const {
  std::vector<double> out(rows_ * cols_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) out[r * cols_ + col_indices_[k]] = values_[k];
  }
  return out;
}

SparseMatrix SparseMatrix::transposed() const {
  std::vector<std::size_t> offsets(cols_ + 1, 0);
  for (auto c : col_indices_) ++offsets[c + 1];
  for (std::size_t c = 0; c < cols_; ++c) offsets[c + 1] += offsets[c];
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  std::vector<std::size_t> idx(nnz());
  std::vector<double> vals(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      const auto dst = cursor[col_indices_[k]]++;
      idx[dst] = r;
      vals[dst] = values_[k];
    }
  }
  return SparseMatrix(cols_, rows_, std::move(offsets), std::move(idx), std::move(vals));
}

SparseMatrix SparseMatrix::with_values(std::vector<double> values) const {
  if (values.size() != nnz()) throw ShapeError("csr: with_values size mismatch");
  SparseMatrix out = *this;
  out.values_ = std::move(values);
  return out;
}

}  // namespace linkbench
