#include "inet/sparse.hpp"

#include <algorithm>
#include <string>

#include "inet/kernels.hpp"
#include "inet/tensor.hpp"

namespace inet {

CsrMatrix CsrMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
  for (const auto& t : entries)
    if (t.row >= rows || t.col >= cols)
      throw DimensionError("sparse entry (" + std::to_string(t.row) + ", " + std::to_string(t.col) +
                           ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  CsrMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_ptr_.assign(rows + 1, 0);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i > 0 && entries[i].row == entries[i - 1].row && entries[i].col == entries[i - 1].col) {
      m.values_.back() += entries[i].value;
      continue;
    }
    m.col_.push_back(entries[i].col);
    m.values_.push_back(entries[i].value);
    ++m.row_ptr_[entries[i].row + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
  return m;
}

CsrMatrix CsrMatrix::identity(std::size_t n) {
  std::vector<Triplet> t;
  t.reserve(n);
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return from_triplets(n, n, std::move(t));
}

double CsrMatrix::at(std::size_t r, std::size_t c) const {
  auto first = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
  auto last = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
  auto it = std::lower_bound(first, last, c);
  return (it != last && *it == c) ? values_[static_cast<std::size_t>(it - col_.begin())] : 0.0;
}

std::vector<double> CsrMatrix::multiply(std::span<const double> x, std::size_t f) const {
  if (x.size() != cols_ * f)
    throw DimensionError("sparse product: matrix has " + std::to_string(cols_) + " columns, operand has " +
                         std::to_string(x.size() / (f ? f : 1)) + " rows");
  std::vector<double> y(rows_ * f);
  kernels::csr_spmm(row_ptr_, col_, values_, x, y, rows_, f);
  return y;
}

CsrMatrix CsrMatrix::transposed() const {
  std::vector<Triplet> t;
  t.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) t.push_back({col_[e], r, values_[e]});
  return from_triplets(cols_, rows_, std::move(t));
}

std::vector<Triplet> CsrMatrix::triplets() const {
  std::vector<Triplet> t;
  t.reserve(nnz());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) t.push_back({r, col_[e], values_[e]});
  return t;
}

std::vector<double> CsrMatrix::to_dense() const {
  std::vector<double> d(rows_ * cols_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) d[r * cols_ + col_[e]] = values_[e];
  return d;
}

}  // namespace inet
