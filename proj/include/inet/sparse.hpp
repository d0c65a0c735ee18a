#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace inet {

struct Triplet {
  std::size_t row = 0, col = 0;
  double value = 0.0;
};

/// Compressed-row sparse matrix with column indices sorted within each row.
/// Explicit zeros are kept if supplied.
class CsrMatrix {
 public:
  CsrMatrix() = default;
  /// Duplicate (row, col) entries are summed.
  static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries);
  static CsrMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  std::span<const std::size_t> col_index() const { return col_; }
  std::span<const double> values() const { return values_; }

  /// Entries of row r as (col, value) index range [row_ptr[r], row_ptr[r+1]).
  double at(std::size_t r, std::size_t c) const;

  /// y = this * x where x is cols() x f row-major.
  std::vector<double> multiply(std::span<const double> x, std::size_t f) const;
  CsrMatrix transposed() const;
  std::vector<Triplet> triplets() const;
  /// Row-major dense copy; test and oracle use only.
  std::vector<double> to_dense() const;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_;
  std::vector<double> values_;
};

}  // namespace inet
