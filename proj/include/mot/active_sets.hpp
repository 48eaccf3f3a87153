#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mot {

// Per-x sorted lists of surviving y-indices, stored row-compressed with a
// column-compressed transpose for the y-passes. Every row is nonempty and
// every column is covered; construction throws std::invalid_argument
// otherwise.
class ActiveSets {
 public:
  using Index = std::uint32_t;

  ActiveSets() = default;

  static ActiveSets full(std::size_t nx, std::size_t ny);
  static ActiveSets from_rows(std::size_t ny,
                              const std::vector<std::vector<Index>>& rows);

  std::size_t nx() const { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
  std::size_t ny() const { return ny_; }
  std::size_t nnz() const { return col_idx_.size(); }
  bool is_full() const { return nnz() == nx() * ny_; }

  // Entries of row i occupy CSR positions [row_begin(i), row_end(i)).
  std::size_t row_begin(std::size_t i) const { return row_ptr_[i]; }
  std::size_t row_end(std::size_t i) const { return row_ptr_[i + 1]; }
  std::span<const Index> row(std::size_t i) const {
    return {col_idx_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }
  Index y_at(std::size_t pos) const { return col_idx_[pos]; }

  // Entries of column j occupy CSC positions [col_begin(j), col_end(j)),
  // listed in increasing x order.
  std::size_t col_begin(std::size_t j) const { return col_ptr_[j]; }
  std::size_t col_end(std::size_t j) const { return col_ptr_[j + 1]; }
  Index x_at(std::size_t csc_pos) const { return row_idx_[csc_pos]; }
  std::size_t csr_position(std::size_t csc_pos) const { return csc_to_csr_[csc_pos]; }

  std::size_t max_row_size() const { return max_row_; }
  std::size_t max_col_size() const { return max_col_; }
  double mean_row_size() const {
    return nx() == 0 ? 0.0 : static_cast<double>(nnz()) / static_cast<double>(nx());
  }

  std::vector<std::vector<Index>> rows() const;

  // Replace row i by every y-index.
  ActiveSets with_full_row(std::size_t i) const;

  bool operator==(const ActiveSets& o) const {
    return ny_ == o.ny_ && row_ptr_ == o.row_ptr_ && col_idx_ == o.col_idx_;
  }

 private:
  void build_transpose();

  std::size_t ny_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<Index> col_idx_;
  std::vector<std::size_t> col_ptr_;
  std::vector<Index> row_idx_;
  std::vector<std::size_t> csc_to_csr_;
  std::size_t max_row_ = 0;
  std::size_t max_col_ = 0;
};

}  // namespace mot
