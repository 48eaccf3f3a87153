#include "mot/active_sets.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mot {

ActiveSets ActiveSets::full(std::size_t nx, std::size_t ny) {
  if (nx == 0 || ny == 0) throw std::invalid_argument("ActiveSets: empty grid");
  ActiveSets a;
  a.ny_ = ny;
  a.row_ptr_.resize(nx + 1);
  a.col_idx_.resize(nx * ny);
  for (std::size_t i = 0; i <= nx; ++i) a.row_ptr_[i] = i * ny;
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) a.col_idx_[i * ny + j] = static_cast<Index>(j);
  a.build_transpose();
  return a;
}

ActiveSets ActiveSets::from_rows(std::size_t ny,
                                 const std::vector<std::vector<Index>>& rows) {
  if (rows.empty() || ny == 0) throw std::invalid_argument("ActiveSets: empty grid");
  ActiveSets a;
  a.ny_ = ny;
  a.row_ptr_.resize(rows.size() + 1, 0);
  std::vector<char> covered(ny, 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.empty())
      throw std::invalid_argument("ActiveSets: empty active set for x-index " +
                                  std::to_string(i));
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (r[k] >= ny)
        throw std::invalid_argument("ActiveSets: y-index out of range in row " +
                                    std::to_string(i));
      if (k > 0 && r[k] <= r[k - 1])
        throw std::invalid_argument("ActiveSets: row " + std::to_string(i) +
                                    " is not strictly increasing");
      covered[r[k]] = 1;
    }
    a.row_ptr_[i + 1] = a.row_ptr_[i] + r.size();
    a.col_idx_.insert(a.col_idx_.end(), r.begin(), r.end());
  }
  for (std::size_t j = 0; j < ny; ++j) {
    if (!covered[j])
      throw std::invalid_argument("ActiveSets: y-index " + std::to_string(j) +
                                  " is not covered by any row");
  }
  a.build_transpose();
  return a;
}

void ActiveSets::build_transpose() {
  const std::size_t n = nx();
  col_ptr_.assign(ny_ + 1, 0);
  for (Index j : col_idx_) ++col_ptr_[j + 1];
  for (std::size_t j = 0; j < ny_; ++j) col_ptr_[j + 1] += col_ptr_[j];
  row_idx_.resize(col_idx_.size());
  csc_to_csr_.resize(col_idx_.size());
  std::vector<std::size_t> fill(col_ptr_.begin(), col_ptr_.end() - 1);
  max_row_ = 0;
  for (std::size_t i = 0; i < n; ++i) {
    max_row_ = std::max(max_row_, row_ptr_[i + 1] - row_ptr_[i]);
    for (std::size_t pos = row_ptr_[i]; pos < row_ptr_[i + 1]; ++pos) {
      const std::size_t k = fill[col_idx_[pos]]++;
      row_idx_[k] = static_cast<Index>(i);
      csc_to_csr_[k] = pos;
    }
  }
  max_col_ = 0;
  for (std::size_t j = 0; j < ny_; ++j)
    max_col_ = std::max(max_col_, col_ptr_[j + 1] - col_ptr_[j]);
}

std::vector<std::vector<ActiveSets::Index>> ActiveSets::rows() const {
  std::vector<std::vector<Index>> out(nx());
  for (std::size_t i = 0; i < nx(); ++i) {
    auto r = row(i);
    out[i].assign(r.begin(), r.end());
  }
  return out;
}

ActiveSets ActiveSets::with_full_row(std::size_t i) const {
  auto r = rows();
  r[i].resize(ny_);
  for (std::size_t j = 0; j < ny_; ++j) r[i][j] = static_cast<Index>(j);
  return from_rows(ny_, r);
}

}  // namespace mot
