#pragma once

// Small dense real matrices for fitting covariances and the tomography Gram
// system. Sizes here never exceed a few dozen rows.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace qdtb {

class RealMatrix {
 public:
  RealMatrix() = default;
  RealMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static RealMatrix identity(std::size_t n);

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

  friend RealMatrix operator*(const RealMatrix& a, const RealMatrix& b);
  [[nodiscard]] std::vector<double> apply(std::span<const double> x) const;
  [[nodiscard]] RealMatrix transpose() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Gauss-Jordan inversion with partial pivoting; nullopt when a pivot falls
/// below `pivot_tolerance` times the largest absolute entry.
std::optional<RealMatrix> invert(const RealMatrix& m, double pivot_tolerance = 1e-13);

}  // namespace qdtb
