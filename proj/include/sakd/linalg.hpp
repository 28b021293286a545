#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace sakd {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Row i is the flattened fused feature of sample i.
using FeatureMatrix = Matrix;

/// Symmetric PSD similarity matrix over candidate samples, with the diagonal
/// jitter it was built with. When built from features, keeps the (possibly
/// normalized) feature rows so that log det(K + I) can use the low-rank route.
class KernelMatrix {
 public:
  /// Wraps an explicit symmetric matrix. Throws NumericError if it is not
  /// square, not finite, or not symmetric to 1e-12 relative.
  KernelMatrix(Matrix entries, double jitter);

  std::size_t size() const noexcept { return entries_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
  const Matrix& entries() const noexcept { return entries_; }
  double jitter() const noexcept { return jitter_; }

  /// ln det(K + I) over the full candidate set.
  double log_det_plus_identity() const;

 private:
  friend KernelMatrix build_kernel(const FeatureMatrix&, double, bool);
  friend KernelMatrix build_kernel_serial(const FeatureMatrix&, double, bool);

  Matrix entries_;
  double jitter_ = 0.0;
  std::optional<Matrix> gram_rows_;  // K = G G^T + jitter I when present
};

/// K = G G^T + jitter I where G is the feature matrix with each row
/// L2-normalized (zero rows replaced by e_0) unless `normalize` is false.
/// OpenMP-parallel over rows.
KernelMatrix build_kernel(const FeatureMatrix& features, double jitter, bool normalize = true);

/// Single-threaded reference for build_kernel; same result bit for bit.
KernelMatrix build_kernel_serial(const FeatureMatrix& features, double jitter, bool normalize = true);

/// Lower-triangular L with L L^T = m. Reads the lower triangle only.
/// Throws NotPositiveDefinite carrying the failing pivot index.
Matrix cholesky(const Matrix& m);

/// 2 * sum(log L_ii); propagates Cholesky failure.
double log_det(const Matrix& m);

/// Principal submatrix m[idx, idx].
Matrix submatrix(const Matrix& m, std::span<const std::size_t> idx);

/// Cholesky factor of the kernel restricted to `indices`, in insertion order.
struct IncrementalCholesky {
  std::vector<std::size_t> indices;
  Matrix lower;  // indices.size() square
};

struct CholeskyExtension {
  IncrementalCholesky factor;
  double gain;  // log det gain; -inf when the new pivot is not positive
};

/// New row of the factor for candidate `i` (forward substitution against
/// the current factor) and the squared pivot K_ii - |c|^2.
struct PivotRow {
  std::vector<double> row;
  double pivot_sq;
};
PivotRow pivot_row(const IncrementalCholesky& factor, const KernelMatrix& kernel, std::size_t i);

/// Factor of K[A+{i}] from the factor of K[A] in O(|A|^2), plus
/// ln det K[A+{i}] - ln det K[A]. On a non-positive pivot returns the input
/// factor unchanged with gain = -infinity.
CholeskyExtension extend_cholesky(const IncrementalCholesky& factor, const KernelMatrix& kernel,
                                  std::size_t new_index);

}  // namespace sakd
