#include "sakd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "sakd/errors.hpp"

namespace sakd {
namespace {

Matrix prepare_rows(const FeatureMatrix& features, bool normalize) {
  if (features.rows() == 0 || features.cols() == 0) {
    throw std::invalid_argument("feature matrix must have at least one row and one column");
  }
  for (double x : features.data()) {
    if (!std::isfinite(x)) throw NumericError("feature matrix has a non-finite entry");
  }
  Matrix g = features;
  if (!normalize) return g;
  for (std::size_t i = 0; i < g.rows(); ++i) {
    auto r = g.row(i);
    double sq = 0.0;
    for (double x : r) sq += x * x;
    if (sq == 0.0) {
      r[0] = 1.0;
      continue;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : r) x *= inv;
  }
  return g;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

}  // namespace

KernelMatrix::KernelMatrix(Matrix entries, double jitter) : entries_(std::move(entries)), jitter_(jitter) {
  if (entries_.rows() != entries_.cols()) throw NumericError("kernel matrix must be square");
  const std::size_t n = entries_.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = entries_(i, j);
      if (!std::isfinite(a)) throw NumericError("kernel matrix has a non-finite entry");
      if (j < i && std::abs(a - entries_(j, i)) > 1e-12 * std::max(1.0, std::abs(a))) {
        throw NumericError("kernel matrix is not symmetric at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
}

double KernelMatrix::log_det_plus_identity() const {
  if (gram_rows_) {
    // Sylvester: det(G G^T + s I_N) = s^N det(I_d + G^T G / s), s = 1 + jitter.
    const Matrix& g = *gram_rows_;
    const std::size_t n = g.rows();
    const std::size_t d = g.cols();
    const double s = 1.0 + jitter_;
    Matrix small = Matrix::identity(d);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += g(i, a) * g(i, b);
        small(a, b) += acc / s;
        if (a != b) small(b, a) = small(a, b);
      }
    }
    return static_cast<double>(n) * std::log(s) + log_det(small);
  }
  Matrix shifted = entries_;
  for (std::size_t i = 0; i < shifted.rows(); ++i) shifted(i, i) += 1.0;
  return log_det(shifted);
}

KernelMatrix build_kernel(const FeatureMatrix& features, double jitter, bool normalize) {
  if (!(jitter > 0.0)) throw std::invalid_argument("kernel jitter must be positive");
  Matrix g = prepare_rows(features, normalize);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(g.rows());
  Matrix k(g.rows(), g.rows());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto ri = g.row(static_cast<std::size_t>(i));
    for (std::ptrdiff_t j = 0; j <= i; ++j) {
      const double v = dot(ri, g.row(static_cast<std::size_t>(j)));
      k(i, j) = v;
      k(j, i) = v;
    }
    k(i, i) += jitter;
  }
  KernelMatrix out(Matrix{}, jitter);
  out.entries_ = std::move(k);
  out.gram_rows_ = std::move(g);
  return out;
}

KernelMatrix build_kernel_serial(const FeatureMatrix& features, double jitter, bool normalize) {
  if (!(jitter > 0.0)) throw std::invalid_argument("kernel jitter must be positive");
  Matrix g = prepare_rows(features, normalize);
  const std::size_t n = g.rows();
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = dot(g.row(i), g.row(j));
      k(i, j) = v;
      k(j, i) = v;
    }
    k(i, i) += jitter;
  }
  KernelMatrix out(Matrix{}, jitter);
  out.entries_ = std::move(k);
  out.gram_rows_ = std::move(g);
  return out;
}

Matrix cholesky(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("cholesky: matrix must be square");
  const std::size_t n = m.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = m(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) throw NotPositiveDefinite(j);
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

double log_det(const Matrix& m) {
  const Matrix l = cholesky(m);
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

Matrix submatrix(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = 0; b < idx.size(); ++b) out(a, b) = m(idx[a], idx[b]);
  }
  return out;
}

PivotRow pivot_row(const IncrementalCholesky& factor, const KernelMatrix& kernel, std::size_t i) {
  const std::size_t k = factor.indices.size();
  PivotRow out{std::vector<double>(k), kernel(i, i)};
  for (std::size_t a = 0; a < k; ++a) {
    double s = kernel(factor.indices[a], i);
    for (std::size_t b = 0; b < a; ++b) s -= factor.lower(a, b) * out.row[b];
    out.row[a] = s / factor.lower(a, a);
    out.pivot_sq -= out.row[a] * out.row[a];
  }
  return out;
}

CholeskyExtension extend_cholesky(const IncrementalCholesky& factor, const KernelMatrix& kernel,
                                  std::size_t new_index) {
  if (new_index >= kernel.size()) throw std::out_of_range("extend_cholesky: index out of range");
  if (std::find(factor.indices.begin(), factor.indices.end(), new_index) != factor.indices.end()) {
    throw std::invalid_argument("extend_cholesky: index already in the factor");
  }
  const PivotRow p = pivot_row(factor, kernel, new_index);
  if (!(p.pivot_sq > 0.0) || !std::isfinite(p.pivot_sq)) {
    return {factor, -std::numeric_limits<double>::infinity()};
  }
  const std::size_t k = factor.indices.size();
  IncrementalCholesky next;
  next.indices = factor.indices;
  next.indices.push_back(new_index);
  next.lower = Matrix(k + 1, k + 1);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b <= a; ++b) next.lower(a, b) = factor.lower(a, b);
  }
  for (std::size_t b = 0; b < k; ++b) next.lower(k, b) = p.row[b];
  next.lower(k, k) = std::sqrt(p.pivot_sq);
  return {std::move(next), std::log(p.pivot_sq)};
}

}  // namespace sakd
