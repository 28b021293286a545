#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sakd/linalg.hpp"

namespace sakd {

struct SelectionResult {
  std::vector<std::size_t> indices;    // in acceptance order
  std::vector<double> objective_trace;  // accepted marginal gains
  double objective_value = 0.0;         // full objective incl. -(1-gamma) ln det(K + I)
  double log_det_normalizer = 0.0;      // ln det(K + I); left 0 when gamma == 1
  bool degenerate_fill = false;         // remaining slots filled by quality order
};

/// Greedy MAP for
///   gamma * sum_{i in A} 1/zeta_i + (1 - gamma) * ln(det K_A / det(K + I)).
/// Each step adds the unselected index with the largest
///   gamma / zeta_i + (1 - gamma) * (ln det K_{A+i} - ln det K_A),
/// lowest index on ties. Maintains every candidate's Cholesky row
/// incrementally, O(N k) per step; the candidate scan is OpenMP-parallel
/// and bit-identical to a serial scan.
SelectionResult greedy_select(const KernelMatrix& kernel, std::span<const double> zetas, double gamma, std::size_t k);

/// Same greedy, evaluating each candidate with extend_cholesky against the
/// current factor. Single-threaded; O(N k^3). Kept as the test reference.
SelectionResult greedy_select_reference(const KernelMatrix& kernel, std::span<const double> zetas, double gamma,
                                        std::size_t k);

/// The objective evaluated directly on `subset`, including the ln det(K + I)
/// normalizer computed by dense Cholesky.
double exhaustive_objective(const KernelMatrix& kernel, std::span<const double> zetas, double gamma,
                            std::span<const std::size_t> subset);

/// ceil(ratio * n) with a tolerance for representation error, at least 1.
std::size_t selection_size(double ratio, std::size_t n);

}  // namespace sakd
