#include "sakd/dpp_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sakd {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_inputs(const KernelMatrix& kernel, std::span<const double> zetas, double gamma, std::size_t k) {
  if (zetas.size() != kernel.size()) {
    throw std::invalid_argument("greedy_select: " + std::to_string(zetas.size()) + " difficulties for a kernel of size " +
                                std::to_string(kernel.size()));
  }
  if (k > kernel.size()) {
    throw std::invalid_argument("greedy_select: k = " + std::to_string(k) + " exceeds N = " +
                                std::to_string(kernel.size()));
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("greedy_select: gamma outside [0, 1]");
  for (double z : zetas) {
    if (!(z > 0.0) || !std::isfinite(z)) throw std::invalid_argument("greedy_select: difficulties must be positive");
  }
}

double marginal_gain(double zeta, double pivot_sq, double gamma) {
  const double quality = gamma / zeta;
  if (gamma == 1.0) return quality;
  if (!(pivot_sq > 0.0)) return kNegInf;
  return quality + (1.0 - gamma) * std::log(pivot_sq);
}

// Lowest index wins ties because only a strictly larger gain replaces the best.
std::ptrdiff_t argmax_unselected(std::span<const double> gains, const std::vector<char>& taken) {
  std::ptrdiff_t best = -1;
  double best_gain = kNegInf;
  for (std::size_t i = 0; i < gains.size(); ++i) {
    if (taken[i]) continue;
    if (best < 0 || gains[i] > best_gain) {
      best = static_cast<std::ptrdiff_t>(i);
      best_gain = gains[i];
    }
  }
  return best;
}

// Fills the remaining slots by descending 1/zeta (ascending zeta), lowest index first.
void fill_by_quality(SelectionResult& out, std::span<const double> zetas, std::vector<char>& taken, std::size_t k) {
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < zetas.size(); ++i) {
    if (!taken[i]) rest.push_back(i);
  }
  std::stable_sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) { return zetas[a] < zetas[b]; });
  for (std::size_t i : rest) {
    if (out.indices.size() == k) break;
    out.indices.push_back(i);
    out.objective_trace.push_back(kNegInf);
    taken[i] = 1;
  }
  out.degenerate_fill = true;
}

void finish_objective(SelectionResult& out, const KernelMatrix& kernel, std::span<const double> zetas, double gamma,
                      double log_det_selected) {
  double quality = 0.0;
  for (std::size_t i : out.indices) quality += 1.0 / zetas[i];
  if (gamma == 1.0) {
    out.objective_value = quality;
    return;
  }
  out.log_det_normalizer = kernel.log_det_plus_identity();
  out.objective_value = gamma * quality + (1.0 - gamma) * (log_det_selected - out.log_det_normalizer);
}

}  // namespace

std::size_t selection_size(double ratio, std::size_t n) {
  const double raw = ratio * static_cast<double>(n);
  const auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(raw - 1e-9)));
  return std::min(k, n);
}

SelectionResult greedy_select(const KernelMatrix& kernel, std::span<const double> zetas, double gamma, std::size_t k) {
  check_inputs(kernel, zetas, gamma, k);
  const std::size_t n = kernel.size();
  const auto sn = static_cast<std::ptrdiff_t>(n);

  SelectionResult out;
  out.indices.reserve(k);
  std::vector<char> taken(n, 0);
  std::vector<double> pivot_sq(n);
  std::vector<double> gains(n);
  Matrix rows(n, std::max<std::size_t>(k, 1));  // row i: candidate i's factor row so far
  for (std::size_t i = 0; i < n; ++i) pivot_sq[i] = kernel(i, i);
  double log_det_selected = 0.0;

  for (std::size_t step = 0; step < k; ++step) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < sn; ++i) {
      const auto u = static_cast<std::size_t>(i);
      gains[u] = taken[u] ? kNegInf : marginal_gain(zetas[u], pivot_sq[u], gamma);
    }
    const std::ptrdiff_t best = argmax_unselected(gains, taken);
    const auto j = static_cast<std::size_t>(best);
    if (gains[j] == kNegInf) {
      fill_by_quality(out, zetas, taken, k);
      log_det_selected = kNegInf;
      break;
    }
    out.indices.push_back(j);
    out.objective_trace.push_back(gains[j]);
    taken[j] = 1;
    log_det_selected += std::log(pivot_sq[j]);

    if (step + 1 == k || gamma == 1.0) continue;
    const double pivot = std::sqrt(pivot_sq[j]);
    const auto rj = rows.row(j);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < sn; ++i) {
      const auto u = static_cast<std::size_t>(i);
      if (taken[u]) continue;
      auto ri = rows.row(u);
      double s = kernel(j, u);
      for (std::size_t b = 0; b < step; ++b) s -= rj[b] * ri[b];
      const double e = s / pivot;
      ri[step] = e;
      pivot_sq[u] -= e * e;
    }
  }
  finish_objective(out, kernel, zetas, gamma, log_det_selected);
  return out;
}

SelectionResult greedy_select_reference(const KernelMatrix& kernel, std::span<const double> zetas, double gamma,
                                        std::size_t k) {
  check_inputs(kernel, zetas, gamma, k);
  const std::size_t n = kernel.size();
  SelectionResult out;
  std::vector<char> taken(n, 0);
  std::vector<double> gains(n);
  IncrementalCholesky factor;
  double log_det_selected = 0.0;

  for (std::size_t step = 0; step < k; ++step) {
    for (std::size_t i = 0; i < n; ++i) {
      gains[i] = taken[i] ? kNegInf : marginal_gain(zetas[i], pivot_row(factor, kernel, i).pivot_sq, gamma);
    }
    const auto j = static_cast<std::size_t>(argmax_unselected(gains, taken));
    if (gains[j] == kNegInf) {
      fill_by_quality(out, zetas, taken, k);
      log_det_selected = kNegInf;
      break;
    }
    if (gamma < 1.0) {
      CholeskyExtension ext = extend_cholesky(factor, kernel, j);
      log_det_selected += ext.gain;
      factor = std::move(ext.factor);
    }
    out.indices.push_back(j);
    out.objective_trace.push_back(gains[j]);
    taken[j] = 1;
  }
  finish_objective(out, kernel, zetas, gamma, log_det_selected);
  return out;
}

double exhaustive_objective(const KernelMatrix& kernel, std::span<const double> zetas, double gamma,
                            std::span<const std::size_t> subset) {
  if (subset.empty()) throw std::invalid_argument("exhaustive_objective: empty subset");
  if (zetas.size() != kernel.size()) throw std::invalid_argument("exhaustive_objective: size mismatch");
  double quality = 0.0;
  for (std::size_t i : subset) {
    if (i >= kernel.size()) throw std::out_of_range("exhaustive_objective: index out of range");
    quality += 1.0 / zetas[i];
  }
  if (gamma == 1.0) return quality;
  Matrix shifted = kernel.entries();
  for (std::size_t i = 0; i < shifted.rows(); ++i) shifted(i, i) += 1.0;
  const double diversity = log_det(submatrix(kernel.entries(), subset)) - log_det(shifted);
  return gamma * quality + (1.0 - gamma) * diversity;
}

}  // namespace sakd
