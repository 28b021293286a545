#pragma once

// Independent reference computations for the unit and acceptance tests.
// Nothing here calls into the library's numeric code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense zeros(std::size_t r, std::size_t c) { return Dense(r, std::vector<double>(c, 0.0)); }

inline Dense matmul(const Dense& a, const Dense& b) {
  Dense out = zeros(a.size(), b.empty() ? 0 : b[0].size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < out[i].size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
      out[i][j] = s;
    }
  return out;
}

inline Dense transpose(const Dense& a) {
  Dense t = zeros(a.empty() ? 0 : a[0].size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) t[j][i] = a[i][j];
  return t;
}

// Gaussian elimination with partial pivoting; returns ln|det| and the sign.
struct LogDet {
  double log_abs;
  int sign;
};

inline LogDet lu_log_det(Dense a) {
  const std::size_t n = a.size();
  double acc = 0.0;
  int sign = 1;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[p][c])) p = r;
    if (a[p][c] == 0.0) return {-std::numeric_limits<double>::infinity(), 0};
    if (p != c) {
      std::swap(a[p], a[c]);
      sign = -sign;
    }
    if (a[c][c] < 0) sign = -sign;
    acc += std::log(std::fabs(a[c][c]));
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  return {acc, sign};
}

// Determinant by cofactor expansion; only for n <= 8.
inline double cofactor_det(const Dense& a) {
  const std::size_t n = a.size();
  if (n == 0) return 1.0;
  if (n == 1) return a[0][0];
  double d = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    Dense minor;
    for (std::size_t i = 1; i < n; ++i) {
      std::vector<double> row;
      for (std::size_t k = 0; k < n; ++k)
        if (k != j) row.push_back(a[i][k]);
      minor.push_back(row);
    }
    d += ((j % 2) ? -1.0 : 1.0) * a[0][j] * cofactor_det(minor);
  }
  return d;
}

inline Dense principal(const Dense& a, const std::vector<std::size_t>& idx) {
  Dense s = zeros(idx.size(), idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j) s[i][j] = a[idx[i]][idx[j]];
  return s;
}

// ln det of a principal minor, -inf when singular or indefinite.
inline double minor_log_det(const Dense& k, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return 0.0;
  const LogDet ld = lu_log_det(principal(k, idx));
  if (ld.sign <= 0) return -std::numeric_limits<double>::infinity();
  return ld.log_abs;
}

inline double log_det_plus_identity(const Dense& k) {
  Dense m = k;
  for (std::size_t i = 0; i < m.size(); ++i) m[i][i] += 1.0;
  return lu_log_det(m).log_abs;
}

inline double subset_objective(const Dense& k, const std::vector<double>& zetas, double gamma,
                               const std::vector<std::size_t>& subset) {
  double q = 0.0;
  for (std::size_t i : subset) q += 1.0 / zetas[i];
  if (gamma == 1.0) return q;
  return gamma * q + (1.0 - gamma) * (minor_log_det(k, subset) - log_det_plus_identity(k));
}

// Greedy by brute force: at every step recompute ln det of each candidate
// subset from scratch and take the best gain, lowest index on ties.
struct GreedyTrace {
  std::vector<std::size_t> picks;
  std::vector<double> gains;
};

inline GreedyTrace greedy_from_scratch(const Dense& k, const std::vector<double>& zetas, double gamma,
                                       std::size_t steps) {
  GreedyTrace tr;
  std::vector<bool> taken(k.size(), false);
  double current = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t arg = k.size();
    double best_ld = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
      if (taken[i]) continue;
      double g = gamma / zetas[i];
      double ld = current;
      if (gamma < 1.0) {
        auto cand = tr.picks;
        cand.push_back(i);
        ld = minor_log_det(k, cand);
        g += (1.0 - gamma) * (ld - current);
      }
      if (arg == k.size() || g > best) {
        best = g;
        arg = i;
        best_ld = ld;
      }
    }
    taken[arg] = true;
    tr.picks.push_back(arg);
    tr.gains.push_back(best);
    current = best_ld;
  }
  return tr;
}

inline void next_combination_all(std::size_t n, std::size_t k, std::vector<std::vector<std::size_t>>& out,
                                 std::vector<std::size_t>& cur, std::size_t start) {
  if (cur.size() == k) {
    out.push_back(cur);
    return;
  }
  for (std::size_t i = start; i < n; ++i) {
    cur.push_back(i);
    next_combination_all(n, k, out, cur, i + 1);
    cur.pop_back();
  }
}

inline std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  next_combination_all(n, k, out, cur, 0);
  return out;
}

// Random SPD: A A^T / n + shift I.
inline Dense random_spd(std::size_t n, std::mt19937_64& g, double shift = 0.1) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Dense a = zeros(n, n);
  for (auto& r : a)
    for (auto& x : r) x = nd(g);
  Dense m = matmul(a, transpose(a));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m[i][j] /= static_cast<double>(n);
    m[i][i] += shift;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) m[i][j] = m[j][i];
  return m;
}

// Gram matrix of L2-normalized rows plus jitter.
inline Dense normalized_gram(const Dense& f, double jitter) {
  Dense g = f;
  for (auto& r : g) {
    double s = 0.0;
    for (double x : r) s += x * x;
    s = std::sqrt(s);
    for (double& x : r) x /= s;
  }
  Dense k = matmul(g, transpose(g));
  for (std::size_t i = 0; i < k.size(); ++i) k[i][i] += jitter;
  return k;
}

inline double relative_gap(double a, double b) { return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-300}); }

}  // namespace oracle
