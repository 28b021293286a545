#include "sakd/kd_losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <stdexcept>

namespace sakd {
namespace {

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

// log sum exp(x_i / tau) and the shifted values x_i / tau - max.
double log_partition(std::span<const double> q, double tau, std::vector<double>& scaled) {
  scaled.resize(q.size());
  double m = -INFINITY;
  for (std::size_t i = 0; i < q.size(); ++i) {
    scaled[i] = q[i] / tau;
    m = std::max(m, scaled[i]);
  }
  double s = 0.0;
  for (double& x : scaled) {
    x -= m;
    s += std::exp(x);
  }
  return std::log(s);
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits, double tau) {
  std::vector<double> p;
  const double lz = log_partition(logits, tau, p);
  for (double& x : p) x = std::exp(x - lz);
  return p;
}

double kd_logit_per_sample(std::span<const double> q_teacher, std::span<const double> q_student, double tau) {
  require_same(q_teacher.size(), q_student.size(), "kd_logit_per_sample");
  std::vector<double> st;
  std::vector<double> ss;
  const double lzt = log_partition(q_teacher, tau, st);
  const double lzs = log_partition(q_student, tau, ss);
  double kl = 0.0;
  for (std::size_t i = 0; i < st.size(); ++i) {
    const double log_pt = st[i] - lzt;
    const double log_ps = ss[i] - lzs;
    kl += std::exp(log_pt) * (log_pt - log_ps);
  }
  return tau * tau * std::max(0.0, kl);
}

std::vector<double> kd_logit_grad(std::span<const double> q_teacher, std::span<const double> q_student, double tau) {
  require_same(q_teacher.size(), q_student.size(), "kd_logit_grad");
  const auto pt = softmax(q_teacher, tau);
  auto g = softmax(q_student, tau);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = tau * (g[i] - pt[i]);
  return g;
}

double kd_feature_per_sample(std::span<const double> f_teacher, std::span<const double> f_student_projected) {
  require_same(f_teacher.size(), f_student_projected.size(), "kd_feature_per_sample");
  double s = 0.0;
  for (std::size_t i = 0; i < f_teacher.size(); ++i) {
    const double d = f_teacher[i] - f_student_projected[i];
    s += d * d;
  }
  return s;
}

std::vector<double> kd_feature_grad(std::span<const double> f_teacher, std::span<const double> f_student_projected) {
  require_same(f_teacher.size(), f_student_projected.size(), "kd_feature_grad");
  std::vector<double> g(f_teacher.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * (f_student_projected[i] - f_teacher[i]);
  return g;
}

double ce_per_sample(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw std::out_of_range("ce_per_sample: label out of range");
  std::vector<double> shifted;
  const double lz = log_partition(logits, 1.0, shifted);
  return std::max(0.0, lz - shifted[label]);
}

std::vector<double> ce_grad(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw std::out_of_range("ce_grad: label out of range");
  auto g = softmax(logits, 1.0);
  g[label] -= 1.0;
  return g;
}

double total_loss(std::span<const WeightedTerms> selected) {
  if (selected.empty()) throw std::invalid_argument("total_loss: empty selection");
  double s = 0.0;
  for (const auto& t : selected) s += (1.0 - t.alpha) * t.ce + t.alpha * t.kd;
  return s / static_cast<double>(selected.size());
}

}  // namespace sakd
