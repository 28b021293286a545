#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sakd {

struct ModelOutput {
  std::vector<double> logits;
  std::vector<double> feature;  // hidden activation before the classifier
};

/// softmax(logits / tau), max-shifted.
std::vector<double> softmax(std::span<const double> logits, double tau = 1.0);

/// tau^2 * KL(softmax(q_t / tau) || softmax(q_s / tau)), via log-sum-exp.
double kd_logit_per_sample(std::span<const double> q_teacher, std::span<const double> q_student, double tau);

/// d kd_logit_per_sample / d q_student = tau * (p_s - p_t).
std::vector<double> kd_logit_grad(std::span<const double> q_teacher, std::span<const double> q_student, double tau);

/// |f_t - f_s|^2; f_s is the student feature after projection.
double kd_feature_per_sample(std::span<const double> f_teacher, std::span<const double> f_student_projected);

/// d kd_feature_per_sample / d f_s = 2 (f_s - f_t).
std::vector<double> kd_feature_grad(std::span<const double> f_teacher, std::span<const double> f_student_projected);

/// -log softmax(q)_label.
double ce_per_sample(std::span<const double> logits, std::size_t label);

/// softmax(q) - onehot(label).
std::vector<double> ce_grad(std::span<const double> logits, std::size_t label);

struct WeightedTerms {
  double ce;
  double kd;
  double alpha;
};

/// mean_j (1 - alpha_j) ce_j + alpha_j kd_j. Throws on an empty list.
double total_loss(std::span<const WeightedTerms> selected);

}  // namespace sakd
