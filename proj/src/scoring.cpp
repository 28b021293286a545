#include "sakd/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

namespace sakd {

std::vector<SampleState> initial_states(std::span<const std::uint64_t> ids, const RunConfig& cfg) {
  std::vector<SampleState> states(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    states[i].id = ids[i];
    states[i].alpha = cfg.alpha_init;
    states[i].p_sel = selection_probability(0.0, cfg.epsilon);
    states[i].zeta = cfg.zeta_max;
  }
  return states;
}

void normalize_counts(std::span<SampleState> states) {
  if (states.empty()) return;
  double total = 0.0;
  for (const auto& s : states) total += static_cast<double>(s.omega);
  const double scale = std::max(1.0, total / static_cast<double>(states.size()));
  for (auto& s : states) s.omega_norm = static_cast<double>(s.omega) / scale;
}

double selection_probability(double omega_norm, double epsilon) { return 1.0 / (omega_norm + epsilon); }

double difficulty(double p_sel, double kd_loss_interrupted, double zeta_min, double zeta_max) {
  const double denom = p_sel * kd_loss_interrupted;
  if (!(denom > 0.0)) return zeta_max;
  return std::clamp(1.0 / denom, zeta_min, zeta_max);
}

double strength_recurrence(double alpha_prev, double beta_n, double zeta, double lambda) {
  return lambda * alpha_prev + (1.0 - lambda) * beta_n / zeta;
}

double update_strength(const SampleState& state, double beta_n, const RunConfig& cfg) {
  return std::clamp(strength_recurrence(state.alpha, beta_n, state.zeta, cfg.lambda), cfg.alpha_min, cfg.alpha_max);
}

void fuse_feature(SampleState& state, std::span<const double> current_feature, double lambda) {
  if (state.fused_feature.empty()) {
    state.fused_feature.assign(current_feature.begin(), current_feature.end());
    return;
  }
  if (state.fused_feature.size() != current_feature.size()) {
    throw std::invalid_argument("fuse_feature: sample " + std::to_string(state.id) + " feature dimension " +
                                std::to_string(current_feature.size()) + " != stored " +
                                std::to_string(state.fused_feature.size()));
  }
  for (std::size_t k = 0; k < current_feature.size(); ++k) {
    state.fused_feature[k] = lambda * state.fused_feature[k] + (1.0 - lambda) * current_feature[k];
  }
}

std::string audit_states(std::span<const SampleState> states, const RunConfig& cfg) {
  for (const auto& s : states) {
    const std::string who = "sample " + std::to_string(s.id) + ": ";
    if (!(s.alpha >= cfg.alpha_min && s.alpha <= cfg.alpha_max) && s.alpha != cfg.alpha_init) {
      return who + "alpha " + std::to_string(s.alpha) + " outside clamp";
    }
    if (!(s.zeta >= cfg.zeta_min && s.zeta <= cfg.zeta_max)) return who + "zeta outside clamp";
    if (s.p_sel != selection_probability(s.omega_norm, cfg.epsilon)) return who + "p_sel != 1/(omega_norm + eps)";
    if (!(s.p_sel > 0.0 && s.p_sel <= 1.0 / cfg.epsilon)) return who + "p_sel outside (0, 1/eps]";
    if (s.omega_norm < 0.0) return who + "negative omega_norm";
  }
  return {};
}

void write_state_rows(std::ostream& out, std::size_t round, std::span<const SampleState> states) {
  char buf[256];
  for (const auto& s : states) {
    std::snprintf(buf, sizeof buf, "%zu,%llu,%llu,%.17g,%.17g,%.17g,%.17g\n", round,
                  static_cast<unsigned long long>(s.id), static_cast<unsigned long long>(s.omega), s.omega_norm,
                  s.p_sel, s.zeta, s.alpha);
    out << buf;
  }
}

}  // namespace sakd
