#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "sakd/config.hpp"

namespace sakd {

/// Per-sample distillation bookkeeping.
struct SampleState {
  std::uint64_t id = 0;
  std::uint64_t omega = 0;   // times selected so far
  double omega_norm = 0.0;
  double p_sel = 1.0;
  double zeta = 1.0;
  double alpha = 0.5;
  std::vector<double> fused_feature;  // empty until the first evaluation
};

/// Fresh states for the given ids: omega = 0, alpha = cfg.alpha_init,
/// p_sel = 1 / epsilon.
std::vector<SampleState> initial_states(std::span<const std::uint64_t> ids, const RunConfig& cfg);

/// omega_norm = omega / max(1, mean omega).
void normalize_counts(std::span<SampleState> states);

/// 1 / (omega_norm + epsilon).
double selection_probability(double omega_norm, double epsilon);

/// clamp(1 / (p_sel * loss), zeta_min, zeta_max); a zero loss maps to zeta_max.
double difficulty(double p_sel, double kd_loss_interrupted, double zeta_min, double zeta_max);

/// Unclamped lambda * alpha_prev + (1 - lambda) * beta / zeta.
double strength_recurrence(double alpha_prev, double beta_n, double zeta, double lambda);

/// alpha <- clamp(strength_recurrence(...), alpha_min, alpha_max).
double update_strength(const SampleState& state, double beta_n, const RunConfig& cfg);

/// fused <- current on first use, else lambda * fused + (1 - lambda) * current.
/// Throws std::invalid_argument on a dimension mismatch.
void fuse_feature(SampleState& state, std::span<const double> current_feature, double lambda);

/// Checks every state invariant; returns a description of the first
/// violation, or an empty string.
std::string audit_states(std::span<const SampleState> states, const RunConfig& cfg);

/// Appends `round,id,omega,omega_norm,p_sel,zeta,alpha` rows.
void write_state_rows(std::ostream& out, std::size_t round, std::span<const SampleState> states);
inline constexpr const char* kStateHeader = "round,id,omega,omega_norm,p_sel,zeta,alpha";

}  // namespace sakd
