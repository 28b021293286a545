#include "sakd/interruption.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sakd {
namespace {

// First `k` entries of a partial Fisher-Yates shuffle of [0, n).
std::vector<std::size_t> choose_distinct(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

// Offset and width of interruption unit u inside a sample's buffer.
struct Unit {
  std::size_t offset;
  std::size_t width;
};

Unit unit_of(const SequenceSample& s, std::size_t u) {
  if (s.num_frames == 1) return {u, 1};
  return {u * s.frame_dim, s.frame_dim};
}

}  // namespace

void check_sample(const SequenceSample& s) {
  if (s.num_frames < 1 || s.frame_dim < 1) throw std::invalid_argument("sample must have T >= 1 and d >= 1");
  if (s.frames.size() != s.num_frames * s.frame_dim) {
    throw std::invalid_argument("sample " + std::to_string(s.id) + ": frame buffer size mismatch");
  }
  for (double x : s.frames) {
    if (!std::isfinite(x)) throw std::invalid_argument("sample " + std::to_string(s.id) + " has a non-finite entry");
  }
}

std::string_view to_string(InterruptionMode m) { return m == InterruptionMode::dropout ? "dropout" : "shuffle"; }

double interruption_rate(std::size_t n, std::size_t n_epoch, double theta) {
  if (n >= n_epoch) {
    throw std::invalid_argument("interruption_rate: epoch " + std::to_string(n) + " >= n_epoch " +
                                std::to_string(n_epoch));
  }
  if (!(theta > 0.0)) throw std::invalid_argument("interruption_rate: theta must be positive");
  const double progress = static_cast<double>(n) / static_cast<double>(n_epoch);
  return 1.0 - std::pow(1.0 - progress, theta);
}

InterruptionPlan plan_for_epoch(std::size_t n, const RunConfig& cfg) {
  const double rate = interruption_rate(n, cfg.n_epoch, cfg.theta);
  return {n, rate, rate < cfg.eta ? InterruptionMode::dropout : InterruptionMode::shuffle};
}

std::size_t interruption_units(const SequenceSample& s) { return s.num_frames == 1 ? s.frame_dim : s.num_frames; }

std::size_t fraction_count(double rate, std::size_t units) {
  const double raw = rate * static_cast<double>(units);
  return static_cast<std::size_t>(std::max(0.0, std::ceil(raw - 1e-9)));
}

SequenceSample apply_dropout(SequenceSample sample, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("apply_dropout: rate must be in [0, 1)");
  const std::size_t units = interruption_units(sample);
  const std::size_t count = std::min(fraction_count(rate, units), units - 1);
  if (count == 0) return sample;
  for (std::size_t u : choose_distinct(units, count, rng)) {
    const Unit span = unit_of(sample, u);
    std::fill_n(sample.frames.begin() + static_cast<std::ptrdiff_t>(span.offset), span.width, 0.0);
  }
  return sample;
}

ShuffleResult apply_shuffle(std::vector<SequenceSample> batch, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("apply_shuffle: fraction must be in (0, 1]");
  if (batch.size() < 2) return {std::move(batch), false};
  const SequenceSample& first = batch.front();
  for (const auto& s : batch) {
    if (s.num_frames != first.num_frames || s.frame_dim != first.frame_dim) {
      throw std::invalid_argument("apply_shuffle: batch samples differ in shape");
    }
  }
  const std::size_t units = interruption_units(first);
  const std::size_t count = std::min(fraction_count(fraction, units), units);
  const std::vector<std::size_t> positions = choose_distinct(units, count, rng);

  const std::size_t b = batch.size();
  std::vector<std::size_t> perm(b);
  std::vector<double> scratch;
  for (std::size_t u : positions) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = b - 1; i > 0; --i) std::swap(perm[i], perm[uniform_index(rng, i + 1)]);

    const Unit span = unit_of(first, u);
    scratch.resize(b * span.width);
    for (std::size_t s = 0; s < b; ++s) {
      std::copy_n(batch[s].frames.begin() + static_cast<std::ptrdiff_t>(span.offset), span.width,
                  scratch.begin() + static_cast<std::ptrdiff_t>(s * span.width));
    }
    // Sample s receives the row that sample perm[s] had at this position.
    for (std::size_t s = 0; s < b; ++s) {
      std::copy_n(scratch.begin() + static_cast<std::ptrdiff_t>(perm[s] * span.width), span.width,
                  batch[s].frames.begin() + static_cast<std::ptrdiff_t>(span.offset));
    }
  }
  return {std::move(batch), true};
}

}  // namespace sakd
