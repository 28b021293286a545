#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "sakd/config.hpp"
#include "sakd/rng.hpp"

namespace sakd {

/// One training item: `num_frames` x `frame_dim` features plus a class label.
/// With num_frames == 1 ("image mode") interruption acts on individual
/// features instead of whole frames.
struct SequenceSample {
  std::uint64_t id = 0;
  std::size_t label = 0;
  std::size_t num_frames = 0;
  std::size_t frame_dim = 0;
  std::vector<double> frames;  // row-major

  std::span<double> frame(std::size_t t) { return {frames.data() + t * frame_dim, frame_dim}; }
  std::span<const double> frame(std::size_t t) const { return {frames.data() + t * frame_dim, frame_dim}; }

  bool operator==(const SequenceSample&) const = default;
};

/// Throws std::invalid_argument unless shape and entries are valid.
void check_sample(const SequenceSample& s);

enum class InterruptionMode { dropout, shuffle };

std::string_view to_string(InterruptionMode m);

struct InterruptionPlan {
  std::size_t epoch = 0;
  double rate = 0.0;
  InterruptionMode mode = InterruptionMode::dropout;
};

/// 1 - (1 - n / n_epoch)^theta. Requires n < n_epoch.
double interruption_rate(std::size_t n, std::size_t n_epoch, double theta);

/// Dropout while the rate is below eta, shuffle from eta on.
InterruptionPlan plan_for_epoch(std::size_t n, const RunConfig& cfg);

/// Number of interruption units (frames, or features in image mode).
std::size_t interruption_units(const SequenceSample& s);

/// ceil(rate * units) with a tolerance for representation error, so 0.3 * 10 is 3.
std::size_t fraction_count(double rate, std::size_t units);

/// Zero-masks ceil(rate * T) distinct frames chosen uniformly, keeping at
/// least one frame. Image mode masks individual features.
SequenceSample apply_dropout(SequenceSample sample, double rate, Rng& rng);

struct ShuffleResult {
  std::vector<SequenceSample> batch;
  bool mixed = true;  // false when the batch had fewer than two samples
};

/// Picks ceil(fraction * T) frame positions; at each one, the rows at that
/// position are permuted uniformly across the batch. Ids and labels stay put.
ShuffleResult apply_shuffle(std::vector<SequenceSample> batch, double fraction, Rng& rng);

}  // namespace sakd
