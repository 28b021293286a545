#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sakd/config.hpp"
#include "sakd/interruption.hpp"
#include "sakd/linalg.hpp"

namespace sakd {

/// Class-conditional sequences: every class owns `modes_per_class` motifs,
/// each a run of `motif_length` signed unit basis vectors embedded at a
/// random offset over Gaussian frame noise.
struct SyntheticDataset {
  DataSpec spec;
  std::uint64_t seed = 0;
  std::vector<SequenceSample> train;
  std::vector<SequenceSample> test;
  Matrix mode_centers;                 // mean-pooled noiseless motif, one row per mode
  std::vector<std::size_t> mode_class;  // class owning each mode

  std::size_t num_classes() const noexcept { return spec.num_classes; }
};

/// Deterministic in (spec, seed). Throws ConfigError when the spec is
/// infeasible (e.g. more motifs than signed basis directions).
SyntheticDataset generate_dataset(const DataSpec& spec, std::uint64_t seed);

/// FNV-1a over the canonical `data.*` text plus the seed, as hex.
std::string spec_hash(const DataSpec& spec, std::uint64_t seed);

/// Little-endian: "SAKDDATA", u32 version, u64 count, u64 T, u64 d, u64 K,
/// then per sample u64 id, u64 label, T*d f64.
void save_samples(const std::filesystem::path& path, std::span<const SequenceSample> samples, std::size_t num_classes);

struct SampleFile {
  std::size_t num_classes = 0;
  std::vector<SequenceSample> samples;
};
SampleFile load_samples(const std::filesystem::path& path);

/// Writes train.bin, test.bin and manifest.txt into `dir`.
void save_dataset(const std::filesystem::path& dir, const SyntheticDataset& ds);

/// Reads train.bin/test.bin (and the manifest's spec/seed when present).
SyntheticDataset load_dataset(const std::filesystem::path& dir);

}  // namespace sakd
