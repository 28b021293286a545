#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace sakd {

using Rng = std::mt19937_64;

// Purpose tags mixed into derived seeds so that no two consumers share a stream.
enum class Stream : std::uint64_t {
  data = 1,
  teacher_init,
  teacher_order,
  student_init,
  eval_dropout,
  eval_shuffle,
  eval_batching,
  train_order,
  train_dropout,
  train_shuffle,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Substream seed = hash(master, stream tag, keys...). Used to give every
/// (epoch, sample) or (epoch, batch) its own generator so results do not
/// depend on the order in which workers visit them.
inline std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                 std::initializer_list<std::uint64_t> keys = {}) noexcept {
  std::uint64_t h = splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(stream)));
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t master, Stream stream,
                    std::initializer_list<std::uint64_t> keys = {}) {
  return Rng(derive_seed(master, stream, keys));
}

// Unbiased index in [0, n); n > 0. Rejection sampling keeps the draw
// independent of the standard library's distribution implementation.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = Rng::max() - Rng::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace sakd
