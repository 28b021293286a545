#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

#include "sakd/errors.hpp"

namespace sakd::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, std::string_view what) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw IoError("truncated input while reading " + std::string(what));
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

inline void write_doubles(std::ostream& out, std::span<const double> values) {
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

inline void read_doubles(std::istream& in, std::span<double> values, std::string_view what) {
  if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()))) {
    throw IoError("truncated input while reading " + std::string(what));
  }
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

/// Whole file as bytes; throws IoError.
std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename; throws IoError.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace sakd::io
