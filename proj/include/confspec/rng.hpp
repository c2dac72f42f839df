#pragma once

// Counter-based randomness: every draw is a pure function of a key built from
// the seed and the coordinates of the event, so simulated runs need no shared
// generator state and reproduce bit-exactly under any scheduling.

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace confspec::rng {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t w : words) h = mix64(h ^ mix64(w));
  return h;
}

/// FNV-1a, used to fold step text into a key.
inline constexpr std::uint64_t hash_text(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

/// A short stream of draws under one key.
class CounterStream {
 public:
  explicit constexpr CounterStream(std::uint64_t key) : key_(key) {}

  constexpr std::uint64_t next() { return mix64(key_ ^ mix64(++counter_)); }
  constexpr double uniform() { return to_unit(next()); }
  /// Uniform integer in [0, bound); bound must be positive.
  constexpr std::uint64_t below(std::uint64_t bound) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(bound)) % bound; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace confspec::rng
