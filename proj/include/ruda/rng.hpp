#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ruda {

/// Independent generator for stream `id` of a run seeded with `seed`.
inline std::mt19937_64 derived_stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32)};
  return std::mt19937_64(seq);
}

/// 64-bit seed for stream `id`, for APIs that take a seed rather than an engine.
inline std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t id) { return derived_stream(seed, id)(); }

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ruda
