#pragma once

#include <cstdint>

namespace sonar_oi {

/// splitmix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent per-purpose seed so that adding draws to one stream never shifts another.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                                  std::uint64_t index = 0) noexcept {
  return mix64(mix64(mix64(base) ^ stream) ^ index);
}

}  // namespace sonar_oi
