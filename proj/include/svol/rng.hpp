// Counter-based random source: Philox4x32-10 keyed by (seed, path), counted
// by step. Every path owns a substream addressed by its index, so results
// are reproducible regardless of how paths are distributed over workers.
#pragma once

#include <array>
#include <cstdint>

#include "svol/blackscholes.hpp"

namespace svol {

struct Philox4x32 {
  static std::array<std::uint32_t, 4> block(std::uint64_t key, std::uint64_t ctr_hi,
                                            std::uint64_t ctr_lo) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    std::uint32_t k0 = static_cast<std::uint32_t>(key);
    std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
    std::array<std::uint32_t, 4> c{static_cast<std::uint32_t>(ctr_lo),
                                   static_cast<std::uint32_t>(ctr_lo >> 32),
                                   static_cast<std::uint32_t>(ctr_hi),
                                   static_cast<std::uint32_t>(ctr_hi >> 32)};
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * c[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k0, static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k1, static_cast<std::uint32_t>(p0)};
      k0 += W0;
      k1 += W1;
    }
    return c;
  }
};

namespace detail {

inline double u64_to_unit(std::uint64_t bits) {
  // 53 significant bits, strictly inside (0, 1)
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

/// Two standard normal draws for a given (seed, path, step) address.
struct NormalPair {
  double z1, z2;
};

inline NormalPair normals_at(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
  const auto b = Philox4x32::block(seed, path, step);
  const std::uint64_t u1 = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
  const std::uint64_t u2 = (static_cast<std::uint64_t>(b[2]) << 32) | b[3];
  return {norm_ppf(detail::u64_to_unit(u1)), norm_ppf(detail::u64_to_unit(u2))};
}

}  // namespace svol
