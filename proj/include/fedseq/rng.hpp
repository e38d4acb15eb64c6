// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace fedseq {

/// xoshiro256** seeded through SplitMix64. The output stream depends only on
/// the seed, so experiments replay identically on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();

  /// Uniform in [lo, hi). Requires lo < hi.
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller (one variate cached).
  double normal();

  /// Uniform integer in [0, bound), unbiased. Requires bound > 0.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent seed for a named sub-stream, e.g. per fold or per
/// client, so that adding a consumer never perturbs the others.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

}  // namespace fedseq
