// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, index), so trials can be generated in any order or on any
// thread and still see the same noise.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace noisepref {

namespace detail {

// Philox4x32-10 (Salmon et al., Random123).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// 53-bit uniform in (0, 1].
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
  return static_cast<double>(bits + 1) * 0x1.0p-53;
}

}  // namespace detail

/// Named sub-streams of a single trial.
enum class Channel : std::uint64_t {
  PreActivation = 1,
  PostActivation = 2,
  Velocity = 3,
  Task = 4,
  Evaluation = 5,
  FixedPoint = 6,
  Init = 7,
  Ou = 8,
};

class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Independent child stream; deterministic in (this stream, id).
  RngStream substream(std::uint64_t id) const {
    return RngStream(seed_, detail::splitmix64(stream_ ^ detail::splitmix64(id + 0x632BE59BD9B4E019ull)));
  }
  RngStream substream(Channel channel) const { return substream(static_cast<std::uint64_t>(channel)); }

  /// Uniform on (0, 1].
  double uniform(std::uint64_t index) const {
    const auto block = raw(index);
    return detail::to_unit(block[0], block[1]);
  }

  /// Uniform integer in [lo, hi] (inclusive); hi - lo must be small compared to 2^53.
  std::int64_t uniform_int(std::uint64_t index, std::int64_t lo, std::int64_t hi) const {
    const double span = static_cast<double>(hi - lo + 1);
    auto k = static_cast<std::int64_t>((1.0 - uniform(index)) * span);
    if (k > hi - lo) k = hi - lo;
    return lo + k;
  }

  /// Standard normal; indices 2k and 2k+1 are the Box-Muller pair of block k.
  double normal(std::uint64_t index) const {
    const auto pair = normal_pair(index >> 1);
    return (index & 1u) ? pair[1] : pair[0];
  }

  /// Fills out[j] = normal(offset + j).
  void fill_normal(std::uint64_t offset, std::span<double> out) const {
    std::size_t j = 0;
    if ((offset & 1u) && !out.empty()) {
      out[0] = normal(offset);
      j = 1;
    }
    for (; j + 1 < out.size(); j += 2) {
      const auto pair = normal_pair((offset + j) >> 1);
      out[j] = pair[0];
      out[j + 1] = pair[1];
    }
    if (j < out.size()) out[j] = normal(offset + j);
  }

 private:
  std::array<std::uint32_t, 4> raw(std::uint64_t block) const {
    return detail::philox4x32(
        {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
        {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
  }

  std::array<double, 2> normal_pair(std::uint64_t block) const {
    const auto bits = raw(block);
    const double u1 = detail::to_unit(bits[0], bits[1]);
    const double u2 = detail::to_unit(bits[2], bits[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
};

}  // namespace noisepref
