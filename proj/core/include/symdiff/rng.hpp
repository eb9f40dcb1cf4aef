#pragma once

#include <cstdint>

#include "symdiff/tensor.hpp"

namespace symdiff {

// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based splittable random stream.
///
/// The n-th 64-bit output (n = 1, 2, ...) is mix64(key + n * 0x9e3779b97f4a7c15), where
/// key = mix64(seed ^ mix64(stream_id + 0x632be59bd9b4e019)). Output depends only on
/// (seed, stream_id, counter), so sequences are identical on every platform.
///
/// split(k) derives a child stream with a fresh stream id; the child does not depend on how
/// many values the parent has already produced.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t next_u64() noexcept;
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  // Uniform on (0, 1].
  double uniform_open() noexcept;
  // Standard normal via Box-Muller; values are produced in (cos, sin) pairs.
  double normal() noexcept;
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

  RngStream split(std::uint64_t child) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Tensor randn(RngStream& stream, Shape shape);

}  // namespace symdiff
