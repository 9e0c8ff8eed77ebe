#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace argpois {

/// Random stream used by every sampler. Streams are passed explicitly.
using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds from keys.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic seed for the stream identified by (seed, keys...).
std::uint64_t stream_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  return Rng(stream_seed(seed, keys));
}

/// Uniform on the open interval (0, 1).
inline double uniform_open(Rng& rng) {
  // 53 random mantissa bits, shifted by half an ulp so 0 is never returned
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace argpois
