#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace qti {

// Derives an independent seed for the stream addressed by (seed, indices...)
// with SplitMix64 mixing, so per-frame, per-coil or per-voxel streams do not
// depend on evaluation order.
inline std::uint64_t stream_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> indices) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(seed);
  for (auto i : indices) { h = mix(h ^ mix(i + 0x632be59bd9b4e019ULL)); }
  return h;
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> indices) {
  return std::mt19937_64(stream_seed(seed, indices));
}

} // namespace qti
