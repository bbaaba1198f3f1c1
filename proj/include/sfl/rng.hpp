#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace sfl {

using Engine = std::mt19937_64;

// Derives an independent stream seed from a base seed and a list of tags
// (purpose, round, client id, ...). SplitMix64 finalizer per tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(seed);
  for (auto t : tags) h = mix(h ^ mix(t));
  return h;
}

inline Engine make_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  return Engine(derive_seed(seed, tags));
}

// Stream tags.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kBlobs = 2;
inline constexpr std::uint64_t kPartition = 3;
inline constexpr std::uint64_t kMalicious = 4;
inline constexpr std::uint64_t kSampling = 5;
inline constexpr std::uint64_t kBatches = 6;
}  // namespace stream

}  // namespace sfl
