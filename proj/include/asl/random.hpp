#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace asl {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a cheap bijective mixer for deriving independent seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for the substream identified by `tags` under `master`. The same
/// (master, tags) always yields the same seed, independent of call order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = mix64(master);
  for (auto t : tags) s = mix64(s ^ mix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(master, tags));
}

// Stream tags; distinct constants keep substreams of different purposes apart.
namespace stream {
inline constexpr std::uint64_t kTrainEpoch = 0x7472;
inline constexpr std::uint64_t kValidation = 0x7661;
inline constexpr std::uint64_t kExample = 0x6578;
inline constexpr std::uint64_t kInit = 0x696e;
inline constexpr std::uint64_t kShuffle = 0x7368;
inline constexpr std::uint64_t kDropout = 0x6472;
inline constexpr std::uint64_t kClipPick = 0x6370;
}  // namespace stream

}  // namespace asl
