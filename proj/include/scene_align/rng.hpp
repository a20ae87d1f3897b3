#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace scene_align {

using Rng = std::mt19937_64;

// Independent substream seed from a global seed, a stream name, and indices.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                                 std::initializer_list<std::uint64_t> indices = {}) {
  auto mix = [](std::uint64_t x) {  // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the name
  for (char c : stream) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  std::uint64_t s = mix(seed ^ mix(h));
  for (auto i : indices) s = mix(s ^ mix(i + 0x632be59bd9b4e019ULL));
  return s;
}

inline Rng make_rng(std::uint64_t seed, std::string_view stream,
                    std::initializer_list<std::uint64_t> indices = {}) {
  return Rng(derive_seed(seed, stream, indices));
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace scene_align
