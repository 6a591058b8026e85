#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gridpose {

// Every random draw in the project flows from one master seed through named
// substreams ("scene", "noise", "ransac", ...), so components can be re-run
// or reordered without perturbing each other's sequences.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t master, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the stream name
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(master ^ splitmix64(h));
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view name) {
  return std::mt19937_64(substream_seed(master, name));
}

}  // namespace gridpose
