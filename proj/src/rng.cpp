#include "v2xmeta/rng.hpp"

namespace v2xmeta {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t SeedTree::derive(std::string_view name,
                               std::initializer_list<std::uint64_t> path) const {
  std::uint64_t h = splitmix64(master_ ^ fnv1a64(name));
  for (std::uint64_t p : path) h = splitmix64(h ^ splitmix64(p + 0x51ed27ULL));
  return h;
}

}  // namespace v2xmeta
