#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cfnoma {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Derives independent named streams from one root seed so that adding a new
// consumer (or running consumers in parallel) never perturbs existing draws.
class Substreams {
 public:
  explicit Substreams(std::uint64_t root_seed) : root_(root_seed) {}

  std::uint64_t derive(std::string_view name, std::uint64_t index = 0) const {
    std::uint64_t h = detail::splitmix64(root_ ^ detail::fnv1a64(name));
    return detail::splitmix64(h ^ detail::splitmix64(index));
  }

  std::mt19937_64 stream(std::string_view name, std::uint64_t index = 0) const {
    return std::mt19937_64(derive(name, index));
  }

  std::uint64_t root() const { return root_; }

 private:
  std::uint64_t root_;
};

}  // namespace cfnoma
