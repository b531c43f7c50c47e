#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace maskboard {

// std::uniform_int_distribution and std::shuffle are implementation-defined;
// these helpers pin the sequence so seeded outputs match across toolchains.

inline std::uint64_t uniform_below(std::mt19937_64& gen, std::uint64_t bound) {
  if (bound <= 1) {
    return 0;
  }
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t draw = gen();
  while (draw >= limit) {
    draw = gen();
  }
  return draw % bound;
}

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(gen, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace maskboard
