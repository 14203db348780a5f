#include "promptopt/rng.hpp"

#include <numeric>

#include "promptopt/util.hpp"

namespace promptopt {

namespace {

std::uint64_t chain_u64(std::uint64_t h, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  return fnv1a64(std::string_view(bytes, 8), h);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  std::uint64_t h = chain_u64(14695981039346656037ull, root);
  return fnv1a64(tag, h);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, long a) {
  return chain_u64(derive_seed(root, tag), static_cast<std::uint64_t>(a));
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, long a, long b) {
  return chain_u64(derive_seed(root, tag, a), static_cast<std::uint64_t>(b));
}

std::uint64_t SubRng::below(std::uint64_t bound) {
  // Rejection sampling keeps the distribution exactly uniform.
  std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t x = next();
    if (x >= threshold) return x % bound;
  }
}

std::vector<std::size_t> sample_without_replacement(SubRng& rng, std::size_t population,
                                                    std::size_t k) {
  if (k > population) k = population;
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first k slots end up a uniform sample.
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(population - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace promptopt
