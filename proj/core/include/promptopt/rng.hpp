#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace promptopt {

// All run randomness flows from one root seed through named substreams. A
// substream seed depends only on (root, tag, indices), never on call order,
// so parallel execution and resumed runs draw identical values.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, long a);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, long a, long b);

// mt19937_64 is fully specified by the standard; combined with our own
// rejection sampling below() the draws are portable across compilers.
class SubRng {
 public:
  explicit SubRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  double u01() { return static_cast<double>(next() >> 11) / 9007199254740992.0; }

 private:
  std::mt19937_64 engine_;
};

// Uniform k-subset of {0..population-1} without replacement, in draw order.
// Takes everything when k >= population.
std::vector<std::size_t> sample_without_replacement(SubRng& rng, std::size_t population,
                                                    std::size_t k);

}  // namespace promptopt
