#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pstory {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

// Deterministic random source. Conversions to floating point and integer
// ranges are done here rather than through <random> distributions, whose
// output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}
  // Independent stream keyed by a label, e.g. a parameter name.
  Rng(std::uint64_t seed, std::string_view stream)
      : engine_(splitmix64(seed ^ fnv1a64(stream))) {}

  std::uint64_t next() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t below(std::size_t n);  // [0, n)
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pstory
