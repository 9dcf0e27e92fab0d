#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace patchdenoise {

/// Seeded generator whose derived distributions are implemented here rather
/// than through <random> distributions, whose algorithms the standard leaves
/// to the implementation. Identical seeds give identical streams everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();
  /// Poisson sample: inversion for small means, rounded normal otherwise.
  std::int64_t poisson(double mean);

  template <typename V>
  void shuffle(std::vector<V>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finaliser; derives independent sub-seeds from a base seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace patchdenoise
