#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace saeaudit {

// Seeded splitmix64 generator. The integer stream is pure bit arithmetic,
// so the same seed yields the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Derives an independent stream from a seed and a textual tag. Stage
  // seeding goes through this so the stream a stage sees does not depend
  // on what ran before it.
  static Rng derive(std::uint64_t seed, std::string_view tag);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller; the spare value is cached.
  double normal();

  // Uniform integer in [0, n), rejection sampled (no modulo bias). n > 0.
  std::uint64_t index(std::uint64_t n);

  // Fisher-Yates; std::shuffle is implementation-defined, this is not.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(index(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace saeaudit
