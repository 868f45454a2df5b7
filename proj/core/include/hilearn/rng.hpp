#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace hilearn {

// Quantile of the standard normal (Wichura's AS 241, double precision).
double normal_quantile(double p);

// splitmix64 finalizer, used for deriving independent sub-stream seeds.
uint64_t mix64(uint64_t x);

// Deterministic seed derivation: base seed + tag + salts. Different tags or
// salts give statistically independent streams for the same base seed.
uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t salt0 = 0,
                     uint64_t salt1 = 0);

// Seeded generator with a pinned normal sampler: normals are produced by the
// inverse-CDF method (AS 241) from one 53-bit uniform per draw, so a seed
// fully determines the stream independent of the standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(mix64(seed ^ 0x9e3779b97f4a7c15ULL)) {}

  // Uniform in (0, 1), never returning an endpoint.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal(double mean, double stddev) {
    return mean + stddev * normal_quantile(uniform());
  }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(engine_() % static_cast<uint64_t>(n));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = engine_() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hilearn
