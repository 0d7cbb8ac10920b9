#pragma once

#include <algorithm>
#include <cstdint>

#include "ikm/data.hpp"

namespace ikm::testing {

// Mirrors the generator in tests/oracles/gen_metric_oracles.py.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform() { return (next() >> 11) * (1.0 / 9007199254740992.0); }
  std::uint64_t below(std::uint64_t n) { return next() % n; }

 private:
  std::uint64_t state_;
};

struct MetricPair {
  Image pred, target;
  std::size_t border;
};

inline MetricPair make_metric_pair(SplitMix64& rng) {
  const std::size_t h = 24 + rng.below(17);
  const std::size_t w = 24 + rng.below(17);
  const std::size_t border = 2 + rng.below(3);
  const double noise = 0.02 + 0.2 * rng.uniform();
  MetricPair p{Image({3, h, w}), Image({3, h, w}), border};
  for (auto& v : p.target.values()) v = rng.uniform();
  for (std::size_t i = 0; i < p.pred.size(); ++i)
    p.pred[i] =
        std::min(1.0, std::max(0.0, p.target[i] + noise * (rng.uniform() - 0.5)));
  return p;
}

}  // namespace ikm::testing
