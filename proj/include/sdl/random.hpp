#pragma once

// Portable sampling primitives. std::mt19937_64 output is fully specified by
// the standard, and the helpers below avoid the implementation-defined
// standard distributions, so a seed gives the same stream on every platform.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace sdl {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Inverse-CDF sampler for a single probability vector.
class CdfTable {
 public:
  CdfTable() = default;

  explicit CdfTable(std::span<const double> weights) : cdf_(weights.size()) {
    if (weights.empty()) throw std::invalid_argument("CdfTable: empty weight vector");
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      cdf_[i] = acc;
    }
    if (!(acc > 0.0)) throw std::invalid_argument("CdfTable: weights sum to zero");
  }

  std::size_t sample(Rng& rng) const {
    const double u = uniform01(rng) * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    auto k = static_cast<std::size_t>(it - cdf_.begin());
    if (k < cdf_.size()) return k;
    // u rounded up to the total: take the last bin with positive weight
    k = cdf_.size() - 1;
    while (k > 0 && cdf_[k] == cdf_[k - 1]) --k;
    return k;
  }

  std::size_t size() const noexcept { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

}  // namespace sdl
