#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sdl/diffusion.hpp"
#include "sdl/grid.hpp"

namespace sdl {

struct MetricOptions {
  /// Entries below the floor are raised to it and the vector renormalized
  /// before taking logs, so KL stays finite at true zeros.
  double epsilon_floor{1e-12};

  friend bool operator==(const MetricOptions&, const MetricOptions&) = default;
};

inline void validate(const MetricOptions& o) {
  if (!(o.epsilon_floor > 0.0 && o.epsilon_floor < 1e-6)) {
    throw std::invalid_argument("metrics: epsilon_floor must lie in (0, 1e-6)");
  }
}

namespace detail {

inline std::vector<double> floored(std::span<const double> p, double eps) {
  std::vector<double> out(p.begin(), p.end());
  double total = 0.0;
  for (double& v : out) {
    v = std::max(v, eps);
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

}  // namespace detail

/// D_KL(p || q) in nats.
inline double kl_divergence(const Distribution& p, const Distribution& q,
                            const MetricOptions& opts = {}) {
  require_same_grid(p.grid(), q.grid(), "kl_divergence");
  validate(opts);
  const auto pf = detail::floored(p.mass(), opts.epsilon_floor);
  const auto qf = detail::floored(q.mass(), opts.epsilon_floor);
  double kl = 0.0;
  for (std::size_t i = 0; i < pf.size(); ++i) kl += pf[i] * std::log(pf[i] / qf[i]);
  return kl;
}

inline double total_variation(const Distribution& p, const Distribution& q) {
  require_same_grid(p.grid(), q.grid(), "total_variation");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

/// D_KL(q_d || p_s): how far the generated distribution is from the data.
inline double reconstruction_error(const ForwardProcess& forward, const Distribution& p_s,
                                   const MetricOptions& opts = {}) {
  return kl_divergence(forward.data(), p_s, opts);
}

/// Largest single-step change along the forward path,
/// max_t D_KL(q_{t+1} || q_t).
inline double inversion_complexity(const ForwardProcess& forward, const MetricOptions& opts = {}) {
  const auto& m = forward.marginals();
  if (m.size() < 2) throw std::invalid_argument("inversion_complexity: need at least 2 marginals");
  double worst = 0.0;
  for (std::size_t t = 0; t + 1 < m.size(); ++t) {
    worst = std::max(worst, kl_divergence(m[t + 1], m[t], opts));
  }
  return worst;
}

}  // namespace sdl
