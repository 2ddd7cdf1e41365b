#pragma once

// Column-stochastic transition kernels over grid bins and the per-step noise
// schedules that parameterize them.
//
// Storage is dense and column-major: column i (the distribution of the next
// bin given current bin i) is contiguous, so K * x is a sequence of axpy
// updates and K^T * v a sequence of dot products.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdl/grid.hpp"

namespace sdl {

class TransitionKernel {
 public:
  /// `column_major[i * N + j]` is the probability of moving to j from i.
  /// Throws unless every entry is non-negative and every column sums to 1.
  TransitionKernel(GridSpec grid, std::vector<double> column_major)
      : grid_(std::move(grid)), n_(grid_.size()), data_(std::move(column_major)) {
    if (data_.size() != n_ * n_) {
      throw std::invalid_argument("transition kernel: expected " + std::to_string(n_ * n_) +
                                  " entries, got " + std::to_string(data_.size()));
    }
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0.0;
      for (double v : column(i)) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
          throw std::invalid_argument("transition kernel: negative or non-finite entry in column " +
                                      std::to_string(i));
        }
        s += v;
      }
      if (std::abs(s - 1.0) > kNormalizationTolerance) {
        throw std::invalid_argument("transition kernel: column " + std::to_string(i) +
                                    " sums to " + detail::format_g17(s));
      }
    }
  }

  const GridSpec& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return n_; }

  double operator()(std::size_t to, std::size_t from) const { return data_[from * n_ + to]; }

  std::span<const double> column(std::size_t from) const {
    return std::span<const double>(data_).subspan(from * n_, n_);
  }

  std::span<const double> data() const noexcept { return data_; }

  /// y = K x (no renormalization).
  std::vector<double> apply(std::span<const double> x) const {
    check_len(x.size());
    std::vector<double> y(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      const double* col = data_.data() + i * n_;
      for (std::size_t j = 0; j < n_; ++j) y[j] += xi * col[j];
    }
    return y;
  }

  /// y = K^T v.
  std::vector<double> apply_transpose(std::span<const double> v) const {
    check_len(v.size());
    std::vector<double> y(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      const double* col = data_.data() + i * n_;
      double acc = 0.0;
      for (std::size_t j = 0; j < n_; ++j) acc += col[j] * v[j];
      y[i] = acc;
    }
    return y;
  }

  Distribution propagate(const Distribution& d) const {
    require_same_grid(grid_, d.grid(), "propagate");
    return Distribution(grid_, apply(d.mass()));
  }

 private:
  void check_len(std::size_t len) const {
    if (len != n_) throw std::invalid_argument("transition kernel: vector length mismatch");
  }

  GridSpec grid_;
  std::size_t n_;
  std::vector<double> data_;
};

inline TransitionKernel identity_kernel(const GridSpec& grid) {
  const std::size_t n = grid.size();
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m[i * n + i] = 1.0;
  return TransitionKernel(grid, std::move(m));
}

namespace detail {

inline constexpr int kWrapImages = 2;  // images k = -2..2 per axis

/// Per-axis Gaussian profile: a[to * n + from] = weight of landing in bin
/// `to` from bin `from` when the mode sits `shift` away from `from`'s center.
/// Each column is normalized to 1. On a wrapped axis every column is a cyclic
/// shift of one base profile, so translation invariance is exact.
inline std::vector<double> axis_profile(std::size_t n, double width, bool wrapped, double sigma,
                                        double shift) {
  const double period = width * static_cast<double>(n);
  const double two_var = 2.0 * sigma * sigma;
  std::vector<double> a(n * n, 0.0);
  if (wrapped) {
    std::vector<double> base(n, 0.0);
    double total = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
      // signed bin offset reduced to (-n/2, n/2]
      auto off = static_cast<long long>(m);
      if (2 * off > static_cast<long long>(n)) off -= static_cast<long long>(n);
      const double d = static_cast<double>(off) * width - shift;
      double w = 0.0;
      for (int k = -kWrapImages; k <= kWrapImages; ++k) {
        const double dk = d + k * period;
        w += std::exp(-dk * dk / two_var);
      }
      base[m] = w;
      total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("gaussian profile underflowed to zero");
    for (double& w : base) w /= total;
    for (std::size_t from = 0; from < n; ++from) {
      for (std::size_t to = 0; to < n; ++to) a[to * n + from] = base[(to + n - from) % n];
    }
  } else {
    for (std::size_t from = 0; from < n; ++from) {
      double total = 0.0;
      for (std::size_t to = 0; to < n; ++to) {
        const double d = (static_cast<double>(to) - static_cast<double>(from)) * width - shift;
        const double w = std::exp(-d * d / two_var);
        a[to * n + from] = w;
        total += w;
      }
      if (!(total > 0.0)) {
        // mode pushed far outside the domain: keep the mass at the border
        const std::size_t edge = shift > 0.0 ? n - 1 : 0;
        a[edge * n + from] = 1.0;
        continue;
      }
      for (std::size_t to = 0; to < n; ++to) a[to * n + from] /= total;
    }
  }
  return a;
}

/// Adds `weight * ax (x) ay` into a column-major N x N matrix.
inline void add_separable(const GridSpec& grid, std::span<const double> ax,
                          std::span<const double> ay, double weight, std::vector<double>& out) {
  const std::size_t nx = grid.nx(), ny = grid.ny(), n = grid.size();
  for (std::size_t from = 0; from < n; ++from) {
    const std::size_t fx = from % nx, fy = from / nx;
    double* col = out.data() + from * n;
    for (std::size_t ty = 0; ty < ny; ++ty) {
      const double wy = weight * ay[ty * ny + fy];
      if (wy == 0.0) continue;
      for (std::size_t tx = 0; tx < nx; ++tx) col[ty * nx + tx] += wy * ax[tx * nx + fx];
    }
  }
}

}  // namespace detail

/// Isotropic Gaussian noise with standard deviation `sigma`, wrapped on a
/// toroidal grid and truncated-then-renormalized otherwise.
inline TransitionKernel gaussian_kernel(const GridSpec& grid, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  const auto ax = detail::axis_profile(grid.nx(), grid.bin_width_x(), grid.wrapped(), sigma, 0.0);
  const auto ay = detail::axis_profile(grid.ny(), grid.bin_width_y(), grid.wrapped(), sigma, 0.0);
  std::vector<double> m(grid.size() * grid.size(), 0.0);
  detail::add_separable(grid, ax, ay, 1.0, m);
  return TransitionKernel(grid, std::move(m));
}

/// Equal mixture of two Gaussians displaced by +/- offset along the (1, 1)
/// diagonal, which smears mass diagonally. offset = 0 reduces to
/// gaussian_kernel.
inline TransitionKernel bimodal_kernel(const GridSpec& grid, double offset, double sigma) {
  if (!(offset >= 0.0)) throw std::invalid_argument("bimodal_kernel: offset must be >= 0");
  if (!(sigma > 0.0)) throw std::invalid_argument("bimodal_kernel: sigma must be positive");
  const double s = offset / std::numbers::sqrt2;
  std::vector<double> m(grid.size() * grid.size(), 0.0);
  for (double sign : {1.0, -1.0}) {
    const auto ax =
        detail::axis_profile(grid.nx(), grid.bin_width_x(), grid.wrapped(), sigma, sign * s);
    const auto ay =
        detail::axis_profile(grid.ny(), grid.bin_width_y(), grid.wrapped(), sigma, sign * s);
    detail::add_separable(grid, ax, ay, 0.5, m);
  }
  return TransitionKernel(grid, std::move(m));
}

/// Stay put with probability 1 - p, otherwise resample from `target`.
inline TransitionKernel fade_kernel(const GridSpec& grid, double p, const Distribution& target) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("fade_kernel: p must lie in [0, 1]");
  require_same_grid(grid, target.grid(), "fade_kernel");
  const std::size_t n = grid.size();
  std::vector<double> m(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double* col = m.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) col[j] = p * target[j];
    col[i] += 1.0 - p;
  }
  return TransitionKernel(grid, std::move(m));
}

enum class NoiseFamily { gaussian, bimodal, fade };

inline const char* to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::bimodal: return "bimodal";
    case NoiseFamily::fade: return "fade";
  }
  return "?";
}

/// Per-step noise parameters. params[t - 1] holds the step-t value: sigma_t
/// for gaussian/bimodal, p_t for fade.
struct Schedule {
  NoiseFamily family{NoiseFamily::gaussian};
  std::vector<double> params;

  std::size_t steps() const noexcept { return params.size(); }
  double at_step(std::size_t t) const { return params.at(t - 1); }
};

inline void validate_schedule(const Schedule& s) {
  if (s.params.empty()) throw std::invalid_argument("schedule: needs at least one step");
  for (std::size_t k = 0; k < s.params.size(); ++k) {
    const double v = s.params[k];
    const bool ok = s.family == NoiseFamily::fade ? (v >= 0.0 && v <= 1.0) : (v > 0.0);
    if (!ok || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("schedule: step ") + std::to_string(k + 1) +
                                  " value " + detail::format_g17(v) + " out of range for " +
                                  to_string(s.family));
    }
  }
}

/// params[t - 1] = a + b * t / T for t = 1..T.
inline Schedule linear_schedule(double a, double b, std::size_t steps,
                                NoiseFamily family = NoiseFamily::gaussian) {
  if (steps < 1) throw std::invalid_argument("linear_schedule: T must be >= 1");
  Schedule s{family, {}};
  s.params.reserve(steps);
  for (std::size_t t = 1; t <= steps; ++t) {
    double v = a + b * (static_cast<double>(t) / static_cast<double>(steps));
    // 0.01 + 0.99 can round a hair above 1
    if (family == NoiseFamily::fade && v > 1.0 && v < 1.0 + 1e-12) v = 1.0;
    s.params.push_back(v);
  }
  validate_schedule(s);
  return s;
}

/// A noise family together with its schedule and family-specific settings.
struct NoiseSpec {
  Schedule schedule;
  double bimodal_offset{0.07};
  /// Bimodal component width; empty means "use the schedule value".
  std::optional<double> bimodal_sigma;
  /// Resampling target for the fade family.
  std::optional<Distribution> fade_target;
};

inline TransitionKernel step_kernel(const GridSpec& grid, const NoiseSpec& noise, std::size_t t) {
  const double v = noise.schedule.at_step(t);
  switch (noise.schedule.family) {
    case NoiseFamily::gaussian: return gaussian_kernel(grid, v);
    case NoiseFamily::bimodal:
      return bimodal_kernel(grid, noise.bimodal_offset, noise.bimodal_sigma.value_or(v));
    case NoiseFamily::fade:
      if (!noise.fade_target) throw std::invalid_argument("fade noise needs a target distribution");
      return fade_kernel(grid, v, *noise.fade_target);
  }
  throw std::logic_error("unknown noise family");
}

/// The distribution every step kernel of the family leaves invariant: the
/// fade target, or uniform for the translation-invariant families on a
/// wrapped grid. Empty when no closed form exists (unwrapped Gaussian).
inline std::optional<Distribution> stationary_noise(const GridSpec& grid, const NoiseSpec& noise) {
  if (noise.schedule.family == NoiseFamily::fade) {
    if (!noise.fade_target) throw std::invalid_argument("fade noise needs a target distribution");
    return noise.fade_target;
  }
  if (grid.wrapped()) return uniform_distribution(grid);
  return std::nullopt;
}

/// Infinity-norm residual max_j |(K d)_j - d_j|.
inline double stationarity_residual(const TransitionKernel& kernel, const Distribution& dist) {
  require_same_grid(kernel.grid(), dist.grid(), "stationarity_residual");
  const auto y = kernel.apply(dist.mass());
  double r = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) r = std::max(r, std::abs(y[j] - dist[j]));
  return r;
}

/// Debug dump as `from,to,prob`, entries above 1e-15 only.
inline void write_kernel_csv(std::ostream& out, const TransitionKernel& k) {
  out << "from,to,prob\n";
  for (std::size_t i = 0; i < k.size(); ++i) {
    for (std::size_t j = 0; j < k.size(); ++j) {
      const double v = k(j, i);
      if (v > 1e-15) out << i << ',' << j << ',' << detail::format_g17(v) << '\n';
    }
  }
}

}  // namespace sdl
