#pragma once

// Discretized 2D state space and probability vectors over its bins.
//
// Bins are addressed by a flat row-major index: index = iy * n_x + ix.
// Every Distribution is renormalized on construction so that its mass sums
// to one within 1e-9.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sdl {

inline constexpr double kNormalizationTolerance = 1e-9;

struct BinIndex {
  std::size_t value{};

  friend auto operator<=>(const BinIndex&, const BinIndex&) = default;
};

struct Point2 {
  double x{};
  double y{};

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct Bounds {
  double x_min{-0.5};
  double x_max{0.5};
  double y_min{-0.5};
  double y_max{0.5};

  friend bool operator==(const Bounds&, const Bounds&) = default;
};

class GridSpec {
 public:
  GridSpec() = default;

  std::size_t nx() const noexcept { return nx_; }
  std::size_t ny() const noexcept { return ny_; }
  std::size_t size() const noexcept { return nx_ * ny_; }
  const Bounds& bounds() const noexcept { return bounds_; }
  bool wrapped() const noexcept { return wrapped_; }

  double period_x() const noexcept { return bounds_.x_max - bounds_.x_min; }
  double period_y() const noexcept { return bounds_.y_max - bounds_.y_min; }
  double bin_width_x() const noexcept { return period_x() / static_cast<double>(nx_); }
  double bin_width_y() const noexcept { return period_y() / static_cast<double>(ny_); }

  BinIndex index(std::size_t ix, std::size_t iy) const {
    if (ix >= nx_ || iy >= ny_) {
      throw std::out_of_range("bin (" + std::to_string(ix) + ", " + std::to_string(iy) +
                              ") outside " + std::to_string(nx_) + "x" + std::to_string(ny_) +
                              " grid");
    }
    return BinIndex{iy * nx_ + ix};
  }

  std::size_t ix(BinIndex i) const { return check(i).value % nx_; }
  std::size_t iy(BinIndex i) const { return check(i).value / nx_; }

  double center_x(std::size_t ix) const {
    return bounds_.x_min + (static_cast<double>(ix) + 0.5) * bin_width_x();
  }
  double center_y(std::size_t iy) const {
    return bounds_.y_min + (static_cast<double>(iy) + 0.5) * bin_width_y();
  }

  Point2 center(BinIndex i) const { return {center_x(ix(i)), center_y(iy(i))}; }

  /// Bin containing (x, y). Coordinates outside the domain are folded back
  /// on a wrapped grid and clamped to the border bin otherwise.
  BinIndex index_of(double x, double y) const {
    return index(axis_bin(x, bounds_.x_min, period_x(), nx_),
                 axis_bin(y, bounds_.y_min, period_y(), ny_));
  }

  /// Displacement from `from` to `to`; on a wrapped grid each component is
  /// the shortest signed toroidal offset, in [-period/2, period/2].
  Point2 displacement(Point2 from, Point2 to) const {
    double dx = to.x - from.x;
    double dy = to.y - from.y;
    if (wrapped_) {
      dx = std::remainder(dx, period_x());
      dy = std::remainder(dy, period_y());
    }
    return {dx, dy};
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  friend GridSpec make_grid(std::size_t, std::size_t, Bounds, bool);

  BinIndex check(BinIndex i) const {
    if (i.value >= size()) {
      throw std::out_of_range("bin index " + std::to_string(i.value) + " outside grid of " +
                              std::to_string(size()) + " bins");
    }
    return i;
  }

  std::size_t axis_bin(double v, double lo, double period, std::size_t n) const {
    double u = (v - lo) / period;
    if (wrapped_) u -= std::floor(u);
    auto k = static_cast<long long>(std::floor(u * static_cast<double>(n)));
    return static_cast<std::size_t>(std::clamp<long long>(k, 0, static_cast<long long>(n) - 1));
  }

  std::size_t nx_{0};
  std::size_t ny_{0};
  Bounds bounds_{};
  bool wrapped_{true};
};

inline GridSpec make_grid(std::size_t nx, std::size_t ny, Bounds bounds = {}, bool wrapped = true) {
  if (nx < 2 || ny < 2) {
    throw std::invalid_argument("grid needs at least 2 bins per axis, got " + std::to_string(nx) +
                                "x" + std::to_string(ny));
  }
  if (!(bounds.x_min < bounds.x_max) || !(bounds.y_min < bounds.y_max)) {
    throw std::invalid_argument("grid bounds must satisfy min < max on both axes");
  }
  GridSpec g;
  g.nx_ = nx;
  g.ny_ = ny;
  g.bounds_ = bounds;
  g.wrapped_ = wrapped;
  return g;
}

inline Point2 bin_center(const GridSpec& grid, BinIndex i) { return grid.center(i); }

inline void require_same_grid(const GridSpec& a, const GridSpec& b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

/// Probability vector over the bins of a grid.
class Distribution {
 public:
  /// Takes unnormalized non-negative weights and divides by their sum.
  Distribution(GridSpec grid, std::vector<double> weights)
      : grid_(std::move(grid)), mass_(std::move(weights)) {
    if (mass_.size() != grid_.size()) {
      throw std::invalid_argument("distribution has " + std::to_string(mass_.size()) +
                                  " entries, grid has " + std::to_string(grid_.size()) + " bins");
    }
    double total = 0.0;
    for (double m : mass_) {
      if (!std::isfinite(m) || m < 0.0) {
        throw std::invalid_argument("distribution weights must be finite and non-negative");
      }
      total += m;
    }
    if (!(total > 0.0)) throw std::invalid_argument("distribution weights sum to zero");
    for (double& m : mass_) m /= total;
  }

  const GridSpec& grid() const noexcept { return grid_; }
  std::span<const double> mass() const noexcept { return mass_; }
  std::size_t size() const noexcept { return mass_.size(); }
  double operator[](std::size_t i) const { return mass_[i]; }
  double at(BinIndex i) const { return mass_.at(i.value); }

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  GridSpec grid_;
  std::vector<double> mass_;
};

inline Distribution uniform_distribution(const GridSpec& grid) {
  return Distribution(grid, std::vector<double>(grid.size(), 1.0));
}

inline Distribution point_mass(const GridSpec& grid, BinIndex b) {
  std::vector<double> w(grid.size(), 0.0);
  w.at(b.value) = 1.0;
  return Distribution(grid, std::move(w));
}

/// Shannon entropy in nats (0 log 0 = 0).
inline double entropy(const Distribution& p) {
  double h = 0.0;
  for (double v : p.mass()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

struct SwissRollParams {
  double turns{2.0};
  double inner_radius{0.05};
  double outer_radius{0.45};
  double thickness{0.02};
  std::size_t curve_samples{2048};

  friend bool operator==(const SwissRollParams&, const SwissRollParams&) = default;
};

/// Points along r(theta) = r_in + (r_out - r_in) * theta / (2 pi turns),
/// theta in [0, 2 pi turns], centered on the middle of the domain.
inline std::vector<Point2> swiss_roll_curve(const GridSpec& grid, const SwissRollParams& p) {
  const double cx = 0.5 * (grid.bounds().x_min + grid.bounds().x_max);
  const double cy = 0.5 * (grid.bounds().y_min + grid.bounds().y_max);
  const double theta_max = 2.0 * std::numbers::pi * p.turns;
  std::vector<Point2> pts;
  pts.reserve(p.curve_samples);
  for (std::size_t k = 0; k < p.curve_samples; ++k) {
    double theta = theta_max * static_cast<double>(k) / static_cast<double>(p.curve_samples - 1);
    double r = p.inner_radius + (p.outer_radius - p.inner_radius) * theta / theta_max;
    pts.push_back({cx + r * std::cos(theta), cy + r * std::sin(theta)});
  }
  return pts;
}

inline double distance_to_curve(Point2 q, std::span<const Point2> curve) {
  double best = std::numeric_limits<double>::infinity();
  for (const Point2& c : curve) {
    double dx = q.x - c.x;
    double dy = q.y - c.y;
    best = std::min(best, dx * dx + dy * dy);
  }
  return std::sqrt(best);
}

inline Distribution swiss_roll_distribution(const GridSpec& grid, const SwissRollParams& p = {}) {
  const double half_extent = 0.5 * std::min(grid.period_x(), grid.period_y());
  if (!(p.turns > 0.0)) throw std::invalid_argument("swiss roll: turns must be positive");
  if (!(p.inner_radius > 0.0 && p.inner_radius < p.outer_radius)) {
    throw std::invalid_argument("swiss roll: need 0 < inner_radius < outer_radius");
  }
  if (p.outer_radius > half_extent) {
    throw std::invalid_argument("swiss roll: outer_radius exceeds half the domain extent");
  }
  if (!(p.thickness > 0.0)) throw std::invalid_argument("swiss roll: thickness must be positive");
  if (p.curve_samples < 2) throw std::invalid_argument("swiss roll: need at least 2 curve samples");

  const auto curve = swiss_roll_curve(grid, p);
  const double two_var = 2.0 * p.thickness * p.thickness;
  std::vector<double> w(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double d = distance_to_curve(grid.center(BinIndex{i}), curve);
    w[i] = std::exp(-d * d / two_var);
  }
  return Distribution(grid, std::move(w));
}

struct MixtureComponent {
  Point2 center{};
  double sigma{0.1};
  double weight{1.0};

  friend bool operator==(const MixtureComponent&, const MixtureComponent&) = default;
};

/// Isotropic Gaussian mixture evaluated at bin centers; distances are
/// toroidal on a wrapped grid.
inline Distribution gaussian_mixture_distribution(const GridSpec& grid,
                                                  std::span<const MixtureComponent> components) {
  if (components.empty()) throw std::invalid_argument("gaussian mixture: no components");
  for (const auto& c : components) {
    if (!(c.sigma > 0.0)) throw std::invalid_argument("gaussian mixture: sigma must be positive");
    if (!(c.weight > 0.0)) throw std::invalid_argument("gaussian mixture: weight must be positive");
  }
  std::vector<double> w(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Point2 p = grid.center(BinIndex{i});
    double acc = 0.0;
    for (const auto& c : components) {
      const Point2 d = grid.displacement(c.center, p);
      acc += c.weight * std::exp(-(d.x * d.x + d.y * d.y) / (2.0 * c.sigma * c.sigma));
    }
    w[i] = acc;
  }
  return Distribution(grid, std::move(w));
}

namespace detail {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// CSV with header `ix,iy,mass`, one row per bin in row-major order.
inline void write_distribution_csv(std::ostream& out, const Distribution& d) {
  const GridSpec& g = d.grid();
  out << "ix,iy,mass\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << g.ix(BinIndex{i}) << ',' << g.iy(BinIndex{i}) << ',' << detail::format_g17(d[i])
        << '\n';
  }
}

/// Reads a distribution CSV. The grid size is inferred from the largest
/// ix/iy; bounds and topology are taken from the arguments.
inline Distribution read_distribution_csv(std::istream& in, Bounds bounds = {},
                                          bool wrapped = true) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("ix,iy,mass", 0) != 0) {
    throw std::invalid_argument("distribution csv: missing `ix,iy,mass` header");
  }
  struct Row {
    std::size_t ix, iy;
    double mass;
  };
  std::vector<Row> rows;
  std::size_t nx = 0, ny = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Row r{};
    char c1 = 0, c2 = 0;
    if (!(ls >> r.ix >> c1 >> r.iy >> c2 >> r.mass) || c1 != ',' || c2 != ',') {
      throw std::invalid_argument("distribution csv: malformed row `" + line + "`");
    }
    nx = std::max(nx, r.ix + 1);
    ny = std::max(ny, r.iy + 1);
    rows.push_back(r);
  }
  GridSpec grid = make_grid(nx, ny, bounds, wrapped);
  if (rows.size() != grid.size()) {
    throw std::invalid_argument("distribution csv: expected " + std::to_string(grid.size()) +
                                " rows, got " + std::to_string(rows.size()));
  }
  std::vector<double> w(grid.size(), -1.0);
  for (const Row& r : rows) w[grid.index(r.ix, r.iy).value] = r.mass;
  if (std::any_of(w.begin(), w.end(), [](double m) { return m < 0.0; })) {
    throw std::invalid_argument("distribution csv: duplicate or negative rows");
  }
  return Distribution(grid, std::move(w));
}

}  // namespace sdl
