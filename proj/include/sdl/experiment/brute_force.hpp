#pragma once

// Exhaustive references used to validate the reverse-process machinery.
// Everything here works on plain nested vectors with naive loops and shares
// no code with the dense or matrix-free paths it checks.

#include <cstddef>
#include <functional>
#include <vector>

#include "sdl/kernels.hpp"

namespace sdl::brute {

using Matrix = std::vector<std::vector<double>>;  // m[to][from]

inline Matrix to_matrix(const TransitionKernel& k) {
  Matrix m(k.size(), std::vector<double>(k.size()));
  for (std::size_t to = 0; to < k.size(); ++to) {
    for (std::size_t from = 0; from < k.size(); ++from) m[to][from] = k(to, from);
  }
  return m;
}

inline std::vector<double> forward_step(const Matrix& k, const std::vector<double>& q) {
  std::vector<double> out(q.size(), 0.0);
  for (std::size_t to = 0; to < q.size(); ++to) {
    for (std::size_t from = 0; from < q.size(); ++from) out[to] += k[to][from] * q[from];
  }
  return out;
}

/// post[x][y] = k[y][x] prior[x] / sum_x' k[y][x'] prior[x'].
inline Matrix bayes(const Matrix& k, const std::vector<double>& prior) {
  const std::size_t n = prior.size();
  Matrix post(n, std::vector<double>(n, 0.0));
  for (std::size_t y = 0; y < n; ++y) {
    double z = 0.0;
    for (std::size_t x = 0; x < n; ++x) z += k[y][x] * prior[x];
    for (std::size_t x = 0; x < n; ++x) post[x][y] = z > 0.0 ? k[y][x] * prior[x] / z : prior[x];
  }
  return post;
}

/// p_s(x_0) by summing over every path x_T, x_hat_T, x_{T-1}, ..., x_0.
/// Cost N^(2T+1); keep N and T tiny.
inline std::vector<double> reverse_by_paths(const std::vector<Matrix>& kernels,
                                            const std::vector<double>& q0,
                                            const std::vector<double>& noise) {
  const std::size_t n = q0.size();
  const std::size_t steps = kernels.size();
  std::vector<std::vector<double>> marg{q0};
  for (const auto& k : kernels) marg.push_back(forward_step(k, marg.back()));
  std::vector<Matrix> post;
  for (std::size_t t = 1; t <= steps; ++t) post.push_back(bayes(kernels[t - 1], marg[t - 1]));

  std::vector<double> ps(n, 0.0);
  std::function<void(std::size_t, std::size_t, double)> visit = [&](std::size_t t, std::size_t x,
                                                                    double w) {
    if (t == 0) {
      ps[x] += w;
      return;
    }
    for (std::size_t y = 0; y < n; ++y) {
      const double wy = w * kernels[t - 1][y][x];
      if (wy == 0.0) continue;
      for (std::size_t xp = 0; xp < n; ++xp) visit(t - 1, xp, wy * post[t - 1][xp][y]);
    }
  };
  for (std::size_t x = 0; x < n; ++x) visit(steps, x, noise[x]);
  return ps;
}

/// Serial-reproduction kernel by direct summation over percepts.
inline Matrix serial_kernel_by_sum(const Matrix& likelihood, const std::vector<double>& prior) {
  const std::size_t n = prior.size();
  const Matrix post = bayes(likelihood, prior);
  Matrix k(n, std::vector<double>(n, 0.0));
  for (std::size_t from = 0; from < n; ++from) {
    for (std::size_t to = 0; to < n; ++to) {
      for (std::size_t y = 0; y < n; ++y) k[to][from] += post[to][y] * likelihood[y][from];
    }
  }
  return k;
}

}  // namespace sdl::brute
