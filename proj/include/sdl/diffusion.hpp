#pragma once

// Forward noising chains, exact Bayesian posteriors, and the induced reverse
// (sampling) process.
//
// Step t of the forward chain maps q_{t-1} to q_t with kernel K_t. The
// optimal denoiser at that step is the posterior
//     post_t(i | j) = K_t(j | i) q_{t-1}(i) / sum_i' K_t(j | i') q_{t-1}(i'),
// and one reverse step first re-noises the current state with K_t and then
// denoises with post_t. Two realizations are provided:
//   * dense: PosteriorKernel / ReverseSampler hold N x N posterior matrices;
//     fine for small grids and needed for detailed-balance checks.
//   * matrix-free: PosteriorOperator applies post_t as
//     q_{t-1} (.) K_t^T (v (/) evidence), so a 41 x 41 run never stores more
//     than one kernel at a time.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdl/errors.hpp"
#include "sdl/grid.hpp"
#include "sdl/kernels.hpp"
#include "sdl/random.hpp"

namespace sdl {

/// Evidence below this is treated as an impossible observation.
inline constexpr double kZeroEvidence = 1e-300;
inline constexpr std::size_t kDefaultMaxDenseBins = 4096;

/// The T step kernels of a forward chain. Either owns materialized kernels or
/// rebuilds step t from a builder on every access, which keeps memory at one
/// kernel for large grids.
class KernelSequence {
 public:
  using Builder = std::function<TransitionKernel(std::size_t step)>;

  explicit KernelSequence(std::vector<TransitionKernel> kernels) {
    if (kernels.empty()) throw std::invalid_argument("kernel sequence: need at least one step");
    grid_ = kernels.front().grid();
    steps_ = kernels.size();
    owned_.reserve(kernels.size());
    for (auto& k : kernels) {
      require_same_grid(grid_, k.grid(), "kernel sequence");
      owned_.push_back(std::make_shared<const TransitionKernel>(std::move(k)));
    }
  }

  KernelSequence(GridSpec grid, std::size_t steps, Builder build)
      : grid_(std::move(grid)), steps_(steps), build_(std::move(build)) {
    if (steps_ == 0) throw std::invalid_argument("kernel sequence: need at least one step");
    if (!build_) throw std::invalid_argument("kernel sequence: empty builder");
  }

  /// Kernels for a noise family; built lazily when `materialize` is false.
  static KernelSequence from_noise(const GridSpec& grid, const NoiseSpec& noise,
                                   bool materialize) {
    validate_schedule(noise.schedule);
    if (materialize) {
      std::vector<TransitionKernel> ks;
      ks.reserve(noise.schedule.steps());
      for (std::size_t t = 1; t <= noise.schedule.steps(); ++t) {
        ks.push_back(step_kernel(grid, noise, t));
      }
      return KernelSequence(std::move(ks));
    }
    return KernelSequence(grid, noise.schedule.steps(),
                          [grid, noise](std::size_t t) { return step_kernel(grid, noise, t); });
  }

  const GridSpec& grid() const noexcept { return grid_; }
  std::size_t steps() const noexcept { return steps_; }
  bool materialized() const noexcept { return !owned_.empty(); }

  /// Kernel of forward step t, 1 <= t <= steps().
  std::shared_ptr<const TransitionKernel> step(std::size_t t) const {
    if (t < 1 || t > steps_) {
      throw std::out_of_range("kernel sequence: step " + std::to_string(t) + " outside 1.." +
                              std::to_string(steps_));
    }
    if (!owned_.empty()) return owned_[t - 1];
    auto k = std::make_shared<const TransitionKernel>(build_(t));
    require_same_grid(grid_, k->grid(), "kernel sequence");
    return k;
  }

 private:
  GridSpec grid_;
  std::size_t steps_{0};
  std::vector<std::shared_ptr<const TransitionKernel>> owned_;
  Builder build_;
};

/// Marginals q_0..q_T of a forward chain plus the noise distribution q_n the
/// reverse process starts from.
class ForwardProcess {
 public:
  ForwardProcess(KernelSequence kernels, std::vector<Distribution> marginals, Distribution noise)
      : kernels_(std::move(kernels)), marginals_(std::move(marginals)), noise_(std::move(noise)) {}

  const KernelSequence& kernels() const noexcept { return kernels_; }
  std::size_t steps() const noexcept { return kernels_.steps(); }
  const GridSpec& grid() const noexcept { return kernels_.grid(); }
  const std::vector<Distribution>& marginals() const noexcept { return marginals_; }
  const Distribution& marginal(std::size_t t) const { return marginals_.at(t); }
  const Distribution& data() const noexcept { return marginals_.front(); }
  const Distribution& noise() const noexcept { return noise_; }

 private:
  KernelSequence kernels_;
  std::vector<Distribution> marginals_;
  Distribution noise_;
};

/// Runs the forward chain from q0. `noise` is the stationary distribution of
/// the family; when omitted the final marginal q_T stands in for it.
inline ForwardProcess forward_marginals(const Distribution& q0, KernelSequence kernels,
                                        std::optional<Distribution> noise = std::nullopt) {
  require_same_grid(q0.grid(), kernels.grid(), "forward_marginals");
  std::vector<Distribution> marginals;
  marginals.reserve(kernels.steps() + 1);
  marginals.push_back(q0);
  for (std::size_t t = 1; t <= kernels.steps(); ++t) {
    marginals.push_back(kernels.step(t)->propagate(marginals.back()));
  }
  if (noise) require_same_grid(q0.grid(), noise->grid(), "forward_marginals noise");
  Distribution qn = noise ? std::move(*noise) : marginals.back();
  return ForwardProcess(std::move(kernels), std::move(marginals), std::move(qn));
}

/// Dense posterior p_{t-1}(x_{t-1} | x_hat_t); column j conditions on x_hat = j.
struct PosteriorKernel {
  std::size_t step{0};
  TransitionKernel matrix;
  /// One entry per zero-evidence column that fell back to the prior.
  std::vector<std::string> warnings;
};

namespace detail {

inline void underflow_error(std::size_t step, std::size_t bin) {
  throw NumericalError("posterior at step " + std::to_string(step) + ": evidence for bin " +
                       std::to_string(bin) + " underflowed although it is reachable");
}

}  // namespace detail

/// Bayes rule with `kernel` as likelihood and `prior_marginal` as prior.
/// Columns with zero evidence (observations the prior cannot produce) are set
/// to the prior itself and reported in `warnings`.
inline PosteriorKernel exact_posterior(const TransitionKernel& kernel,
                                       const Distribution& prior_marginal, std::size_t step = 0) {
  require_same_grid(kernel.grid(), prior_marginal.grid(), "exact_posterior");
  const std::size_t n = kernel.size();
  std::vector<double> m(n * n, 0.0);
  std::vector<std::string> warnings;
  for (std::size_t j = 0; j < n; ++j) {
    double* col = m.data() + j * n;
    double evidence = 0.0;
    bool reachable = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = kernel(j, i) * prior_marginal[i];
      col[i] = w;
      evidence += w;
      reachable = reachable || w > 0.0;
    }
    if (evidence < kZeroEvidence) {
      if (reachable) detail::underflow_error(step, j);
      for (std::size_t i = 0; i < n; ++i) col[i] = prior_marginal[i];
      warnings.push_back("step " + std::to_string(step) + ": zero evidence for bin " +
                         std::to_string(j) + ", using prior");
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) col[i] /= evidence;
  }
  return PosteriorKernel{step, TransitionKernel(kernel.grid(), std::move(m)), std::move(warnings)};
}

/// Matrix-free form of exact_posterior(kernel, prior).
class PosteriorOperator {
 public:
  PosteriorOperator(std::shared_ptr<const TransitionKernel> kernel, const Distribution& prior,
                    std::size_t step = 0)
      : kernel_(std::move(kernel)), prior_(prior.mass().begin(), prior.mass().end()) {
    require_same_grid(kernel_->grid(), prior.grid(), "PosteriorOperator");
    const auto evidence = kernel_->apply(prior_);
    inv_evidence_.assign(evidence.size(), 0.0);
    zero_.assign(evidence.size(), 0);
    for (std::size_t j = 0; j < evidence.size(); ++j) {
      if (evidence[j] < kZeroEvidence) {
        for (std::size_t i = 0; i < prior_.size(); ++i) {
          if ((*kernel_)(j, i) * prior_[i] > 0.0) detail::underflow_error(step, j);
        }
        zero_[j] = 1;
        ++zero_count_;
      } else {
        inv_evidence_[j] = 1.0 / evidence[j];
      }
    }
  }

  const TransitionKernel& kernel() const noexcept { return *kernel_; }
  std::size_t zero_evidence_bins() const noexcept { return zero_count_; }

  /// (post v)_i = prior_i * sum_j K(j|i) v_j / e_j, plus prior_i * v_j for
  /// zero-evidence j.
  std::vector<double> apply(std::span<const double> v) const {
    std::vector<double> scaled(v.size());
    double fallback = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      scaled[j] = v[j] * inv_evidence_[j];
      if (zero_[j]) fallback += v[j];
    }
    auto out = kernel_->apply_transpose(scaled);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = prior_[i] * (out[i] + fallback);
    return out;
  }

  /// Row i of (post * M) for the column-stochastic M = kernel(): entry j is
  /// sum_x post(i | x) K(x | j).
  std::vector<double> sampling_row(std::size_t i) const {
    const auto col = kernel_->column(i);
    std::vector<double> scaled(col.size());
    for (std::size_t x = 0; x < col.size(); ++x) scaled[x] = col[x] * inv_evidence_[x];
    auto row = kernel_->apply_transpose(scaled);
    if (zero_count_ > 0) {
      std::vector<double> mask(col.size());
      for (std::size_t x = 0; x < col.size(); ++x) mask[x] = zero_[x] ? 1.0 : 0.0;
      const auto extra = kernel_->apply_transpose(mask);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += extra[j];
    }
    for (double& r : row) r *= prior_[i];
    return row;
  }

 private:
  std::shared_ptr<const TransitionKernel> kernel_;
  std::vector<double> prior_;
  std::vector<double> inv_evidence_;
  std::vector<char> zero_;
  std::size_t zero_count_{0};
};

/// One reverse step: noise dist_t with `kernel`, then denoise with `posterior`.
inline Distribution sampling_step(const PosteriorKernel& posterior, const TransitionKernel& kernel,
                                  const Distribution& dist_t) {
  require_same_grid(kernel.grid(), dist_t.grid(), "sampling_step");
  require_same_grid(kernel.grid(), posterior.matrix.grid(), "sampling_step");
  const auto noisy = kernel.apply(dist_t.mass());
  return Distribution(kernel.grid(), posterior.matrix.apply(noisy));
}

inline Distribution sampling_step(const PosteriorOperator& posterior, const Distribution& dist_t) {
  require_same_grid(posterior.kernel().grid(), dist_t.grid(), "sampling_step");
  const auto noisy = posterior.kernel().apply(dist_t.mass());
  return Distribution(dist_t.grid(), posterior.apply(noisy));
}

namespace detail {

inline void guard_bins(std::size_t n, std::size_t max_bins, const char* what) {
  if (n > max_bins) {
    throw NumericalError(std::string(what) + ": " + std::to_string(n) + " bins exceeds guard of " +
                         std::to_string(max_bins));
  }
}

}  // namespace detail

/// Composed sampling kernel posterior * kernel (O(N^3)).
inline TransitionKernel materialize_sampling_kernel(const PosteriorKernel& posterior,
                                                    const TransitionKernel& kernel,
                                                    std::size_t max_bins = kDefaultMaxDenseBins) {
  require_same_grid(kernel.grid(), posterior.matrix.grid(), "materialize_sampling_kernel");
  const std::size_t n = kernel.size();
  detail::guard_bins(n, max_bins, "materialize_sampling_kernel");
  std::vector<double> m;
  m.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto col = posterior.matrix.apply(kernel.column(i));
    m.insert(m.end(), col.begin(), col.end());
  }
  return TransitionKernel(kernel.grid(), std::move(m));
}

/// max over (i, j) of |K(j|i) dist(i) - K(i|j) dist(j)|.
inline double detailed_balance_residual(const TransitionKernel& kernel, const Distribution& dist) {
  require_same_grid(kernel.grid(), dist.grid(), "detailed_balance_residual");
  const std::size_t n = kernel.size();
  double r = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      r = std::max(r, std::abs(kernel(j, i) * dist[i] - kernel(i, j) * dist[j]));
    }
  }
  return r;
}

/// Detailed-balance residual of the composed sampling kernel restricted to
/// pairs (i, j) with i in `probes`; O(|probes| N^2) and needs no N x N
/// product.
inline double detailed_balance_probe(const PosteriorOperator& posterior, const Distribution& prior,
                                     std::span<const BinIndex> probes) {
  require_same_grid(posterior.kernel().grid(), prior.grid(), "detailed_balance_probe");
  double r = 0.0;
  for (BinIndex b : probes) {
    const std::size_t i = b.value;
    const auto column = posterior.apply(posterior.kernel().column(i));  // P_s(. | i)
    const auto row = posterior.sampling_row(i);                          // P_s(i | .)
    for (std::size_t j = 0; j < column.size(); ++j) {
      r = std::max(r, std::abs(column[j] * prior[i] - row[j] * prior[j]));
    }
  }
  return r;
}

/// Forward process plus the dense exact posterior of every step.
class ReverseSampler {
 public:
  ReverseSampler(ForwardProcess forward, std::vector<PosteriorKernel> posteriors)
      : forward_(std::move(forward)), posteriors_(std::move(posteriors)) {
    if (posteriors_.size() != forward_.steps()) {
      throw std::invalid_argument("reverse sampler: need one posterior per step");
    }
  }

  const ForwardProcess& forward() const noexcept { return forward_; }
  const std::vector<PosteriorKernel>& posteriors() const noexcept { return posteriors_; }
  const PosteriorKernel& posterior(std::size_t t) const { return posteriors_.at(t - 1); }

 private:
  ForwardProcess forward_;
  std::vector<PosteriorKernel> posteriors_;
};

inline ReverseSampler make_reverse_sampler(const ForwardProcess& forward,
                                           std::size_t max_bins = kDefaultMaxDenseBins) {
  detail::guard_bins(forward.grid().size(), max_bins, "make_reverse_sampler");
  std::vector<PosteriorKernel> posts;
  posts.reserve(forward.steps());
  for (std::size_t t = 1; t <= forward.steps(); ++t) {
    posts.push_back(exact_posterior(*forward.kernels().step(t), forward.marginal(t - 1), t));
  }
  return ReverseSampler(forward, std::move(posts));
}

/// p_s(x_0): start from q_n and apply the sampling step for t = T..1.
inline Distribution reverse_distribution(const ReverseSampler& sampler) {
  const ForwardProcess& fwd = sampler.forward();
  Distribution d = fwd.noise();
  for (std::size_t t = fwd.steps(); t >= 1; --t) {
    d = sampling_step(sampler.posterior(t), *fwd.kernels().step(t), d);
  }
  return d;
}

/// Matrix-free reverse pass. Entry k is the reverse-process distribution over
/// x_k; entry T is q_n and entry 0 is p_s(x_0).
inline std::vector<Distribution> reverse_marginals(const ForwardProcess& forward) {
  const std::size_t steps = forward.steps();
  std::vector<Distribution> out(steps + 1, forward.noise());
  for (std::size_t t = steps; t >= 1; --t) {
    PosteriorOperator post(forward.kernels().step(t), forward.marginal(t - 1), t);
    out[t - 1] = sampling_step(post, out[t]);
  }
  return out;
}

inline Distribution reverse_distribution(const ForwardProcess& forward) {
  return reverse_marginals(forward).front();
}

/// One Monte-Carlo path of the reverse process, with the noisy latents.
struct ReverseTrajectory {
  std::vector<BinIndex> states;    // x_T, ..., x_0
  std::vector<BinIndex> percepts;  // x_hat_T, ..., x_hat_1
};

/// Column CDFs of every step kernel and posterior, for repeated sampling.
class ReverseTrajectorySampler {
 public:
  explicit ReverseTrajectorySampler(const ReverseSampler& sampler)
      : noise_(sampler.forward().noise().mass()) {
    const auto& fwd = sampler.forward();
    const std::size_t n = fwd.grid().size();
    noise_kernels_.resize(fwd.steps());
    posteriors_.resize(fwd.steps());
    for (std::size_t t = 1; t <= fwd.steps(); ++t) {
      const auto k = fwd.kernels().step(t);
      const auto& p = sampler.posterior(t).matrix;
      noise_kernels_[t - 1].reserve(n);
      posteriors_[t - 1].reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        noise_kernels_[t - 1].emplace_back(k->column(i));
        posteriors_[t - 1].emplace_back(p.column(i));
      }
    }
  }

  ReverseTrajectory sample_verbose(std::uint64_t seed) const {
    Rng rng(seed);
    ReverseTrajectory tr;
    const std::size_t steps = posteriors_.size();
    tr.states.reserve(steps + 1);
    tr.percepts.reserve(steps);
    std::size_t x = noise_.sample(rng);
    tr.states.push_back(BinIndex{x});
    for (std::size_t t = steps; t >= 1; --t) {
      const std::size_t noisy = noise_kernels_[t - 1][x].sample(rng);
      x = posteriors_[t - 1][noisy].sample(rng);
      tr.percepts.push_back(BinIndex{noisy});
      tr.states.push_back(BinIndex{x});
    }
    return tr;
  }

  std::vector<BinIndex> sample(std::uint64_t seed) const { return sample_verbose(seed).states; }

 private:
  CdfTable noise_;
  std::vector<std::vector<CdfTable>> noise_kernels_;
  std::vector<std::vector<CdfTable>> posteriors_;
};

/// Single trajectory [x_T, ..., x_0]. For many trajectories build a
/// ReverseTrajectorySampler once instead.
inline std::vector<BinIndex> sample_reverse_trajectory(const ReverseSampler& sampler,
                                                       std::uint64_t seed) {
  return ReverseTrajectorySampler(sampler).sample(seed);
}

/// Both forms of the variational bound, in nats.
struct BoundReport {
  double k_direct{};
  double k_kl_form{};
  double c_q{};
  double h_qn{};
  std::vector<double> per_step_kl;
};

/// Evaluates the bound for arbitrary reverse kernels; reverse_kernels[t-1]
/// column j is a distribution over x_{t-1} given x_t = j.
inline BoundReport variational_bound_report(const ForwardProcess& forward,
                                            std::span<const TransitionKernel> reverse_kernels,
                                            std::size_t max_bins = kDefaultMaxDenseBins) {
  const std::size_t steps = forward.steps();
  const std::size_t n = forward.grid().size();
  detail::guard_bins(n, max_bins, "variational_bound_report");
  if (reverse_kernels.size() != steps) {
    throw std::invalid_argument("variational_bound_report: need one reverse kernel per step");
  }
  BoundReport rep;
  rep.h_qn = entropy(forward.noise());
  rep.per_step_kl.assign(steps, 0.0);
  double direct = 0.0;
  double cq = 0.0;
  std::vector<double> evidence(n);
  for (std::size_t t = 1; t <= steps; ++t) {
    const auto kernel = forward.kernels().step(t);
    const TransitionKernel& p = reverse_kernels[t - 1];
    require_same_grid(forward.grid(), p.grid(), "variational_bound_report");
    const Distribution& prev = forward.marginal(t - 1);
    const Distribution& cur = forward.marginal(t);
    std::fill(evidence.begin(), evidence.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) evidence[j] += (*kernel)(j, i) * prev[i];
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double fwd = (*kernel)(j, i);
        const double w = fwd * prev[i];  // joint q(x_{t-1} = i, x_t = j)
        if (w == 0.0) continue;
        const double rev = p(i, j);
        if (!(rev > 0.0)) {
          throw NumericalError("variational bound: step " + std::to_string(t) +
                               " reverse kernel is zero for x_{t-1}=" + std::to_string(i) +
                               " given x_t=" + std::to_string(j));
        }
        const double post = w / evidence[j];
        direct += w * std::log(rev / fwd);
        cq += w * std::log(prev[i] / cur[j]);
        kl += w * std::log(post / rev);
      }
    }
    rep.per_step_kl[t - 1] = kl;
  }
  rep.k_direct = direct - rep.h_qn;
  rep.c_q = cq - rep.h_qn;
  double kl_sum = 0.0;
  for (double v : rep.per_step_kl) kl_sum += v;
  rep.k_kl_form = -kl_sum + rep.c_q;
  return rep;
}

/// Residual of q_{t-1} under its own step kernel, for t = 1..T.
inline std::vector<double> approximate_stationarity_profile(const ForwardProcess& forward) {
  std::vector<double> out;
  out.reserve(forward.steps());
  for (std::size_t t = 1; t <= forward.steps(); ++t) {
    out.push_back(stationarity_residual(*forward.kernels().step(t), forward.marginal(t - 1)));
  }
  return out;
}

}  // namespace sdl
