#pragma once

// Serial reproduction: a chain of identical Bayesian agents, each encoding
// the stimulus it receives as a noisy percept and reproducing a new stimulus
// by sampling its posterior. The prior satisfies detailed balance under the
// resulting chain, whatever the likelihood.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdl/diffusion.hpp"
#include "sdl/grid.hpp"
#include "sdl/kernels.hpp"
#include "sdl/random.hpp"

namespace sdl {

inline constexpr double kSupportThreshold = 1e-12;

struct SerialChainConfig {
  Distribution prior;
  TransitionKernel likelihood;  // column x: distribution of the percept given x
  std::size_t n_steps{0};
  std::size_t burn_in{0};
  std::uint64_t seed{0};
  /// Start bin; drawn uniformly from the seeded stream when empty.
  std::optional<BinIndex> start;
  /// Noiseless or disconnected likelihoods are legal for demos; they simply
  /// do not converge to the prior.
  bool require_ergodic{true};
};

/// Whether the serial chain can move between any two bins carrying prior
/// mass. States i and k communicate through percept j when both
/// likelihood(j|i) and likelihood(j|k) exceed the support threshold; the
/// relation is symmetric, so one flood fill decides strong connectivity.
inline bool is_ergodic(const Distribution& prior, const TransitionKernel& likelihood,
                       double threshold = kSupportThreshold) {
  require_same_grid(prior.grid(), likelihood.grid(), "is_ergodic");
  const std::size_t n = prior.size();
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < n; ++i) {
    if (prior[i] > threshold) support.push_back(i);
  }
  if (support.size() <= 1) return true;
  std::vector<char> seen_state(n, 0), seen_percept(n, 0);
  std::vector<std::size_t> stack{support.front()};
  seen_state[support.front()] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < n; ++j) {
      if (seen_percept[j] || likelihood(j, i) <= threshold) continue;
      seen_percept[j] = 1;
      for (std::size_t k : support) {
        if (!seen_state[k] && likelihood(j, k) > threshold) {
          seen_state[k] = 1;
          ++reached;
          stack.push_back(k);
        }
      }
    }
  }
  return reached == support.size();
}

inline void validate(const SerialChainConfig& c) {
  require_same_grid(c.prior.grid(), c.likelihood.grid(), "serial chain config");
  if (!(c.n_steps > c.burn_in)) {
    throw std::invalid_argument("serial chain config: need n_steps > burn_in");
  }
  if (c.start && c.start->value >= c.prior.size()) {
    throw std::out_of_range("serial chain config: start bin outside grid");
  }
  if (c.require_ergodic && !is_ergodic(c.prior, c.likelihood)) {
    throw std::invalid_argument(
        "serial chain config: likelihood does not connect the prior's support");
  }
}

struct SerialStep {
  BinIndex next;
  BinIndex percept;
};

/// Precomputed posterior and sampling tables for one serial-reproduction
/// configuration. All agents share the same prior and likelihood.
class SerialChain {
 public:
  explicit SerialChain(SerialChainConfig config)
      : config_((validate(config), std::move(config))),
        posterior_(exact_posterior(config_.likelihood, config_.prior)) {
    const std::size_t n = config_.prior.size();
    encode_.reserve(n);
    decode_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      encode_.emplace_back(config_.likelihood.column(i));
      decode_.emplace_back(posterior_.matrix.column(i));
    }
  }

  const SerialChainConfig& config() const noexcept { return config_; }
  const PosteriorKernel& posterior() const noexcept { return posterior_; }

  /// Encode x into a percept, then decode by sampling the posterior.
  SerialStep step(BinIndex x, Rng& rng) const {
    const std::size_t percept = encode_.at(x.value).sample(rng);
    const std::size_t next = decode_[percept].sample(rng);
    return {BinIndex{next}, BinIndex{percept}};
  }

 private:
  SerialChainConfig config_;
  PosteriorKernel posterior_;
  std::vector<CdfTable> encode_;
  std::vector<CdfTable> decode_;
};

inline SerialStep serial_step(const SerialChain& chain, BinIndex x, Rng& rng) {
  return chain.step(x, rng);
}

/// K(x'|x) = sum over percepts of posterior(x'|percept) likelihood(percept|x).
inline TransitionKernel serial_kernel(const SerialChainConfig& config,
                                      std::size_t max_bins = kDefaultMaxDenseBins) {
  validate(config);
  detail::guard_bins(config.prior.size(), max_bins, "serial_kernel");
  const auto post = exact_posterior(config.likelihood, config.prior);
  return materialize_sampling_kernel(post, config.likelihood, max_bins);
}

struct ChainTrace {
  std::vector<BinIndex> states;    // x_0 .. x_n
  std::vector<BinIndex> percepts;  // x_hat_0 .. x_hat_{n-1}
};

inline ChainTrace run_chain(const SerialChain& chain) {
  const SerialChainConfig& c = chain.config();
  Rng rng(c.seed);
  ChainTrace trace;
  trace.states.reserve(c.n_steps + 1);
  trace.percepts.reserve(c.n_steps);
  BinIndex x = c.start ? *c.start
                       : BinIndex{static_cast<std::size_t>(
                             uniform01(rng) * static_cast<double>(c.prior.size()))};
  trace.states.push_back(x);
  for (std::size_t s = 0; s < c.n_steps; ++s) {
    const SerialStep st = chain.step(x, rng);
    trace.percepts.push_back(st.percept);
    trace.states.push_back(st.next);
    x = st.next;
  }
  return trace;
}

inline ChainTrace run_chain(const SerialChainConfig& config) {
  return run_chain(SerialChain(config));
}

/// Normalized histogram of trace.states[burn_in:].
inline Distribution empirical_distribution(const GridSpec& grid, const ChainTrace& trace,
                                           std::size_t burn_in) {
  if (burn_in >= trace.states.size()) {
    throw std::invalid_argument("empirical_distribution: nothing left after burn-in");
  }
  std::vector<double> counts(grid.size(), 0.0);
  for (std::size_t s = burn_in; s < trace.states.size(); ++s) counts.at(trace.states[s].value) += 1.0;
  return Distribution(grid, std::move(counts));
}

}  // namespace sdl
