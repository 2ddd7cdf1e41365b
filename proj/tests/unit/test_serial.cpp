#include <gtest/gtest.h>

#include <vector>

#include "sdl/metrics.hpp"
#include "sdl/serial.hpp"

using namespace sdl;

namespace {

SerialChainConfig make_config(Distribution prior, TransitionKernel likelihood, std::size_t steps,
                              std::size_t burn_in = 0, std::uint64_t seed = 0) {
  return SerialChainConfig{std::move(prior), std::move(likelihood), steps, burn_in, seed,
                           std::nullopt, true};
}

// 2x2 torus walked as the 4-cycle 0 -> 1 -> 3 -> 2 -> 0.
TransitionKernel ring_kernel(const GridSpec& g, double stay, double fwd, double back) {
  const std::size_t ring[4] = {0, 1, 3, 2};
  std::vector<double> m(16, 0.0);
  for (std::size_t p = 0; p < 4; ++p) {
    m[ring[p] * 4 + ring[p]] = stay;
    m[ring[p] * 4 + ring[(p + 1) % 4]] = fwd;
    m[ring[p] * 4 + ring[(p + 3) % 4]] = back;
  }
  return TransitionKernel(g, m);
}

Distribution two_blobs(const GridSpec& g) {
  return gaussian_mixture_distribution(
      g, std::vector<MixtureComponent>{{{-0.2, -0.2}, 0.12, 1}, {{0.2, 0.2}, 0.12, 1}});
}

}  // namespace

TEST(SerialStep, NoiselessAgentRepeatsStimulus) {
  const GridSpec g = make_grid(4, 4);
  auto cfg = make_config(uniform_distribution(g), identity_kernel(g), 10);
  cfg.require_ergodic = false;
  const SerialChain chain(cfg);
  Rng rng(1);
  for (std::size_t x = 0; x < 16; ++x) {
    const SerialStep s = serial_step(chain, BinIndex{x}, rng);
    EXPECT_EQ(s.percept.value, x);
    EXPECT_EQ(s.next.value, x);
  }
}

TEST(SerialStep, DogmaticPriorAlwaysReturnsItsBin) {
  const GridSpec g = make_grid(5, 5);
  const SerialChain chain(make_config(point_mass(g, BinIndex{7}), gaussian_kernel(g, 0.1), 10));
  Rng rng(2);
  for (std::size_t k = 0; k < 200; ++k) {
    EXPECT_EQ(chain.step(BinIndex{k % 25}, rng).next.value, 7u);
  }
}

TEST(SerialKernel, RingMatchesPerceptSum) {
  const GridSpec g = make_grid(2, 2);
  const TransitionKernel like = ring_kernel(g, 0.6, 0.3, 0.1);
  const Distribution prior(g, {0.1, 0.4, 0.2, 0.3});
  const TransitionKernel k = serial_kernel(make_config(prior, like, 10));
  for (std::size_t from = 0; from < 4; ++from) {
    for (std::size_t to = 0; to < 4; ++to) {
      double want = 0;
      for (std::size_t y = 0; y < 4; ++y) {
        double z = 0;
        for (std::size_t x = 0; x < 4; ++x) z += like(y, x) * prior[x];
        want += like(y, to) * prior[to] / z * like(y, from);
      }
      EXPECT_NEAR(k(to, from), want, 1e-14);
    }
  }
}

TEST(SerialKernel, IdentityLikelihood) {
  const GridSpec g = make_grid(3, 3);
  auto cfg = make_config(two_blobs(g), identity_kernel(g), 10);
  cfg.require_ergodic = false;
  const TransitionKernel k = serial_kernel(cfg);
  for (std::size_t e = 0; e < 81; ++e) EXPECT_EQ(k.data()[e], identity_kernel(g).data()[e]);
}

TEST(SerialKernel, FlatPriorSymmetricLikelihood) {
  const GridSpec g = make_grid(2, 2);
  const TransitionKernel like = ring_kernel(g, 0.5, 0.25, 0.25);
  const TransitionKernel k = serial_kernel(make_config(uniform_distribution(g), like, 10));
  // symmetric, doubly stochastic L: L~ = L^T, so K = L^T L
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double want = 0;
      for (std::size_t y = 0; y < 4; ++y) want += like(y, j) * like(y, i);
      EXPECT_NEAR(k(j, i), want, 1e-15);
    }
  }
  // opposite corners of the ring: reached only through two half-steps of 0.25
  EXPECT_NEAR(k(3, 0), 2 * 0.25 * 0.25, 1e-15);
}

TEST(SerialKernel, DetailedBalanceForRandomPairs) {
  Rng rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t nx = 3 + trial * 2, ny = 12 - trial;
    const GridSpec g = make_grid(nx, ny);
    std::vector<double> w(g.size());
    for (double& v : w) v = uniform01(rng) < 0.2 ? 0.0 : uniform01(rng);
    const Distribution prior(g, w);
    const TransitionKernel like = trial % 2 == 0 ? gaussian_kernel(g, 0.05 + 0.1 * uniform01(rng))
                                                 : bimodal_kernel(g, 0.07, 0.08);
    const TransitionKernel k = serial_kernel(make_config(prior, like, 10));
    EXPECT_LT(detailed_balance_residual(k, prior), 1e-10) << "trial " << trial;
  }
}

TEST(Ergodicity, DetectsDisconnectedChains) {
  const GridSpec g = make_grid(3, 3);
  EXPECT_FALSE(is_ergodic(uniform_distribution(g), identity_kernel(g)));
  EXPECT_TRUE(is_ergodic(point_mass(g, BinIndex{4}), identity_kernel(g)));
  EXPECT_TRUE(is_ergodic(uniform_distribution(g), gaussian_kernel(g, 0.1)));
  EXPECT_THROW(SerialChain(make_config(uniform_distribution(g), identity_kernel(g), 10)),
               std::invalid_argument);
}

TEST(Ergodicity, ValidatesConfig) {
  const GridSpec g = make_grid(3, 3);
  EXPECT_THROW(validate(make_config(uniform_distribution(g), gaussian_kernel(g, 0.1), 5, 5)),
               std::invalid_argument);
  auto cfg = make_config(uniform_distribution(g), gaussian_kernel(g, 0.1), 5);
  cfg.start = BinIndex{9};
  EXPECT_THROW(validate(cfg), std::out_of_range);
  EXPECT_THROW(validate(make_config(uniform_distribution(g),
                                    gaussian_kernel(make_grid(4, 4), 0.1), 5)),
               std::invalid_argument);
}

TEST(RunChain, NoiselessChainStaysPut) {
  const GridSpec g = make_grid(4, 4);
  auto cfg = make_config(uniform_distribution(g), identity_kernel(g), 50);
  cfg.require_ergodic = false;
  cfg.start = BinIndex{6};
  const ChainTrace tr = run_chain(cfg);
  ASSERT_EQ(tr.states.size(), 51u);
  ASSERT_EQ(tr.percepts.size(), 50u);
  for (const auto& s : tr.states) EXPECT_EQ(s.value, 6u);
}

TEST(RunChain, SeedDeterminism) {
  const GridSpec g = make_grid(6, 6);
  const auto cfg = make_config(two_blobs(g), gaussian_kernel(g, 0.1), 2000, 0, 77);
  const ChainTrace a = run_chain(cfg);
  const ChainTrace b = run_chain(cfg);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.percepts, b.percepts);
  auto other = cfg;
  other.seed = 78;
  EXPECT_NE(run_chain(other).states, a.states);
}

TEST(RunChain, LongRunMatchesPrior) {
  const GridSpec g = make_grid(9, 9);
  const Distribution prior = two_blobs(g);
  const auto cfg = make_config(prior, gaussian_kernel(g, 0.1), 1000000, 1000, 12345);
  const ChainTrace tr = run_chain(cfg);
  EXPECT_LT(total_variation(empirical_distribution(g, tr, cfg.burn_in), prior), 0.02);
}

TEST(EmpiricalDistribution, Counting) {
  const GridSpec g = make_grid(2, 2);
  ChainTrace constant;
  constant.states.assign(9, BinIndex{2});
  EXPECT_EQ(empirical_distribution(g, constant, 0), point_mass(g, BinIndex{2}));

  ChainTrace alt;
  for (int s = 0; s < 10; ++s) alt.states.push_back(BinIndex{static_cast<std::size_t>(s % 2)});
  const Distribution half = empirical_distribution(g, alt, 0);
  EXPECT_EQ(half[0], 0.5);
  EXPECT_EQ(half[1], 0.5);

  // 0 1 1 3 3 3 2 0 1 3 3, burn-in 1 drops the first state
  ChainTrace ten;
  for (std::size_t v : {0, 1, 1, 3, 3, 3, 2, 0, 1, 3, 3}) ten.states.push_back(BinIndex{v});
  const Distribution d = empirical_distribution(g, ten, 1);
  EXPECT_DOUBLE_EQ(d[0], 0.1);
  EXPECT_DOUBLE_EQ(d[1], 0.3);
  EXPECT_DOUBLE_EQ(d[2], 0.1);
  EXPECT_DOUBLE_EQ(d[3], 0.5);
  EXPECT_THROW(empirical_distribution(g, ten, 11), std::invalid_argument);
}
