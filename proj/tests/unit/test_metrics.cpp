#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sdl/metrics.hpp"

using namespace sdl;

namespace {

const GridSpec kPair = make_grid(2, 2);

Distribution pair(double a, double b) { return Distribution(kPair, {a, b, 0, 0}); }

ForwardProcess gaussian_forward(const GridSpec& g, const Distribution& q0, double a, double b,
                                std::size_t steps) {
  NoiseSpec spec{linear_schedule(a, b, steps), 0.07, std::nullopt, std::nullopt};
  return forward_marginals(q0, KernelSequence::from_noise(g, spec, false),
                           stationary_noise(g, spec));
}

}  // namespace

TEST(KlDivergence, SelfIsZero) {
  const GridSpec g = make_grid(9, 9);
  const Distribution p = swiss_roll_distribution(g, SwissRollParams{1, 0.05, 0.4, 0.05, 256});
  EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-12);
}

TEST(KlDivergence, TwoPointClosedForm) {
  const GridSpec g = make_grid(2, 2);
  const Distribution p(g, {0.5, 0.5, 0, 0});
  const Distribution q(g, {0.25, 0.75, 0, 0});
  const double want = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  EXPECT_NEAR(want, 0.14384103622589045, 1e-15);
  EXPECT_NEAR(kl_divergence(p, q), want, 1e-10);
}

TEST(KlDivergence, PointMassAgainstUniform) {
  const GridSpec g = make_grid(41, 41);
  const double kl = kl_divergence(point_mass(g, BinIndex{100}), uniform_distribution(g));
  EXPECT_NEAR(kl, std::log(1681.0), 1e-6);
}

TEST(KlDivergence, FloorKeepsDisjointSupportsFinite) {
  const double kl = kl_divergence(pair(1, 0), pair(0, 1));
  EXPECT_TRUE(std::isfinite(kl));
  EXPECT_GT(kl, 20.0);
  EXPECT_THROW(kl_divergence(pair(1, 1), pair(1, 1), MetricOptions{0.0}), std::invalid_argument);
  EXPECT_THROW(kl_divergence(pair(1, 1), pair(1, 1), MetricOptions{1e-3}), std::invalid_argument);
  EXPECT_THROW(kl_divergence(pair(1, 1), uniform_distribution(make_grid(3, 3))),
               std::invalid_argument);
}

TEST(TotalVariation, Basics) {
  EXPECT_EQ(total_variation(pair(1, 3), pair(1, 3)), 0.0);
  const GridSpec g = make_grid(3, 3);
  EXPECT_EQ(total_variation(point_mass(g, BinIndex{1}), point_mass(g, BinIndex{7})), 1.0);
  EXPECT_NEAR(total_variation(pair(0.5, 0.5), pair(0.25, 0.75)), 0.25, 1e-16);
}

TEST(ReconstructionError, ZeroWhenDataIsRecovered) {
  const GridSpec g = make_grid(5, 5);
  const Distribution q0 = swiss_roll_distribution(g, SwissRollParams{1, 0.05, 0.4, 0.05, 256});
  const ForwardProcess fwd = gaussian_forward(g, q0, 0.03, 0.04, 3);
  EXPECT_NEAR(reconstruction_error(fwd, q0), 0.0, 1e-10);
}

TEST(ReconstructionError, AbruptFullFadeIsExact) {
  const GridSpec g = make_grid(9, 9);
  const Distribution q0 = swiss_roll_distribution(g, SwissRollParams{1, 0.05, 0.4, 0.05, 256});
  NoiseSpec spec{linear_schedule(0.01, 0.99, 1, NoiseFamily::fade), 0.07, std::nullopt,
                 uniform_distribution(g)};
  const ForwardProcess fwd = forward_marginals(q0, KernelSequence::from_noise(g, spec, true),
                                               stationary_noise(g, spec));
  EXPECT_NEAR(reconstruction_error(fwd, reverse_distribution(fwd)), 0.0, 1e-10);
  EXPECT_NEAR(inversion_complexity(fwd), kl_divergence(uniform_distribution(g), q0), 1e-12);
}

TEST(ReconstructionError, MoreStepsHelp) {
  const GridSpec g = make_grid(41, 41);
  const Distribution q0 = swiss_roll_distribution(g);
  const ForwardProcess short_run = gaussian_forward(g, q0, 0.01, 0.04, 2);
  const ForwardProcess long_run = gaussian_forward(g, q0, 0.01, 0.04, 80);
  EXPECT_GT(reconstruction_error(short_run, reverse_distribution(short_run)),
            reconstruction_error(long_run, reverse_distribution(long_run)));
}

TEST(InversionComplexity, IdentityChainIsZero) {
  const GridSpec g = make_grid(4, 4);
  const ForwardProcess fwd = forward_marginals(
      uniform_distribution(g), KernelSequence(std::vector<TransitionKernel>(3, identity_kernel(g))));
  EXPECT_NEAR(inversion_complexity(fwd), 0.0, 1e-12);
}

TEST(InversionComplexity, DecreasesWithSteps) {
  const GridSpec g = make_grid(41, 41);
  const Distribution q0 = swiss_roll_distribution(g);
  double prev = INFINITY;
  for (std::size_t steps : {5, 10, 20, 40}) {
    const double c = inversion_complexity(gaussian_forward(g, q0, 0.01, 0.04, steps));
    EXPECT_LT(c, prev) << "T = " << steps;
    prev = c;
  }
}
