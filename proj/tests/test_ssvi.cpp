#include "irv/ssvi.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "irv/core.hpp"
#include "irv/errors.hpp"
#include "irv/sde_engine.hpp"
#include "irv/static_arb.hpp"

namespace {

using irv::frak_B;
using irv::frak_B_inverse;
using irv::ssvi_master_coefficients;
using irv::ssvi_omega;
using irv::ssvi_simulate;
using irv::ssvi_snapshot;
using irv::ssvi_theta_drift_diffusion;
using irv::SsviParams;
using irv::SsviStopReason;

// ---------------------------------------------------------------------------
// Parameters and smile map
// ---------------------------------------------------------------------------

TEST(SsviParams, RejectsBadInputs) {
  EXPECT_NO_THROW(SsviParams(2.0, 0.5, 1.0));
  EXPECT_NO_THROW(SsviParams(0.0, 0.5, 1.0));
  EXPECT_THROW(SsviParams(-0.1, 0.5, 1.0), irv::config_error);
  EXPECT_THROW(SsviParams(2.0, 0.0, 1.0), irv::config_error);
  EXPECT_THROW(SsviParams(2.0, -1.0, 1.0), irv::config_error);
  EXPECT_THROW(SsviParams(2.0, 0.5, 0.0), irv::config_error);
  EXPECT_THROW(SsviParams(NAN, 0.5, 1.0), irv::config_error);
}

TEST(SsviOmega, FlatSmileAtZeroPsi) {
  for (double k : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
    const auto pt = ssvi_omega(1.0, 0.0, k);
    EXPECT_EQ(pt.omega, 1.0);
    EXPECT_EQ(pt.big_a, 1.0);
  }
}

TEST(SsviOmega, AnchorAndFrozenValues) {
  const auto atm = ssvi_omega(1.0, 2.0, 0.0);
  EXPECT_EQ(atm.big_a, 1.0);
  EXPECT_EQ(atm.omega, 1.0);  // omega equals theta exactly at the money
  const auto wing = ssvi_omega(1.0, 2.0, 1.0);
  EXPECT_NEAR(wing.big_a, std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(wing.omega, 1.6180339887498948, 1e-15);
  const auto gen = ssvi_omega(0.7, 1.3, -0.4);
  EXPECT_NEAR(gen.omega, 0.78600458713183282, 1e-15);
}

TEST(SsviOmega, RejectsBadInputs) {
  EXPECT_THROW(ssvi_omega(0.0, 2.0, 0.1), irv::domain_error);
  EXPECT_THROW(ssvi_omega(-1.0, 2.0, 0.1), irv::domain_error);
  EXPECT_THROW(ssvi_omega(1.0, -2.0, 0.1), irv::domain_error);
  EXPECT_THROW(ssvi_omega(1.0, 2.0, NAN), irv::domain_error);
}

TEST(SsviOmega, SymmetryAndMonotoneWings) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> theta_d(0.01, 10.0);
  std::uniform_real_distribution<double> psi_d(0.0, 4.0);
  std::uniform_real_distribution<double> k_d(0.0, 3.0);
  for (int it = 0; it < 2000; ++it) {
    const double theta = theta_d(gen);
    const double psi = psi_d(gen);
    const double k = k_d(gen);
    const auto plus = ssvi_omega(theta, psi, k);
    const auto minus = ssvi_omega(theta, psi, -k);
    ASSERT_EQ(plus.omega, minus.omega);
    ASSERT_GE(plus.omega, theta);
    if (psi * k == 0.0)
      ASSERT_EQ(plus.omega, theta);
    else
      ASSERT_GT(plus.omega, theta);
  }
  // Strictly increasing in |k| for psi > 0.
  double prev = ssvi_omega(0.5, 1.5, 0.0).omega;
  for (int i = 1; i <= 60; ++i) {
    const double cur = ssvi_omega(0.5, 1.5, 0.05 * i).omega;
    ASSERT_GT(cur, prev);
    prev = cur;
  }
}

// ---------------------------------------------------------------------------
// Theta dynamics and master coefficients
// ---------------------------------------------------------------------------

TEST(SsviTheta, DriftAndLoading) {
  const auto at4 = ssvi_theta_drift_diffusion(4.0);
  EXPECT_EQ(at4.drift_per_sigma2, 0.0);
  EXPECT_EQ(at4.z_loading_per_sigma, -4.0);
  const auto at0 = ssvi_theta_drift_diffusion(0.0);
  EXPECT_EQ(at0.drift_per_sigma2, -1.0);
  EXPECT_EQ(at0.z_loading_per_sigma, 0.0);
  const auto at2 = ssvi_theta_drift_diffusion(2.0);
  EXPECT_EQ(at2.drift_per_sigma2, -0.75);
  EXPECT_EQ(at2.z_loading_per_sigma, -2.0);
}

TEST(SsviCoefficients, BlackScholesReductionAndAnchor) {
  const auto flat = ssvi_master_coefficients(ssvi_omega(0.7, 0.0, 1.2), 0.0);
  EXPECT_EQ(flat.a, -1.0);
  EXPECT_EQ(flat.b, 0.0);
  EXPECT_EQ(flat.c, 0.0);
  const auto atm = ssvi_master_coefficients(ssvi_omega(1.0, 2.0, 0.0), 2.0);
  EXPECT_EQ(atm.a, 0.25);
  EXPECT_EQ(atm.b, -2.0);
  EXPECT_EQ(atm.c, 0.0);
}

TEST(SsviCoefficients, FrozenGenericPoint) {
  const auto co = ssvi_master_coefficients(ssvi_omega(0.7, 1.3, -0.4), 1.3);
  EXPECT_NEAR(co.a, -0.51545656385505503, 1e-14);
  EXPECT_NEAR(co.b, -1.4908100033439839, 1e-14);
  EXPECT_NEAR(co.c, 0.49314038011386786, 1e-14);
}

TEST(SsviCoefficients, RejectsDegeneratePoint) {
  irv::SsviSmilePoint bad{0.0, 0.1, 0.0, 0.0};
  EXPECT_THROW(ssvi_master_coefficients(bad, 1.0), irv::domain_error);
}

TEST(SsviCoefficients, NoDriftResidualSweep) {
  std::mt19937_64 gen(20240819);
  std::uniform_real_distribution<double> theta_d(0.01, 10.0);
  std::uniform_real_distribution<double> psi_d(0.0, 4.0);
  std::uniform_real_distribution<double> k_d(-3.0, 3.0);
  double worst = 0.0;
  for (int it = 0; it < 10000; ++it) {
    const double theta = theta_d(gen);
    const double psi = psi_d(gen);
    const double k = k_d(gen);
    const auto pt = ssvi_omega(theta, psi, k);
    const auto co = ssvi_master_coefficients(pt, psi);
    const double ref = irv::no_drift_a(co.b, co.c, pt.omega, k);
    const double rel =
        std::fabs(co.a - ref) / std::max(1.0, std::fabs(co.a));
    worst = std::max(worst, rel);
    ASSERT_LE(rel, 1e-12) << "theta " << theta << " psi " << psi << " k "
                          << k;
  }
  EXPECT_LE(worst, 1e-12);
}

// ---------------------------------------------------------------------------
// frak_B and its inverse
// ---------------------------------------------------------------------------

TEST(FrakB, ConstantBranchAndZero) {
  EXPECT_EQ(frak_B(4.0), 16.0);
  EXPECT_EQ(frak_B(5.0), 16.0);
  EXPECT_EQ(frak_B(10.0), 16.0);
  EXPECT_EQ(frak_B(0.0), 0.0);
  EXPECT_NEAR(frak_B(4.0 - 1e-9), 16.0, 1e-6);
  EXPECT_THROW(frak_B(-0.5), irv::domain_error);
  EXPECT_THROW(frak_B(NAN), irv::domain_error);
}

TEST(FrakB, FrozenValues) {
  EXPECT_NEAR(frak_B(1.0), 10.835161214667248, 1e-13);
  EXPECT_NEAR(frak_B(2.0), 14.3955292956091, 1e-13);
  EXPECT_NEAR(frak_B(3.5), 15.931018711470673, 1e-13);
}

TEST(FrakB, MonotoneOnDenseGrid) {
  double prev = frak_B(0.0);
  const int n = 100000;
  for (int i = 1; i < n; ++i) {
    const double theta = 4.0 * i / n;
    const double cur = frak_B(theta);
    ASSERT_GE(cur, prev) << "theta " << theta;
    prev = cur;
  }
  ASSERT_LE(prev, 16.0);
}

TEST(FrakBInverse, FrozenValuesAndDomain) {
  EXPECT_EQ(frak_B_inverse(0.0), 0.0);
  EXPECT_NEAR(frak_B_inverse(4.0), 0.24061542103298537, 1e-11);
  EXPECT_NEAR(frak_B_inverse(15.9), 3.4040235755444641, 1e-11);
  EXPECT_NEAR(frak_B_inverse(0.5), 0.025765503509280846, 1e-11);
  EXPECT_NEAR(frak_B_inverse(frak_B(2.0)), 2.0, 1e-9);
  EXPECT_THROW(frak_B_inverse(-0.1), irv::domain_error);
  EXPECT_THROW(frak_B_inverse(16.0), irv::domain_error);
  EXPECT_THROW(frak_B_inverse(17.0), irv::domain_error);
  EXPECT_THROW(frak_B_inverse(NAN), irv::domain_error);
}

TEST(FrakBInverse, RoundTripGrid) {
  std::vector<double> xs;
  for (double x = 0.0; x <= 15.5; x += 0.5) xs.push_back(x);
  xs.push_back(15.99);
  for (double x : xs) {
    const double theta = frak_B_inverse(x);
    ASSERT_GE(theta, 0.0);
    ASSERT_LT(theta, 4.0);
    ASSERT_NEAR(frak_B(theta), x, 1e-9) << "x " << x;
  }
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

TEST(SsviSnapshot, AdmissibleParametersAreArbitrageFree) {
  // psi^2 = 4 <= frak_B(1); a wide grid of strikes must pass the checker.
  std::vector<double> strikes;
  for (int i = 0; i <= 200; ++i)
    strikes.push_back(std::exp(-2.0 + 4.0 * i / 200.0));
  const auto snap = ssvi_snapshot(1.0, 1.0, 2.0, strikes);
  EXPECT_TRUE(irv::static_arb::check(snap).clean());
}

TEST(SsviSnapshot, BoundViolationShowsUpAsConvexityBreak) {
  // psi^2 = 1.1 * frak_B(theta) breaks the wing bound; the checker sees it
  // as a convexity violation on a fine strike grid.
  const double theta = 0.5;
  const double psi = std::sqrt(1.1 * frak_B(theta));
  std::vector<double> strikes;
  for (int i = 0; i <= 200; ++i)
    strikes.push_back(std::exp(-2.0 + 4.0 * i / 200.0));
  const auto snap = ssvi_snapshot(1.0, theta, psi, strikes);
  const auto rep = irv::static_arb::check(snap);
  ASSERT_FALSE(rep.clean());
  bool convexity = false;
  for (const auto& e : rep.entries)
    convexity |= e.condition == irv::static_arb::ArbCondition::convexity;
  EXPECT_TRUE(convexity);
}

// ---------------------------------------------------------------------------
// Stopped simulation
// ---------------------------------------------------------------------------

TEST(SsviSimulate, RejectsInadmissibleRuns) {
  const std::vector<double> strikes{0.9, 1.0, 1.1};
  const irv::TimeGrid grid(0.01, 10);
  irv::SimConfig cfg;
  EXPECT_THROW(ssvi_simulate(SsviParams(4.5, 1.0, 1.0), 0.2, strikes, grid,
                             cfg),
               irv::config_error);
  // theta0 below the bound for psi = 2.
  const double bound = frak_B_inverse(4.0);
  EXPECT_THROW(ssvi_simulate(SsviParams(2.0, 0.9 * bound, 1.0), 0.2, strikes,
                             grid, cfg),
               irv::config_error);
  // Grid past maturity.
  EXPECT_THROW(ssvi_simulate(SsviParams(2.0, 0.5, 0.05), 0.2, strikes, grid,
                             cfg),
               irv::config_error);
  // Nonpositive sigma is rejected at the first step.
  EXPECT_THROW(ssvi_simulate(SsviParams(2.0, 0.5, 1.0),
                             [](double) { return 0.0; }, strikes, grid, cfg),
               irv::domain_error);
}

TEST(SsviSimulate, PsiZeroMatchesTheEngineBitwise) {
  // With psi = 0 theta decays deterministically like the engine's omega
  // under the constant-sigma model: same seed, channels, and arithmetic.
  const double sigma = 0.2;
  const double theta0 = 0.04;
  const double strike = 1.05;
  const irv::TimeGrid grid(0.01, 60);
  irv::SimConfig cfg;
  cfg.n_paths = 4;
  cfg.master_seed = 7;
  cfg.workers = 1;
  const auto model = irv::black_scholes_model(sigma);
  const auto engine_paths =
      irv::simulate(model, strike, 1.0, theta0, grid, cfg);
  const auto ssvi_paths = ssvi_simulate(SsviParams(0.0, theta0, 2.0), sigma,
                                        {strike}, grid, cfg);
  ASSERT_EQ(engine_paths.size(), ssvi_paths.size());
  for (std::size_t p = 0; p < ssvi_paths.size(); ++p) {
    const auto& ep = engine_paths[p];
    const auto& sp = ssvi_paths[p];
    ASSERT_EQ(sp.stop_index, ep.stop_index);
    ASSERT_EQ(sp.reason, SsviStopReason::horizon);
    for (std::size_t i = 0; i <= sp.stop_index; ++i) {
      ASSERT_EQ(sp.s[i], ep.s[i]);
      ASSERT_EQ(sp.theta[i], ep.omega[i]);
      ASSERT_EQ(sp.smiles[i].calls[0], ep.call[i]);
    }
  }
}

TEST(SsviSimulate, StopsAndCleanSnapshotsBeforeTau) {
  const double psi = 2.0;
  const double bound = frak_B_inverse(psi * psi);
  const SsviParams p(psi, 2.0 * bound, 1.0);
  std::vector<double> strikes;
  for (int i = 0; i <= 24; ++i)
    strikes.push_back(std::exp(-1.2 + 2.4 * i / 24.0));
  const irv::TimeGrid grid(1.0 / 256.0, 256);
  irv::SimConfig cfg;
  cfg.n_paths = 16;
  cfg.master_seed = 42;
  cfg.workers = 1;
  const auto paths = ssvi_simulate(p, 0.25, strikes, grid, cfg);
  int stopped = 0;
  for (const auto& path : paths) {
    ASSERT_EQ(path.times.size(), path.stop_index + 1);
    ASSERT_EQ(path.theta.size(), path.stop_index + 1);
    if (path.reason == SsviStopReason::horizon) {
      ASSERT_EQ(path.smiles.size(), path.stop_index + 1);
    } else {
      ++stopped;
      ASSERT_EQ(path.smiles.size(), path.stop_index);
      const double tail = path.theta.back();
      if (path.reason == SsviStopReason::bound_crossing) {
        ASSERT_LT(tail, bound);
        ASSERT_GT(tail, 1.0 / cfg.band_n);
      } else {
        ASSERT_TRUE(tail <= 1.0 / cfg.band_n || tail >= cfg.band_n);
      }
    }
    // Every recorded pre-stop state respects the bound; tau <= xi.
    for (std::size_t i = 0; i + 1 <= path.stop_index; ++i)
      ASSERT_GE(path.theta[i], bound);
    for (const auto& snap : path.smiles)
      ASSERT_TRUE(irv::static_arb::check(snap).clean());
  }
  EXPECT_GT(stopped, 0);  // psi = 2 with theta0 at twice the bound stops fast
}

TEST(SsviSimulate, DeterministicAcrossWorkerCounts) {
  const SsviParams p(1.5, 0.8, 1.0);
  const std::vector<double> strikes{0.9, 1.0, 1.1};
  const irv::TimeGrid grid(0.005, 100);
  irv::SimConfig cfg;
  cfg.n_paths = 6;
  cfg.master_seed = 3;
  cfg.workers = 1;
  const auto one = ssvi_simulate(p, 0.3, strikes, grid, cfg);
  cfg.workers = 3;
  const auto three = ssvi_simulate(p, 0.3, strikes, grid, cfg);
  ASSERT_EQ(one.size(), three.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    ASSERT_EQ(one[i].stop_index, three[i].stop_index);
    ASSERT_EQ(one[i].reason, three[i].reason);
    for (std::size_t j = 0; j <= one[i].stop_index; ++j) {
      ASSERT_EQ(one[i].s[j], three[i].s[j]);
      ASSERT_EQ(one[i].theta[j], three[i].theta[j]);
    }
  }
}

}  // namespace
