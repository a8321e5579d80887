#include "irv/sde_engine.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "irv/coefficient_model.hpp"
#include "irv/core.hpp"
#include "irv/errors.hpp"
#include "irv/rng.hpp"
#include "oracle_utils.hpp"

namespace {

using irv::CoefficientModel;
using irv::IrvState;
using irv::ModelEval;
using irv::SimConfig;
using irv::StopReason;
using irv::TimeGrid;

// Explicit-drift model: sigma, b, c, a all constant.
class ConstCoeffModel final : public CoefficientModel {
 public:
  ConstCoeffModel(double sigma, double b, double c, double a)
      : sigma_(sigma), b_(b), c_(c), a_(a) {}
  ModelEval eval(const IrvState&) const override {
    return {sigma_, b_, c_, false, a_};
  }

 private:
  double sigma_, b_, c_, a_;
};

// ---------------------------------------------------------------------------
// Grid and input validation
// ---------------------------------------------------------------------------

TEST(TimeGrid, BasicsAndValidation) {
  const TimeGrid g(0.25, 4);
  EXPECT_DOUBLE_EQ(g.horizon(), 1.0);
  EXPECT_DOUBLE_EQ(g.time_at(3), 0.75);
  const auto t = g.times();
  ASSERT_EQ(t.size(), 5u);
  EXPECT_DOUBLE_EQ(t.front(), 0.0);
  EXPECT_DOUBLE_EQ(t.back(), 1.0);
  EXPECT_THROW(TimeGrid(0.0, 4), irv::domain_error);
  EXPECT_THROW(TimeGrid(-0.1, 4), irv::domain_error);
  EXPECT_THROW(TimeGrid(0.1, 0), irv::domain_error);
}

TEST(Simulate, RejectsBadInputs) {
  const auto model = irv::black_scholes_model(0.2);
  const TimeGrid grid(0.01, 10);
  SimConfig cfg;
  EXPECT_THROW(irv::simulate(model, 0.0, 1.0, 0.04, grid, cfg),
               irv::domain_error);
  EXPECT_THROW(irv::simulate(model, 1.0, -1.0, 0.04, grid, cfg),
               irv::domain_error);
  EXPECT_THROW(irv::simulate(model, 1.0, 1.0, 0.0, grid, cfg),
               irv::domain_error);
  SimConfig bad_band = cfg;
  bad_band.band_n = 1.0;
  EXPECT_THROW(irv::simulate(model, 1.0, 1.0, 0.04, grid, bad_band),
               irv::domain_error);
  SimConfig no_paths = cfg;
  no_paths.n_paths = 0;
  EXPECT_THROW(irv::simulate(model, 1.0, 1.0, 0.04, grid, no_paths),
               irv::domain_error);
}

TEST(Simulate, RejectsGridPastModelMaturity) {
  const auto model = irv::sw_subfamily_model(
      1.0, [](double) { return 1.0; },
      [](double k) { return -irv::sign_of(k); });
  SimConfig cfg;
  // Last coefficient evaluation happens at t = dt * (steps - 1).
  EXPECT_NO_THROW(irv::simulate(model, 1.1, 1.0, 0.1, TimeGrid(0.1, 10), cfg));
  EXPECT_THROW(irv::simulate(model, 1.1, 1.0, 0.1, TimeGrid(0.1, 11), cfg),
               irv::domain_error);
}

// ---------------------------------------------------------------------------
// Deterministic-volatility dynamics
// ---------------------------------------------------------------------------

TEST(Engine, ConstantSigmaOmegaDecrementIsExact) {
  const double sigma = 0.2;
  const double omega0 = 0.09;
  const TimeGrid grid(1e-3, 100);
  const auto model = irv::black_scholes_model(sigma);
  SimConfig cfg;
  cfg.n_paths = 3;
  cfg.master_seed = 11;
  const auto paths = irv::simulate(model, 1.1, 1.0, omega0, grid, cfg);
  for (const auto& p : paths) {
    ASSERT_TRUE(p.valid);
    EXPECT_EQ(p.stop_index, grid.steps);
    EXPECT_EQ(p.stop_reason, StopReason::horizon);
    double w_ref = omega0;
    for (std::size_t i = 0; i <= grid.steps; ++i) {
      EXPECT_EQ(p.omega[i], w_ref) << "step " << i;
      w_ref = w_ref - sigma * sigma * grid.dt;
      EXPECT_NEAR(p.omega[i], model.omega_at(grid.time_at(i), omega0), 1e-14);
    }
  }
}

TEST(Engine, AffineSigmaOmegaTracksClosedForm) {
  const auto model = irv::black_scholes_model_affine(0.1, 0.1);
  const TimeGrid grid(1e-4, 1000);
  SimConfig cfg;
  cfg.n_paths = 1;
  const auto paths = irv::simulate(model, 1.0, 1.0, 7.0 / 300.0, grid, cfg);
  const auto& p = paths[0];
  ASSERT_TRUE(p.valid);
  // Left-endpoint Euler of the deterministic decay: first-order in dt.
  for (std::size_t i = 0; i <= grid.steps; i += 100) {
    const double exact = model.omega_at(grid.time_at(i), 7.0 / 300.0);
    EXPECT_NEAR(p.omega[i], exact, 5e-6) << "step " << i;
  }
}

// One Euler step of the exact lognormal asset leaves the price expectation
// unchanged when omega decrements by sigma^2 dt; checked by quadrature.
TEST(Engine, OneStepPriceExpectationIsConserved) {
  const double s0 = 1.0;
  const double omega = 0.04;
  const double strike = 1.1;
  const double sigma = 0.25;
  const double dt = 1e-3;
  const double c0 = irv::initial_call_price(strike, s0, omega);
  EXPECT_NEAR(c0, 0.04292010941409888, 1e-16);
  const double sqrt_dt = std::sqrt(dt);
  const auto integrand = [&](long double xi) -> long double {
    const double x = static_cast<double>(xi);
    const double sp = s0 * std::exp(sigma * sqrt_dt * x -
                                    0.5 * sigma * sigma * dt);
    const double wp = omega - sigma * sigma * dt;
    const double call =
        sp * irv::bs_call(std::log(strike / sp), std::sqrt(wp));
    return irv_test::norm_pdf_ref(xi) * static_cast<long double>(call);
  };
  const long double mean = irv_test::simpson(integrand, -10.0L, 10.0L, 50000);
  EXPECT_NEAR(static_cast<double>(mean), c0, 1e-12);
}

// ---------------------------------------------------------------------------
// Recorder output shape
// ---------------------------------------------------------------------------

TEST(Engine, FullPathArraysAreConsistent) {
  const auto model = irv::sw_subfamily_model(
      1.0, [](double) { return 1.0; },
      [](double k) { return -irv::sign_of(k); });
  const TimeGrid grid(0.01, 50);
  SimConfig cfg;
  cfg.n_paths = 4;
  cfg.master_seed = 3;
  const double strike = 1.1;
  const auto paths = irv::simulate(model, strike, 1.0, 0.1, grid, cfg);
  for (const auto& p : paths) {
    ASSERT_EQ(p.times.size(), grid.steps + 1);
    ASSERT_EQ(p.s.size(), grid.steps + 1);
    ASSERT_EQ(p.omega.size(), grid.steps + 1);
    ASSERT_EQ(p.call.size(), grid.steps + 1);
    for (std::size_t i = 0; i <= grid.steps; ++i) {
      EXPECT_EQ(p.times[i], grid.time_at(i));
      ASSERT_TRUE(std::isfinite(p.s[i]));
      ASSERT_TRUE(std::isfinite(p.omega[i]));
      EXPECT_EQ(p.call[i], p.s[i] * irv::bs_call(std::log(strike / p.s[i]),
                                                 std::sqrt(p.omega[i])));
    }
    if (p.valid && p.stop_reason != StopReason::horizon) {
      const auto hit = irv::band_hit(p.omega, cfg.band_n);
      ASSERT_TRUE(hit.has_value());
      EXPECT_EQ(*hit, p.stop_index);
    }
  }
}

TEST(Engine, SummariesMatchFullPaths) {
  const auto model = irv::sw_subfamily_model(
      1.0, [](double) { return 1.0; },
      [](double k) { return -irv::sign_of(k); });
  const TimeGrid grid(0.01, 40);
  SimConfig cfg;
  cfg.n_paths = 32;
  cfg.master_seed = 17;
  const double strike = 1.1;
  const auto paths = irv::simulate(model, strike, 1.0, 0.1, grid, cfg);
  const auto sums = irv::simulate_summaries(model, strike, 1.0, 0.1, grid, cfg);
  ASSERT_EQ(paths.size(), sums.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    EXPECT_EQ(sums[i].valid, paths[i].valid);
    EXPECT_EQ(sums[i].stop_index, paths[i].stop_index);
    EXPECT_EQ(sums[i].stop_reason, paths[i].stop_reason);
    EXPECT_EQ(sums[i].terminal_s, paths[i].s.back());
    EXPECT_EQ(sums[i].terminal_omega, paths[i].omega.back());
    EXPECT_EQ(sums[i].terminal_call, paths[i].call[paths[i].stop_index]);
  }
}

// ---------------------------------------------------------------------------
// Band stops and freezing
// ---------------------------------------------------------------------------

TEST(Engine, InitialStateOutsideBandStopsAtIndexZero) {
  const auto model = irv::black_scholes_model(0.2);
  const TimeGrid grid(0.01, 5);
  SimConfig cfg;
  cfg.band_n = 100.0;
  const auto low = irv::simulate(model, 1.0, 1.0, 0.005, grid, cfg);
  EXPECT_EQ(low[0].stop_index, 0u);
  EXPECT_EQ(low[0].stop_reason, StopReason::lower_band);
  for (double w : low[0].omega) EXPECT_EQ(w, 0.005);
  for (double s : low[0].s) EXPECT_EQ(s, 1.0);
  const auto high = irv::simulate(model, 1.0, 1.0, 150.0, grid, cfg);
  EXPECT_EQ(high[0].stop_index, 0u);
  EXPECT_EQ(high[0].stop_reason, StopReason::upper_band);
}

TEST(Engine, LowerBandExitFreezesTail) {
  // Dyadic inputs: decrement per step is exactly 1/512.
  const ConstCoeffModel model(1.0, 0.0, 0.0, -1.0 / 64.0);
  const TimeGrid grid(0.125, 20);
  SimConfig cfg;
  cfg.band_n = 64.0;
  const auto paths = irv::simulate(model, 1.0, 1.0, 0.03125, grid, cfg);
  const auto& p = paths[0];
  ASSERT_TRUE(p.valid);
  EXPECT_EQ(p.stop_index, 8u);
  EXPECT_EQ(p.stop_reason, StopReason::lower_band);
  for (std::size_t i = 0; i <= 8; ++i)
    EXPECT_EQ(p.omega[i], 0.03125 - static_cast<double>(i) / 512.0);
  for (std::size_t i = 8; i <= grid.steps; ++i) {
    EXPECT_EQ(p.omega[i], 1.0 / 64.0);
    EXPECT_EQ(p.s[i], p.s[8]);
    EXPECT_EQ(p.call[i], p.call[8]);
  }
}

TEST(Engine, NegativeOvershootClampsToLowerThreshold) {
  const ConstCoeffModel model(1.0, 0.0, 0.0, -1.0);
  const TimeGrid grid(0.125, 4);
  SimConfig cfg;
  cfg.band_n = 64.0;
  const auto paths = irv::simulate(model, 1.0, 1.0, 0.03125, grid, cfg);
  const auto& p = paths[0];
  ASSERT_TRUE(p.valid);
  EXPECT_EQ(p.stop_index, 1u);
  EXPECT_EQ(p.stop_reason, StopReason::lower_band);
  for (std::size_t i = 1; i <= grid.steps; ++i)
    EXPECT_EQ(p.omega[i], 1.0 / 64.0);
}

TEST(Engine, UpperBandExitStops) {
  const ConstCoeffModel model(1.0, 0.0, 0.0, 256.0);
  const TimeGrid grid(0.125, 4);
  SimConfig cfg;
  cfg.band_n = 64.0;
  const auto paths = irv::simulate(model, 1.0, 1.0, 48.0, grid, cfg);
  const auto& p = paths[0];
  ASSERT_TRUE(p.valid);
  EXPECT_EQ(p.stop_index, 1u);
  EXPECT_EQ(p.stop_reason, StopReason::upper_band);
  EXPECT_EQ(p.omega[1], 80.0);
  for (std::size_t i = 1; i <= grid.steps; ++i) EXPECT_EQ(p.omega[i], 80.0);
}

// ---------------------------------------------------------------------------
// Invalid paths
// ---------------------------------------------------------------------------

TEST(Engine, ModelThrowMarksPathInvalidAndFreezesState) {
  const irv::BlackScholesModel model(
      [](double t) {
        return t > 0.011 ? std::numeric_limits<double>::quiet_NaN() : 0.2;
      },
      [](double t) { return 0.04 * t; });
  const TimeGrid grid(0.005, 6);
  SimConfig cfg;
  cfg.n_paths = 2;
  const auto paths = irv::simulate(model, 1.0, 1.0, 0.04, grid, cfg);
  for (const auto& p : paths) {
    EXPECT_FALSE(p.valid);
    EXPECT_EQ(p.invalid_step, 3u);  // first grid time above 0.011 is t_3
    EXPECT_EQ(p.stop_index, 3u);    // frozen at the last good state
    for (std::size_t i = 3; i <= grid.steps; ++i) {
      EXPECT_EQ(p.s[i], p.s[3]);
      EXPECT_EQ(p.omega[i], p.omega[3]);
    }
  }
  const auto st = irv::martingale_test(paths);
  EXPECT_EQ(st.n_invalid, 2u);
  EXPECT_EQ(st.n_valid, 0u);
}

TEST(Engine, NonFiniteUpdateMarksPathInvalid) {
  const auto model = irv::black_scholes_model(1e200);
  const TimeGrid grid(0.01, 3);
  SimConfig cfg;
  const auto paths = irv::simulate(model, 1.0, 1.0, 0.04, grid, cfg);
  const auto& p = paths[0];
  EXPECT_FALSE(p.valid);
  EXPECT_EQ(p.invalid_step, 1u);
  EXPECT_EQ(p.stop_index, 0u);
  for (std::size_t i = 0; i <= grid.steps; ++i) {
    EXPECT_EQ(p.s[i], 1.0);
    EXPECT_EQ(p.omega[i], 0.04);
  }
}

// ---------------------------------------------------------------------------
// Determinism and antithetic pairing
// ---------------------------------------------------------------------------

TEST(Engine, BitIdenticalAcrossWorkerCounts) {
  const auto model = irv::sw_subfamily_model(
      1.0, [](double) { return 1.0; },
      [](double k) { return -irv::sign_of(k); });
  const TimeGrid grid(0.01, 50);
  SimConfig one;
  one.n_paths = 16;
  one.master_seed = 99;
  one.workers = 1;
  SimConfig four = one;
  four.workers = 4;
  const auto a = irv::simulate_summaries(model, 1.1, 1.0, 0.1, grid, one);
  const auto b = irv::simulate_summaries(model, 1.1, 1.0, 0.1, grid, four);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].terminal_s, b[i].terminal_s);
    EXPECT_EQ(a[i].terminal_omega, b[i].terminal_omega);
    EXPECT_EQ(a[i].terminal_call, b[i].terminal_call);
    EXPECT_EQ(a[i].stop_index, b[i].stop_index);
  }
  const auto pa = irv::simulate(model, 1.1, 1.0, 0.1, grid, one);
  const auto pb = irv::simulate(model, 1.1, 1.0, 0.1, grid, four);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].s, pb[i].s);
    EXPECT_EQ(pa[i].omega, pb[i].omega);
  }
}

TEST(Engine, AntitheticPairReplaysNegatedDraws) {
  const double sigma = 0.2;
  const auto model = irv::black_scholes_model(sigma);
  const TimeGrid grid(0.01, 5);
  SimConfig cfg;
  cfg.n_paths = 2;
  cfg.master_seed = 5;
  cfg.antithetic = true;
  const auto paths = irv::simulate(model, 1.0, 1.0, 0.04, grid, cfg);
  const irv::CounterRng rng(cfg.master_seed);
  const double sqrt_dt = std::sqrt(grid.dt);
  double s_plus = 1.0, s_minus = 1.0;
  for (std::size_t i = 0; i < grid.steps; ++i) {
    const double xw =
        rng.normal(0, static_cast<std::uint32_t>(i), irv::kChannelAssetW);
    s_plus = s_plus *
             std::exp(sigma * sqrt_dt * xw - 0.5 * sigma * sigma * grid.dt);
    const double neg = -xw;
    s_minus = s_minus *
              std::exp(sigma * sqrt_dt * neg - 0.5 * sigma * sigma * grid.dt);
    EXPECT_EQ(paths[0].s[i + 1], s_plus);
    EXPECT_EQ(paths[1].s[i + 1], s_minus);
    // Drift-only variance path is shared by the pair.
    EXPECT_EQ(paths[0].omega[i + 1], paths[1].omega[i + 1]);
  }
}

// ---------------------------------------------------------------------------
// Ensemble statistics
// ---------------------------------------------------------------------------

TEST(EnsembleStats, CountsAndDegenerateSe) {
  std::vector<irv::PathSummary> sums(4);
  for (auto& p : sums) {
    p.valid = true;
    p.stop_reason = StopReason::horizon;
    p.terminal_call = 0.25;
  }
  sums[1].stop_reason = StopReason::lower_band;
  sums[2].valid = false;
  auto st = irv::ensemble_stats(sums, 0.25);
  EXPECT_EQ(st.n_paths, 4u);
  EXPECT_EQ(st.n_valid, 3u);
  EXPECT_EQ(st.n_invalid, 1u);
  EXPECT_EQ(st.n_lower_band, 1u);
  EXPECT_EQ(st.n_horizon, 2u);
  EXPECT_EQ(st.z, 0.0);
  st = irv::ensemble_stats(sums, 0.20);
  EXPECT_TRUE(std::isinf(st.z));
  EXPECT_GT(st.z, 0.0);
}

TEST(Engine, MartingaleHoldsForBlackScholesDynamics) {
  const auto model = irv::black_scholes_model(0.2);
  const TimeGrid grid(5e-3, 50);
  SimConfig cfg;
  cfg.n_paths = 4000;
  cfg.master_seed = 42;
  const auto st = irv::martingale_test(model, 1.1, 1.0, 0.09, grid, cfg);
  EXPECT_EQ(st.n_valid, cfg.n_paths);
  EXPECT_EQ(st.n_horizon, cfg.n_paths);
  EXPECT_LT(std::fabs(st.z), 3.5) << "z = " << st.z;
}

TEST(Engine, ZeroDriftControlBreaksTheMartingale) {
  // a = 0 with b = c = 0 freezes omega, so the discounted price drifts up.
  const ConstCoeffModel model(0.4, 0.0, 0.0, 0.0);
  const TimeGrid grid(5e-3, 100);
  SimConfig cfg;
  cfg.n_paths = 8000;
  cfg.master_seed = 42;
  const auto st = irv::martingale_test(model, 1.0, 1.0, 0.04, grid, cfg);
  EXPECT_EQ(st.n_valid, cfg.n_paths);
  EXPECT_GT(st.z, 3.5) << "z = " << st.z;
}

TEST(Engine, MartingaleOverloadsAgree) {
  const auto model = irv::sw_subfamily_model(
      1.0, [](double) { return 1.0; },
      [](double k) { return -irv::sign_of(k); });
  const TimeGrid grid(0.01, 30);
  SimConfig cfg;
  cfg.n_paths = 64;
  cfg.master_seed = 8;
  const auto paths = irv::simulate(model, 1.1, 1.0, 0.1, grid, cfg);
  const auto from_paths = irv::martingale_test(paths);
  const auto streaming = irv::martingale_test(model, 1.1, 1.0, 0.1, grid, cfg);
  EXPECT_EQ(from_paths.n_valid, streaming.n_valid);
  EXPECT_EQ(from_paths.mean, streaming.mean);
  EXPECT_EQ(from_paths.se, streaming.se);
  EXPECT_EQ(from_paths.z, streaming.z);
}

// ---------------------------------------------------------------------------
// Quadratic variation
// ---------------------------------------------------------------------------

TEST(Qv, StoredAndStreamingReportsAgree) {
  const auto model = irv::sw_subfamily_model(
      1.0, [](double) { return 1.0; },
      [](double k) { return -irv::sign_of(k); });
  const TimeGrid grid(0.01, 50);
  SimConfig cfg;
  cfg.n_paths = 200;
  cfg.master_seed = 21;
  const double strike = 1.1;
  const auto paths = irv::simulate(model, strike, 1.0, 0.1, grid, cfg);
  const auto stored = irv::qv_check(paths, model, strike);
  const auto streaming = irv::qv_check(model, strike, 1.0, 0.1, grid, cfg);
  EXPECT_EQ(stored.n_valid, streaming.n_valid);
  EXPECT_NEAR(stored.mean_realized, streaming.mean_realized,
              1e-13 * stored.mean_realized);
  EXPECT_NEAR(stored.mean_predicted, streaming.mean_predicted,
              1e-13 * stored.mean_predicted);
}

TEST(Qv, PredictedDensityMatchesRealizedForBlackScholes) {
  const auto model = irv::black_scholes_model(0.2);
  const TimeGrid grid(1e-3, 300);
  SimConfig cfg;
  cfg.n_paths = 2000;
  cfg.master_seed = 31;
  const auto rep = irv::qv_check(model, 1.05, 1.0, 0.06, grid, cfg);
  EXPECT_EQ(rep.n_valid, cfg.n_paths);
  EXPECT_GT(rep.mean_predicted, 0.0);
  EXPECT_LT(rep.rel_error, 0.15) << "rel error " << rep.rel_error;
}

// ---------------------------------------------------------------------------
// Coefficient models
// ---------------------------------------------------------------------------

TEST(SwSubfamily, EvalMatchesFrozenValues) {
  const auto model = irv::sw_subfamily_model(
      1.0, [](double) { return 1.0; },
      [](double k) { return -irv::sign_of(k); });
  const double k = std::log(1.1 / 1.05);
  const IrvState state{0.25, 1.05, 0.09, k, 0.0};
  const ModelEval ev = model.eval(state);
  EXPECT_TRUE(ev.derive_drift);
  EXPECT_EQ(ev.b, 0.0);
  EXPECT_NEAR(ev.sigma, 0.61720676272034159, 1e-15);
  EXPECT_NEAR(ev.c, -0.76545004594506413, 1e-15);
  EXPECT_NEAR(irv::no_drift_a(ev.b, ev.c, state.omega, state.k),
              -0.91678331682644313, 1e-14);
}

TEST(SwSubfamily, ThrowsPastMaturityAndOnVanishingVolatility) {
  const auto model = irv::sw_subfamily_model(
      1.0, [](double t) { return -1.0 / (1.0 - t); },
      [](double) { return 0.0; });
  EXPECT_THROW(model.eval({1.0, 1.0, 0.1, 0.0, 0.0}), irv::domain_error);
  EXPECT_THROW(model.eval({0.5, 1.0, 0.1, 0.0, 0.0}),
               irv::singular_model_error);
}

TEST(SwSubfamily, SignHelper) {
  EXPECT_EQ(irv::sign_of(3.2), 1.0);
  EXPECT_EQ(irv::sign_of(-0.1), -1.0);
  EXPECT_EQ(irv::sign_of(0.0), 0.0);
}

}  // namespace
