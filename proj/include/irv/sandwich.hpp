#ifndef IRV_SANDWICH_HPP
#define IRV_SANDWICH_HPP

// Explicit sandwiched-martingale constructions: a bounded unit martingale
// driven by a Brownian path, stopped single-option and three-option call
// price systems built from it, implied-remaining-variance extraction from a
// stopped price path, and ensemble martingale statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "irv/black_scholes.hpp"
#include "irv/errors.hpp"
#include "irv/rng.hpp"
#include "irv/sde_engine.hpp"

namespace irv {

// ---------------------------------------------------------------------------
// Specs and result types
// ---------------------------------------------------------------------------

enum class SandwichVariant { single, three_option };

inline const char* to_string(SandwichVariant v) {
  return v == SandwichVariant::single ? "single" : "three-option";
}

enum class SandwichStopReason { s_hits_k, s_hits_k3, n1_meets_bound, horizon };

inline const char* to_string(SandwichStopReason r) {
  switch (r) {
    case SandwichStopReason::s_hits_k:
      return "S-hits-K";
    case SandwichStopReason::s_hits_k3:
      return "S-hits-K3";
    case SandwichStopReason::n1_meets_bound:
      return "N1-meets-1-minus-N12";
    default:
      return "horizon";
  }
}

struct SandwichSpec {
  SandwichVariant variant = SandwichVariant::single;
  std::vector<double> strikes;  // 1 or 3 ascending values
  double big_t = 0.0;
  double s0 = 0.0;
  double n1_0 = 0.0;   // three-option declared initial N1
  double n12_0 = 0.0;  // three-option declared initial N12

  static SandwichSpec single(double strike, double big_t, double s0) {
    if (!std::isfinite(strike) || !(strike > 0.0))
      throw config_error("SandwichSpec: strike must be finite and > 0");
    detail_check_common(big_t, s0);
    if (s0 == strike)
      throw admissibility_error("SandwichSpec: single variant requires S0 != K");
    SandwichSpec spec;
    spec.variant = SandwichVariant::single;
    spec.strikes = {strike};
    spec.big_t = big_t;
    spec.s0 = s0;
    return spec;
  }

  static SandwichSpec three_option(double k1, double k2, double k3,
                                   double big_t, double s0, double n1_0,
                                   double n12_0) {
    if (!std::isfinite(k1) || !std::isfinite(k2) || !std::isfinite(k3) ||
        !(k1 > 0.0))
      throw config_error("SandwichSpec: strikes must be finite and > 0");
    if (!(k1 < k2) || !(k2 < k3))
      throw config_error("SandwichSpec: strikes must be strictly ascending");
    detail_check_common(big_t, s0);
    if (!std::isfinite(n1_0) || !std::isfinite(n12_0) || !(n1_0 > 0.0) ||
        !(n1_0 < 1.0) || !(n12_0 > 0.0) || !(n12_0 < 1.0))
      throw config_error("SandwichSpec: initial N values must lie in (0,1)");
    if (!(k3 < s0))
      throw admissibility_error(
          "SandwichSpec: three-option variant requires K3 < S0");
    if (!(n1_0 < 1.0 - n12_0))
      throw admissibility_error(
          "SandwichSpec: three-option variant requires N1_0 < 1 - N12_0");
    SandwichSpec spec;
    spec.variant = SandwichVariant::three_option;
    spec.strikes = {k1, k2, k3};
    spec.big_t = big_t;
    spec.s0 = s0;
    spec.n1_0 = n1_0;
    spec.n12_0 = n12_0;
    return spec;
  }

 private:
  static void detail_check_common(double big_t, double s0) {
    if (!std::isfinite(big_t) || !(big_t > 0.0))
      throw config_error("SandwichSpec: T must be finite and > 0");
    if (!std::isfinite(s0) || !(s0 > 0.0))
      throw config_error("SandwichSpec: S0 must be finite and > 0");
  }
};

// One stopped path system.  All arrays run the full grid length and are
// frozen from the stop index onward; `n` and `c` hold one entry per option.
struct SandwichPaths {
  std::vector<double> s;
  std::vector<std::vector<double>> n;
  std::vector<std::vector<double>> c;
  std::size_t stop_index = 0;
  SandwichStopReason reason = SandwichStopReason::horizon;
};

// ---------------------------------------------------------------------------
// Bounded unit martingale N from a Brownian path Z
// ---------------------------------------------------------------------------

// N_i = exp(-(T + (Z_i^2 - t_i) + 2 * int_0^{t_i} Z^2 ds)) with the integral
// by trapezoid.  The exponent is > 0 pathwise for t < T, so 0 < N < 1 there;
// the degenerate all-zero path reaches 1 exactly at t = T.
inline std::vector<double> bounded_unit_martingale(const std::vector<double>& z,
                                                   const TimeGrid& grid,
                                                   double big_t) {
  if (!std::isfinite(big_t) || !(big_t > 0.0))
    throw domain_error("bounded_unit_martingale: T must be finite and > 0");
  if (z.size() != grid.steps + 1)
    throw domain_error("bounded_unit_martingale: path length must match grid");
  if (grid.horizon() > big_t * (1.0 + 1e-12))
    throw domain_error("bounded_unit_martingale: grid extends past T");
  if (z[0] != 0.0)
    throw domain_error("bounded_unit_martingale: Z must start at 0");
  for (double v : z)
    if (!std::isfinite(v))
      throw domain_error("bounded_unit_martingale: Z path must be finite");

  std::vector<double> n(z.size());
  double integral = 0.0;
  n[0] = std::exp(-big_t);
  for (std::size_t i = 1; i < z.size(); ++i) {
    integral += 0.5 * (z[i - 1] * z[i - 1] + z[i] * z[i]) * grid.dt;
    const double t = std::min(grid.time_at(i), big_t);
    n[i] = std::exp(-(big_t + (z[i] * z[i] - t) + 2.0 * integral));
  }
  return n;
}

// ---------------------------------------------------------------------------
// Stopped option-price constructions
// ---------------------------------------------------------------------------

namespace detail {

inline void check_sandwich_paths(const std::vector<double>& s,
                                 const std::vector<const std::vector<double>*>& ns) {
  if (s.empty()) throw domain_error("sandwich: paths must be non-empty");
  for (const auto* n : ns)
    if (n->size() != s.size())
      throw domain_error("sandwich: path lengths must match");
  for (double v : s)
    if (!std::isfinite(v) || !(v > 0.0))
      throw domain_error("sandwich: S path must be finite and > 0");
  for (const auto* n : ns)
    for (double v : *n)
      if (!std::isfinite(v) || !(v > 0.0) || v > 1.0)
        throw domain_error("sandwich: N paths must lie in (0,1]");
}

inline void freeze_tail(std::vector<double>& x, std::size_t stop) {
  for (std::size_t i = stop + 1; i < x.size(); ++i) x[i] = x[stop];
}

inline int sign_of(double x) { return x > 0.0 ? 1 : (x < 0.0 ? -1 : 0); }

}  // namespace detail

// Single-option stopped price: C = (S-K)+ + N * (S - (S-K)+), all processes
// frozen at the first grid crossing of S through K (sign change of S - K).
inline SandwichPaths single_option_sandwich(const SandwichSpec& spec,
                                            const std::vector<double>& s_path,
                                            const std::vector<double>& n_path) {
  if (spec.variant != SandwichVariant::single)
    throw domain_error("single_option_sandwich: spec is not single-variant");
  detail::check_sandwich_paths(s_path, {&n_path});
  const double strike = spec.strikes[0];
  if (s_path[0] == strike)
    throw admissibility_error("single_option_sandwich: requires S0 != K");

  SandwichPaths out;
  out.s = s_path;
  out.n = {n_path};
  out.stop_index = s_path.size() - 1;
  out.reason = SandwichStopReason::horizon;

  const int sign0 = detail::sign_of(s_path[0] - strike);
  for (std::size_t i = 1; i < s_path.size(); ++i) {
    if (detail::sign_of(s_path[i] - strike) != sign0) {
      out.stop_index = i;
      out.reason = SandwichStopReason::s_hits_k;
      break;
    }
  }
  detail::freeze_tail(out.s, out.stop_index);
  detail::freeze_tail(out.n[0], out.stop_index);

  std::vector<double> c(out.s.size());
  for (std::size_t i = 0; i < out.s.size(); ++i) {
    const double intrinsic = std::max(out.s[i] - strike, 0.0);
    c[i] = intrinsic + out.n[0][i] * (out.s[i] - intrinsic);
  }
  out.c = {std::move(c)};
  return out;
}

// Three-option stopped prices: C1 = S - (1-N1)K1, C2 = C1 - N12 (K2-K1),
// C3 = C2 - N23 N12 (K3-K2), all frozen at xi = first grid time where
// S <= K3 or N1 >= 1 - N12 (S checked first).
inline SandwichPaths three_option_sandwich(const SandwichSpec& spec,
                                           const std::vector<double>& s_path,
                                           const std::vector<double>& n1,
                                           const std::vector<double>& n12,
                                           const std::vector<double>& n23) {
  if (spec.variant != SandwichVariant::three_option)
    throw domain_error("three_option_sandwich: spec is not three-option");
  detail::check_sandwich_paths(s_path, {&n1, &n12, &n23});
  const double k1 = spec.strikes[0];
  const double k2 = spec.strikes[1];
  const double k3 = spec.strikes[2];
  if (!(s_path[0] > k3))
    throw admissibility_error("three_option_sandwich: requires S0 > K3");
  if (!(n1[0] < 1.0 - n12[0]))
    throw admissibility_error(
        "three_option_sandwich: requires N1_0 < 1 - N12_0");

  SandwichPaths out;
  out.s = s_path;
  out.n = {n1, n12, n23};
  out.stop_index = s_path.size() - 1;
  out.reason = SandwichStopReason::horizon;

  for (std::size_t i = 1; i < s_path.size(); ++i) {
    if (s_path[i] <= k3) {
      out.stop_index = i;
      out.reason = SandwichStopReason::s_hits_k3;
      break;
    }
    if (n1[i] >= 1.0 - n12[i]) {
      out.stop_index = i;
      out.reason = SandwichStopReason::n1_meets_bound;
      break;
    }
  }
  detail::freeze_tail(out.s, out.stop_index);
  for (auto& n : out.n) detail::freeze_tail(n, out.stop_index);

  std::vector<double> c1(out.s.size()), c2(out.s.size()), c3(out.s.size());
  for (std::size_t i = 0; i < out.s.size(); ++i) {
    c1[i] = out.s[i] - (1.0 - out.n[0][i]) * k1;
    c2[i] = c1[i] - out.n[1][i] * (k2 - k1);
    c3[i] = c2[i] - out.n[2][i] * out.n[1][i] * (k3 - k2);
  }
  out.c = {std::move(c1), std::move(c2), std::move(c3)};
  return out;
}

// ---------------------------------------------------------------------------
// Implied-remaining-variance extraction from a stopped price path
// ---------------------------------------------------------------------------

struct IrvExtraction {
  std::vector<double> omega;
  std::size_t stop_index = 0;
  StopReason reason = StopReason::horizon;
  // Inversion domain errors before the declared stop mean the price bounds
  // were violated upstream; they are counted, not thrown.
  std::size_t fault_count = 0;
  std::size_t first_fault = kNoStep;
};

// Inverts omega_i = implied_root_variance(k_i, C_i/S_i)^2 per grid point,
// stopping at the first price-band trigger C <= (S-K)+ + 1/n or C >= S - 1/n;
// the omega path is frozen from the stop onward.
inline IrvExtraction extract_irv(const std::vector<double>& c_path,
                                 const std::vector<double>& s_path,
                                 double strike, double band_n) {
  if (c_path.size() != s_path.size() || c_path.empty())
    throw domain_error("extract_irv: paths must be non-empty and equal-length");
  if (!std::isfinite(strike) || !(strike > 0.0))
    throw domain_error("extract_irv: strike must be finite and > 0");
  if (!std::isfinite(band_n) || !(band_n > 1.0))
    throw domain_error("extract_irv: band_n must be finite and > 1");
  for (double v : s_path)
    if (!std::isfinite(v) || !(v > 0.0))
      throw domain_error("extract_irv: S path must be finite and > 0");
  for (double v : c_path)
    if (!std::isfinite(v))
      throw domain_error("extract_irv: C path must be finite");

  const double eps = 1.0 / band_n;
  IrvExtraction out;
  out.omega.assign(c_path.size(), 0.0);
  out.stop_index = c_path.size() - 1;
  out.reason = StopReason::horizon;

  std::size_t stop = kNoStep;
  for (std::size_t i = 0; i < c_path.size(); ++i) {
    const double intrinsic = std::max(s_path[i] - strike, 0.0);
    if (c_path[i] <= intrinsic + eps) {
      stop = i;
      out.reason = StopReason::lower_band;
      break;
    }
    if (c_path[i] >= s_path[i] - eps) {
      stop = i;
      out.reason = StopReason::upper_band;
      break;
    }
    const double k = std::log(strike / s_path[i]);
    const double ratio = c_path[i] / s_path[i];
    bool fault = false;
    try {
      const RootVariance rv = implied_root_variance(k, ratio);
      if (rv.unbounded)
        fault = true;
      else
        out.omega[i] = rv.value * rv.value;
    } catch (const domain_error&) {
      fault = true;
    }
    if (fault) {
      ++out.fault_count;
      if (out.first_fault == kNoStep) out.first_fault = i;
      out.omega[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  if (stop != kNoStep) {
    out.stop_index = stop;
    const double frozen = stop > 0 ? out.omega[stop - 1] : 0.0;
    for (std::size_t i = stop; i < out.omega.size(); ++i) out.omega[i] = frozen;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ensemble statistics and simulation
// ---------------------------------------------------------------------------

// Per-option martingale-defect statistics: the stopped terminal mean of each
// C against the first path's initial price.
inline std::vector<EnsembleStats> sandwich_martingale_test(
    const std::vector<SandwichPaths>& ensemble) {
  if (ensemble.size() < 2)
    throw domain_error("sandwich_martingale_test: needs at least 2 paths");
  const std::size_t n_options = ensemble.front().c.size();
  for (const auto& p : ensemble)
    if (p.c.size() != n_options || p.c.empty() || p.c[0].empty())
      throw domain_error("sandwich_martingale_test: inconsistent ensemble");

  std::vector<EnsembleStats> stats;
  stats.reserve(n_options);
  for (std::size_t j = 0; j < n_options; ++j) {
    std::vector<PathSummary> summaries(ensemble.size());
    for (std::size_t p = 0; p < ensemble.size(); ++p) {
      summaries[p].terminal_s = ensemble[p].s.back();
      summaries[p].terminal_call = ensemble[p].c[j].back();
      summaries[p].stop_index = ensemble[p].stop_index;
      summaries[p].stop_reason = StopReason::horizon;
      summaries[p].valid = true;
    }
    stats.push_back(ensemble_stats(summaries, ensemble.front().c[j][0]));
  }
  return stats;
}

// Simulates the spec's path system: exact lognormal S (volatility sigma_s)
// and one bounded unit martingale per option, each driven by its own RNG
// channel, then applies the stopped construction path by path.
inline std::vector<SandwichPaths> sandwich_simulate(const SandwichSpec& spec,
                                                    double sigma_s,
                                                    const TimeGrid& grid,
                                                    const SimConfig& cfg) {
  if (!std::isfinite(sigma_s) || !(sigma_s > 0.0))
    throw config_error("sandwich_simulate: sigma_s must be finite and > 0");
  if (grid.horizon() > spec.big_t * (1.0 + 1e-12))
    throw config_error("sandwich_simulate: grid extends past T");
  if (cfg.n_paths == 0)
    throw config_error("sandwich_simulate: needs at least one path");
  const double n0 = std::exp(-spec.big_t);
  if (spec.variant == SandwichVariant::three_option && !(n0 < 1.0 - n0))
    throw config_error(
        "sandwich_simulate: three-option runs require T > ln 2 so that "
        "N1_0 < 1 - N12_0 at the simulated initial values");

  const CounterRng rng(cfg.master_seed);
  const double sqrt_dt = std::sqrt(grid.dt);
  std::vector<SandwichPaths> out(cfg.n_paths);
  detail::parallel_paths(cfg.n_paths, cfg.workers, [&](std::size_t p) {
    const std::uint64_t draw = cfg.antithetic ? p / 2 : p;
    const double sign = (cfg.antithetic && (p & 1u)) ? -1.0 : 1.0;

    std::vector<double> s(grid.steps + 1);
    s[0] = spec.s0;
    for (std::size_t i = 0; i < grid.steps; ++i) {
      const double xw = sign * rng.normal(draw, static_cast<std::uint32_t>(i),
                                          kChannelAssetW);
      s[i + 1] = s[i] * std::exp(sigma_s * sqrt_dt * xw -
                                 0.5 * sigma_s * sigma_s * grid.dt);
    }

    const auto brownian = [&](std::uint32_t channel) {
      std::vector<double> z(grid.steps + 1, 0.0);
      for (std::size_t i = 0; i < grid.steps; ++i) {
        const double xz = sign *
            rng.normal(draw, static_cast<std::uint32_t>(i), channel);
        z[i + 1] = z[i] + sqrt_dt * xz;
      }
      return bounded_unit_martingale(z, grid, spec.big_t);
    };

    if (spec.variant == SandwichVariant::single) {
      out[p] = single_option_sandwich(spec, s, brownian(kChannelVarianceZ));
    } else {
      out[p] = three_option_sandwich(spec, s, brownian(kChannelAux1),
                                     brownian(kChannelAux2),
                                     brownian(kChannelAux3));
    }
  });
  return out;
}

// Terminal samples of the bounded unit martingale alone, for ensemble checks
// of E[N_T] against N_0 = e^{-T}.
inline std::vector<double> n_terminal_ensemble(double big_t,
                                               const TimeGrid& grid,
                                               const SimConfig& cfg) {
  if (!std::isfinite(big_t) || !(big_t > 0.0))
    throw config_error("n_terminal_ensemble: T must be finite and > 0");
  if (grid.horizon() > big_t * (1.0 + 1e-12))
    throw config_error("n_terminal_ensemble: grid extends past T");
  if (cfg.n_paths == 0)
    throw config_error("n_terminal_ensemble: needs at least one path");

  const CounterRng rng(cfg.master_seed);
  const double sqrt_dt = std::sqrt(grid.dt);
  std::vector<double> out(cfg.n_paths);
  detail::parallel_paths(cfg.n_paths, cfg.workers, [&](std::size_t p) {
    const std::uint64_t draw = cfg.antithetic ? p / 2 : p;
    const double sign = (cfg.antithetic && (p & 1u)) ? -1.0 : 1.0;
    std::vector<double> z(grid.steps + 1, 0.0);
    for (std::size_t i = 0; i < grid.steps; ++i) {
      const double xz = sign *
          rng.normal(draw, static_cast<std::uint32_t>(i), kChannelVarianceZ);
      z[i + 1] = z[i] + sqrt_dt * xz;
    }
    out[p] = bounded_unit_martingale(z, grid, big_t).back();
  });
  return out;
}

}  // namespace irv

#endif  // IRV_SANDWICH_HPP
