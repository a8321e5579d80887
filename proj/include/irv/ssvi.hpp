#ifndef IRV_SSVI_HPP
#define IRV_SSVI_HPP

// Symmetric SSVI smile model: the smile map omega(k) from (theta, psi), the
// theta dynamics, the induced master-SDE coefficients, the static-arbitrage
// bound frak_B with its inverse, and a stopped simulation that emits a smile
// snapshot per step.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "irv/black_scholes.hpp"
#include "irv/errors.hpp"
#include "irv/rng.hpp"
#include "irv/sde_engine.hpp"
#include "irv/static_arb.hpp"

namespace irv {

// ---------------------------------------------------------------------------
// Parameters and smile map
// ---------------------------------------------------------------------------

struct SsviParams {
  double psi;     // smile wing slope, constant over the run
  double theta0;  // initial at-the-money implied remaining variance
  double big_t;   // maturity in years

  SsviParams(double psi_, double theta0_, double big_t_)
      : psi(psi_), theta0(theta0_), big_t(big_t_) {
    if (!std::isfinite(psi) || !std::isfinite(theta0) || !std::isfinite(big_t))
      throw config_error("SsviParams: parameters must be finite");
    if (psi < 0.0) throw config_error("SsviParams: requires psi >= 0");
    if (!(theta0 > 0.0)) throw config_error("SsviParams: requires theta0 > 0");
    if (!(big_t > 0.0)) throw config_error("SsviParams: requires T > 0");
  }
};

struct SsviSmilePoint {
  double theta;
  double k;
  double big_a;  // sqrt(theta^2 + psi^2 k^2)
  double omega;  // (theta + big_a) / 2
};

// Smile value at log-moneyness k.  The psi*k == 0 branch keeps the
// at-the-money identity omega = theta exact.
inline SsviSmilePoint ssvi_omega(double theta, double psi, double k) {
  if (!(theta > 0.0) || !std::isfinite(theta))
    throw domain_error("ssvi_omega: requires theta > 0");
  if (!std::isfinite(psi) || psi < 0.0)
    throw domain_error("ssvi_omega: requires psi >= 0");
  if (!std::isfinite(k)) throw domain_error("ssvi_omega: k must be finite");
  const double pk = psi * k;
  const double big_a =
      pk == 0.0 ? theta : std::sqrt(theta * theta + pk * pk);
  return {theta, k, big_a, 0.5 * (theta + big_a)};
}

// ---------------------------------------------------------------------------
// Theta dynamics and induced master-SDE coefficients
// ---------------------------------------------------------------------------

struct SsviThetaDynamics {
  double drift_per_sigma2;   // d(theta) drift per sigma^2 dt
  double z_loading_per_sigma;  // d(theta) loading on dZ per sigma
};

inline SsviThetaDynamics ssvi_theta_drift_diffusion(double psi) {
  return {(psi - 4.0) * (psi + 4.0) / 16.0, -psi};
}

struct SsviMasterCoefficients {
  double a;  // omega drift per sigma^2
  double b;  // omega loading on dZ per omega sigma
  double c;  // omega loading on dW per omega sigma
};

inline SsviMasterCoefficients ssvi_master_coefficients(
    const SsviSmilePoint& point, double psi) {
  const double theta = point.theta;
  const double big_a = point.big_a;
  const double omega = point.omega;
  const double k = point.k;
  if (!(theta > 0.0) || !(big_a > 0.0) || !(omega > 0.0) ||
      !std::isfinite(big_a) || !std::isfinite(omega) || !std::isfinite(k) ||
      !std::isfinite(psi) || psi < 0.0)
    throw domain_error("ssvi_master_coefficients: degenerate smile point");
  const double ratio = 1.0 + theta / big_a;
  const double psi2 = psi * psi;
  const double a =
      0.5 * (ratio * (psi - 4.0) * (psi + 4.0) / 16.0 +
             psi2 * k / (2.0 * big_a) +
             (psi2 * psi2 * k * k + theta * theta * psi2) /
                 (2.0 * big_a * big_a * big_a));
  const double b = -(1.0 / (2.0 * omega)) * ratio * psi;
  const double c = -psi2 * k / (2.0 * big_a * omega);
  return {a, b, c};
}

// ---------------------------------------------------------------------------
// Static-arbitrage bound frak_B and its inverse
// ---------------------------------------------------------------------------

// Largest admissible psi^2 for a given theta.  Constant 16 from just below
// theta = 4 onward; the cutover avoids catastrophic cancellation in zeta.
inline double frak_B(double theta) {
  if (!(theta >= 0.0) || !std::isfinite(theta))
    throw domain_error("frak_B: requires theta >= 0");
  if (theta >= 4.0 - 1e-12) return 16.0;
  const double u = 2.0 / (1.0 - theta / 4.0);
  const double zeta = u + std::sqrt(u * u + u);
  return 16.0 * theta * zeta * (zeta + 1.0) /
         (8.0 * (zeta - 2.0) + theta * zeta * (zeta - 1.0));
}

// Inverse of frak_B restricted to [0, 4); monotone bisection.
inline double frak_B_inverse(double x) {
  if (!(x >= 0.0) || !(x < 16.0))
    throw domain_error("frak_B_inverse: requires x in [0, 16)");
  if (x == 0.0) return 0.0;
  double lo = 0.0;
  double hi = 4.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (frak_B(mid) < x)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Stopped simulation
// ---------------------------------------------------------------------------

enum class SsviStopReason { theta_band, bound_crossing, horizon };

inline const char* to_string(SsviStopReason r) {
  switch (r) {
    case SsviStopReason::theta_band:
      return "theta-band";
    case SsviStopReason::bound_crossing:
      return "bound-crossing";
    default:
      return "horizon";
  }
}

struct SsviPath {
  // States 0..stop_index.
  std::vector<double> times;
  std::vector<double> s;
  std::vector<double> theta;
  // One snapshot per state strictly before the stop; every state on an
  // unstopped (horizon) run.  The market is only guaranteed arbitrage-free
  // before the stop, and theta may not even be positive at it.
  std::vector<SmileSnapshot> smiles;
  std::size_t stop_index = 0;
  SsviStopReason reason = SsviStopReason::horizon;
};

// Smile snapshot for a spot/theta state over a strike grid.
inline SmileSnapshot ssvi_snapshot(double s, double theta, double psi,
                                   const std::vector<double>& strikes) {
  if (!(s > 0.0) || !std::isfinite(s))
    throw domain_error("ssvi_snapshot: requires s > 0");
  std::vector<double> calls(strikes.size());
  for (std::size_t i = 0; i < strikes.size(); ++i) {
    const double k = std::log(strikes[i] / s);
    const SsviSmilePoint point = ssvi_omega(theta, psi, k);
    calls[i] = s * bs_call(k, std::sqrt(point.omega));
  }
  return {s, strikes, calls};
}

// Simulates (S, theta) paths under constant-psi dynamics: exact lognormal S
// steps on the W channel, Euler theta steps on the independent Z channel.
// Stops at the first post-step state where theta leaves the band
// [1/band_n, band_n] (theta-band; covers theta <= 0) or drops strictly below
// frak_B_inverse(psi^2) (bound-crossing); otherwise runs to the horizon.
// Emits a smile snapshot for every state before the stop.
inline std::vector<SsviPath> ssvi_simulate(
    const SsviParams& p, const std::function<double(double)>& sigma,
    const std::vector<double>& strikes, const TimeGrid& grid,
    const SimConfig& cfg, double s0 = 1.0) {
  if (!(p.psi < 4.0))
    throw config_error("ssvi_simulate: bounded runs require psi < 4");
  const double bound = frak_B_inverse(p.psi * p.psi);
  if (!(p.theta0 > bound))
    throw config_error(
        "ssvi_simulate: requires theta0 > frak_B_inverse(psi^2)");
  if (!sigma) throw config_error("ssvi_simulate: sigma must be callable");
  if (!(s0 > 0.0) || !std::isfinite(s0))
    throw config_error("ssvi_simulate: requires s0 > 0");
  if (grid.horizon() > p.big_t)
    throw config_error("ssvi_simulate: grid extends past maturity");
  if (cfg.n_paths == 0) throw config_error("ssvi_simulate: n_paths == 0");
  if (!(cfg.band_n > 1.0))
    throw config_error("ssvi_simulate: requires band_n > 1");

  const SsviThetaDynamics dyn = ssvi_theta_drift_diffusion(p.psi);
  const double lower = 1.0 / cfg.band_n;
  const double upper = cfg.band_n;
  const double sqrt_dt = std::sqrt(grid.dt);

  std::vector<SsviPath> out(cfg.n_paths);
  CounterRng rng(cfg.master_seed);
  detail::parallel_paths(cfg.n_paths, cfg.workers, [&](std::size_t idx) {
    const std::uint64_t draw = cfg.antithetic ? idx / 2 : idx;
    const double sign = (cfg.antithetic && (idx & 1u)) ? -1.0 : 1.0;
    SsviPath& path = out[idx];
    path.times.reserve(grid.steps + 1);
    path.s.reserve(grid.steps + 1);
    path.theta.reserve(grid.steps + 1);

    double s = s0;
    double theta = p.theta0;
    bool stopped = false;
    const auto record = [&](std::size_t i, double t) {
      path.times.push_back(t);
      path.s.push_back(s);
      path.theta.push_back(theta);
      path.stop_index = i;
      if (theta <= lower || theta >= upper) {
        path.reason = SsviStopReason::theta_band;
        stopped = true;
      } else if (theta < bound) {
        path.reason = SsviStopReason::bound_crossing;
        stopped = true;
      } else {
        path.reason = SsviStopReason::horizon;
        path.smiles.push_back(ssvi_snapshot(s, theta, p.psi, strikes));
      }
    };

    record(0, 0.0);
    for (std::size_t i = 0; i < grid.steps && !stopped; ++i) {
      const double t = grid.time_at(i);
      const double sig = sigma(t);
      if (!std::isfinite(sig) || !(sig > 0.0))
        throw domain_error("ssvi_simulate: sigma must be finite and > 0");
      const double xw = sign * rng.normal(draw, static_cast<std::uint32_t>(i),
                                          kChannelAssetW);
      const double xz = sign * rng.normal(draw, static_cast<std::uint32_t>(i),
                                          kChannelVarianceZ);
      s = s * std::exp(sig * sqrt_dt * xw - 0.5 * sig * sig * grid.dt);
      theta = theta + dyn.drift_per_sigma2 * sig * sig * grid.dt +
              dyn.z_loading_per_sigma * sig * sqrt_dt * xz;
      if (!std::isfinite(s) || !(s > 0.0) || !std::isfinite(theta))
        throw std::runtime_error("ssvi_simulate: non-finite state");
      record(i + 1, grid.time_at(i + 1));
    }
  });
  return out;
}

inline std::vector<SsviPath> ssvi_simulate(const SsviParams& p,
                                           double const_sigma,
                                           const std::vector<double>& strikes,
                                           const TimeGrid& grid,
                                           const SimConfig& cfg,
                                           double s0 = 1.0) {
  return ssvi_simulate(
      p, [const_sigma](double) { return const_sigma; }, strikes, grid, cfg,
      s0);
}

}  // namespace irv

#endif  // IRV_SSVI_HPP
