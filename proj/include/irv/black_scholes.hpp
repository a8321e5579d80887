#ifndef IRV_BLACK_SCHOLES_HPP
#define IRV_BLACK_SCHOLES_HPP

// Dimensionless Black-Scholes kernel in log-moneyness k = ln(K/S) and root
// variance v = sqrt(omega).  Prices are normalized by spot: c = C / S.

#include <algorithm>
#include <cmath>
#include <limits>

#include "irv/errors.hpp"

namespace irv {

inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

inline double norm_pdf(double x) {
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// Lower-tail log CDF, stable for arbitrarily negative x.
inline double ln_norm_cdf(double x) {
  if (x > -37.0) return std::log(norm_cdf(x));
  const double x2 = x * x;
  const double mills = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x) + std::log(kInvSqrt2Pi * mills);
}

struct DPair {
  double d_plus;
  double d_minus;
};

// d_minus is formed as d_plus - v so the identity d_plus - d_minus = v is
// exact in floating point.
inline DPair d_pair(double k, double v) {
  if (!std::isfinite(k)) throw domain_error("d_pair: k must be finite");
  if (!(v > 0.0) || !std::isfinite(v))
    throw domain_error("d_pair: v must be finite and > 0");
  const double d_plus = -k / v + 0.5 * v;
  return {d_plus, d_plus - v};
}

// Normalized call price BS(k, v).  v may be +infinity (saturated price 1).
// The result is clamped into the arbitrage band [(1 - e^k)+, 1]: the exact
// value always lies inside it, but the two-term formula can round one ulp
// past an endpoint in the saturated tails.
inline double bs_call(double k, double v) {
  if (!std::isfinite(k)) throw domain_error("bs_call: k must be finite");
  if (std::isnan(v) || v < 0.0) throw domain_error("bs_call: v must be >= 0");
  const double floor = k < 0.0 ? -std::expm1(k) : 0.0;
  if (std::isinf(v)) return 1.0;
  if (v == 0.0) return floor;
  const DPair d = d_pair(k, v);
  double itm_term;
  if (d.d_minus <= -37.0 || k >= 690.0)
    itm_term = std::exp(k + ln_norm_cdf(d.d_minus));
  else
    itm_term = std::exp(k) * norm_cdf(d.d_minus);
  const double c = norm_cdf(d.d_plus) - itm_term;
  return std::min(1.0, std::max(c, floor));
}

// Normalized put price BS_P(k, v) = e^k N(-d_minus) - N(-d_plus), clamped
// into its band [(e^k - 1)+, e^k] for the same reason as bs_call.
inline double bs_put(double k, double v) {
  if (!std::isfinite(k)) throw domain_error("bs_put: k must be finite");
  if (std::isnan(v) || v < 0.0) throw domain_error("bs_put: v must be >= 0");
  const double floor = k > 0.0 ? std::expm1(k) : 0.0;
  if (std::isinf(v)) return std::exp(k);
  if (v == 0.0) return floor;
  const DPair d = d_pair(k, v);
  const double p = std::exp(k) * norm_cdf(-d.d_minus) - norm_cdf(-d.d_plus);
  return std::min(std::exp(k), std::max(p, floor));
}

// dBS/dv = phi(d_plus); also equals e^k phi(d_minus).
inline double bs_vega(double k, double v) {
  return norm_pdf(d_pair(k, v).d_plus);
}

// Root variance with a tagged point at infinity (price at the upper bound).
// The infinite root is never represented as a raw double infinity so that it
// cannot leak into downstream arithmetic unnoticed.
struct RootVariance {
  double value = 0.0;
  bool unbounded = false;

  static RootVariance finite(double v) { return {v, false}; }
  static RootVariance at_infinity() { return {0.0, true}; }
};

// Inverts c = BS(k, v) for v.  The admissible price range is
// [(1 - e^k)+, 1]; inputs within 1e-14 of either endpoint are snapped to the
// boundary root (0 or the tagged infinity), anything further outside is
// rejected.  An optional warm-start guess accelerates repeated inversions
// along a path.
inline RootVariance implied_root_variance(
    double k, double c,
    double guess = std::numeric_limits<double>::quiet_NaN()) {
  if (!std::isfinite(k))
    throw domain_error("implied_root_variance: k must be finite");
  if (!std::isfinite(c))
    throw domain_error("implied_root_variance: c must be finite");
  const double snap = 1e-14;
  const double lo = k < 0.0 ? -std::expm1(k) : 0.0;
  if (c < lo - snap || c > 1.0 + snap)
    throw domain_error("implied_root_variance: price outside [(1-e^k)+, 1]");
  if (c <= lo + snap) return RootVariance::finite(0.0);
  if (c >= 1.0 - snap) return RootVariance::at_infinity();

  double v_lo = 0.0;
  double v_hi = 2.0;
  while (bs_call(k, v_hi) < c && v_hi < 1024.0) v_hi *= 2.0;

  const double eps = std::numeric_limits<double>::epsilon();
  double v = 0.5 * (v_lo + v_hi);
  if (std::isfinite(guess) && guess > v_lo && guess < v_hi) v = guess;
  for (int it = 0; it < 200; ++it) {
    const double f = bs_call(k, v) - c;
    if (f == 0.0) return RootVariance::finite(v);
    if (f > 0.0)
      v_hi = v;
    else
      v_lo = v;
    if (v_hi - v_lo <= eps * v_hi) break;
    const double vega = bs_vega(k, v);
    double v_next = vega > 1e-300 ? v - f / vega : std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(v_next) || v_next <= v_lo || v_next >= v_hi)
      v_next = 0.5 * (v_lo + v_hi);
    if (std::fabs(v_next - v) <= eps * v) return RootVariance::finite(v_next);
    v = v_next;
  }
  return RootVariance::finite(0.5 * (v_lo + v_hi));
}

}  // namespace irv

#endif  // IRV_BLACK_SCHOLES_HPP
