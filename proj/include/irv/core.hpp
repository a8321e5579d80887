#ifndef IRV_CORE_HPP
#define IRV_CORE_HPP

// Core implied-remaining-variance algebra: the drift that makes the
// normalized call a local martingale for given diffusion loadings, the same
// relation in Carr-Sun coordinates, the mapping between the two, and the
// band-exit utility shared by the simulators.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>

#include "irv/errors.hpp"

namespace irv {

struct MasterLoadings {
  double b;  // loading on the omega-own Brownian driver
  double c;  // loading on the asset Brownian driver
};

// Drift coefficient a(b, c, omega, k) that removes the dt term of the
// normalized call under d(omega) = a s^2 dt + b omega s dZ + c omega s dW.
inline double no_drift_a(double b, double c, double omega, double k) {
  const double q = b * b + c * c;
  return (q / 16.0) * omega * omega + ((q - 2.0 * c) / 4.0) * omega -
         ((q / 4.0) * k * k + c * k + 1.0);
}

// Same relation expressed in Carr-Sun coordinates, where the variance
// diffusion is written b_cs(omega) against a single correlated driver with
// correlation rho to the asset.
inline double cs_no_drift_a(double b_cs, double rho, double omega, double k) {
  if (!(omega > 0.0)) throw domain_error("cs_no_drift_a: omega must be > 0");
  const double b2 = b_cs * b_cs;
  return -(1.0 + 0.5 * rho * b_cs - (1.0 / omega + 0.25) * b2 / 4.0 +
           rho * k * b_cs / omega + k * k * b2 / (4.0 * omega * omega));
}

// Splits a Carr-Sun diffusion into orthogonal master loadings:
// c picks up the asset-correlated part, b the orthogonal remainder.
inline MasterLoadings carr_sun_to_master(double b_cs, double rho,
                                         double omega) {
  if (!(omega > 0.0))
    throw domain_error("carr_sun_to_master: omega must be > 0");
  if (!(std::fabs(rho) <= 1.0))
    throw domain_error("carr_sun_to_master: rho must be in [-1, 1]");
  const double scale = b_cs / omega;
  return {std::sqrt(1.0 - rho * rho) * scale, rho * scale};
}

// First index whose value lies outside the open band (1/n, n), if any.
inline std::optional<std::size_t> band_hit(std::span<const double> omega,
                                           double n) {
  if (!(n > 1.0)) throw domain_error("band_hit: band parameter must be > 1");
  const double lower = 1.0 / n;
  for (std::size_t i = 0; i < omega.size(); ++i) {
    if (omega[i] <= lower || omega[i] >= n) return i;
  }
  return std::nullopt;
}

}  // namespace irv

#endif  // IRV_CORE_HPP
