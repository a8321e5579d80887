#ifndef IRV_CARR_SUN_HPP
#define IRV_CARR_SUN_HPP

// Carr-Sun style implied-remaining-variance model with affine drift
//   a(omega) = -a1 omega + a0 - 1,   b(omega) = omega,
// its closed-form smile, and an algebraic audit that exposes why the smile
// is inconsistent with the model's own dynamics.  Everything here is
// coefficient matching: drifts are reported per sigma^2 and Brownian
// loadings per sigma, since the spot volatility scale cancels from the
// consistency question.

#include <cmath>

#include "irv/errors.hpp"

namespace irv {

struct CarrSunParams {
  double a0;
  double a1;
  double rho;

  CarrSunParams(double a0_in, double a1_in, double rho_in)
      : a0(a0_in), a1(a1_in), rho(rho_in) {
    if (!std::isfinite(a0) || !std::isfinite(a1) || !std::isfinite(rho))
      throw admissibility_error("CarrSunParams: inputs must be finite");
    if (!(rho >= -1.0 && rho <= 1.0))
      throw admissibility_error("CarrSunParams: requires rho in [-1, 1]");
    if (!(a0 > rho * rho))
      throw admissibility_error("CarrSunParams: requires a0 > rho^2");
    if (!(1.0 - 2.0 * rho + 4.0 * a1 >= 0.0))
      throw admissibility_error(
          "CarrSunParams: requires 1 - 2*rho + 4*a1 >= 0");
  }
};

// Drift per sigma^2 the model itself prescribes at variance level omega.
inline double cs_drift_fn(double omega, const CarrSunParams& p) {
  return -p.a1 * omega + p.a0 - 1.0;
}

// Quarter-discriminant of the smile quadratic; positive for admissible
// parameters since a0 > rho^2.
inline double cs_discriminant(double k, const CarrSunParams& p) {
  const double lin = 1.0 - 2.0 * p.rho + 4.0 * p.a1;
  return k * k + 4.0 * p.rho * k + 4.0 * p.a0 + lin * lin;
}

// Unique positive root of
//   omega^2 + 4(1 - 2 rho + 4 a1) omega - 4(4 a0 + 4 rho k + k^2) = 0.
inline double cs_smile(double k, const CarrSunParams& p) {
  if (!std::isfinite(k)) throw domain_error("cs_smile: k must be finite");
  return 2.0 * (2.0 * p.rho - 1.0 - 4.0 * p.a1 + std::sqrt(cs_discriminant(k, p)));
}

struct CsAuditReport {
  double k = 0.0;
  double smile_omega = 0.0;
  // Ito coefficients of the smile viewed as a function of k: drift per
  // sigma^2 and loading on the asset Brownian motion per sigma.
  double ito_drift = 0.0;
  double ito_w_loading = 0.0;
  // Drift per sigma^2 prescribed by the model dynamics at smile_omega.
  double model_drift = 0.0;
  // Magnitude of the smile's loading on the component of W orthogonal to Z;
  // the model dynamics carry no such term, so any nonzero value is an
  // inconsistency witness.  For rho = 0 this is the full W-loading, since
  // the two dynamics are then driven by independent Brownian motions.
  double orthogonal_mismatch = 0.0;
  // For rho = +-1 only: the quartic coefficient 1/(4 sqrt(D)) that the
  // coefficient-matching system requires to vanish but which is strictly
  // positive; zero for |rho| < 1 where the orthogonal branch applies.
  double residual_quartic_term = 0.0;
};

// Ito-expands the smile at log-moneyness k and compares against the model
// dynamics.  The asset follows dS = sigma S dW, so dk = -sigma dW +
// (sigma^2/2) dt and the chain rule gives, per sigma^2 and sigma:
//   drift   = (1/sqrt(D)) [1 + 2 rho + k - (2 rho + k)^2 / D]
//   loading = -2 (2 rho + k) / sqrt(D)      (on W)
// The model's own diffusion rides on Z, so the smile is consistent only if
// its W-loading has no component orthogonal to Z.
inline CsAuditReport cs_ito_audit(double k, const CarrSunParams& p) {
  if (!std::isfinite(k)) throw domain_error("cs_ito_audit: k must be finite");
  CsAuditReport rep;
  rep.k = k;
  const double d = cs_discriminant(k, p);
  const double sqrt_d = std::sqrt(d);
  const double two_rho_k = 2.0 * p.rho + k;
  rep.smile_omega = cs_smile(k, p);
  rep.ito_drift = (1.0 + 2.0 * p.rho + k - two_rho_k * two_rho_k / d) / sqrt_d;
  rep.ito_w_loading = -2.0 * two_rho_k / sqrt_d;
  rep.model_drift = cs_drift_fn(rep.smile_omega, p);
  if (p.rho == 0.0) {
    rep.orthogonal_mismatch = std::fabs(rep.ito_w_loading);
  } else if (p.rho == 1.0 || p.rho == -1.0) {
    rep.orthogonal_mismatch = 0.0;
    rep.residual_quartic_term = 1.0 / (4.0 * sqrt_d);
  } else {
    rep.orthogonal_mismatch =
        std::fabs(rep.ito_w_loading) * std::sqrt(1.0 / (p.rho * p.rho) - 1.0);
  }
  return rep;
}

}  // namespace irv

#endif  // IRV_CARR_SUN_HPP
