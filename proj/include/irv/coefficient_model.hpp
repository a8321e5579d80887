#ifndef IRV_COEFFICIENT_MODEL_HPP
#define IRV_COEFFICIENT_MODEL_HPP

// Coefficient models feed the simulator the instantaneous volatility and the
// two diffusion loadings of the remaining-variance process at a given state.
// The drift is normally derived from the no-drift relation; a model may
// instead supply an explicit drift (used by deliberately mis-specified
// negative controls).

#include <cmath>
#include <functional>
#include <limits>
#include <utility>

#include "irv/core.hpp"
#include "irv/errors.hpp"

namespace irv {

struct IrvState {
  double t;      // grid time
  double s;      // spot
  double omega;  // implied remaining variance at this strike
  double k;      // log-moneyness ln(strike / s)
  // Opaque auxiliary slot for models driven by an extra factor.
  double aux = std::numeric_limits<double>::quiet_NaN();
};

struct ModelEval {
  double sigma;              // instantaneous volatility (sign may be negative)
  double b;                  // loading on the variance-own driver Z
  double c;                  // loading on the asset driver W
  bool derive_drift = true;  // true: use no_drift_a(b, c, omega, k)
  double a = 0.0;            // explicit drift when derive_drift is false
};

class CoefficientModel {
 public:
  virtual ~CoefficientModel() = default;
  virtual ModelEval eval(const IrvState& state) const = 0;
  // Evaluations must happen strictly before this time.
  virtual double maturity() const {
    return std::numeric_limits<double>::infinity();
  }
};

// Deterministic-volatility model: b = c = 0, so the no-drift relation
// reduces to d(omega) = -sigma(t)^2 dt and the variance path is the exact
// decrement of the integrated squared volatility.
class BlackScholesModel final : public CoefficientModel {
 public:
  // sigma_sq_integral(t) must equal the exact antiderivative of sigma^2 on
  // [0, t]; it backs the closed-form variance audit, not the simulation.
  BlackScholesModel(std::function<double(double)> sigma,
                    std::function<double(double)> sigma_sq_integral)
      : sigma_(std::move(sigma)),
        sigma_sq_integral_(std::move(sigma_sq_integral)) {
    if (!sigma_ || !sigma_sq_integral_)
      throw domain_error("BlackScholesModel: missing volatility hooks");
  }

  ModelEval eval(const IrvState& state) const override {
    const double sig = sigma_(state.t);
    if (!std::isfinite(sig))
      throw domain_error("BlackScholesModel: sigma(t) not finite");
    return {sig, 0.0, 0.0, true, 0.0};
  }

  // Closed-form remaining variance omega0 - integral of sigma^2 over [0, t].
  double omega_at(double t, double omega0) const {
    return omega0 - sigma_sq_integral_(t);
  }

 private:
  std::function<double(double)> sigma_;
  std::function<double(double)> sigma_sq_integral_;
};

inline BlackScholesModel black_scholes_model(double const_sigma) {
  const double s2 = const_sigma * const_sigma;
  return BlackScholesModel([const_sigma](double) { return const_sigma; },
                           [s2](double t) { return s2 * t; });
}

// sigma(t) = c0 + c1 t with the exact antiderivative of its square.
inline BlackScholesModel black_scholes_model_affine(double c0, double c1) {
  return BlackScholesModel(
      [c0, c1](double t) { return c0 + c1 * t; },
      [c0, c1](double t) {
        return c0 * c0 * t + c0 * c1 * t * t + c1 * c1 * t * t * t / 3.0;
      });
}

// Constant-coefficient model: fixed volatility and loadings, with the drift
// either derived from the no-drift relation or pinned to an explicit
// constant.  Explicit-drift instances are deliberately mis-specified
// negative controls (a = 0 removes the drift correction entirely).
class ConstantCoefficientModel final : public CoefficientModel {
 public:
  static ConstantCoefficientModel derived(double sigma, double b, double c) {
    return ConstantCoefficientModel(sigma, b, c, true, 0.0);
  }

  static ConstantCoefficientModel with_explicit_drift(double sigma, double b,
                                                      double c, double a) {
    return ConstantCoefficientModel(sigma, b, c, false, a);
  }

  ModelEval eval(const IrvState&) const override {
    return {sigma_, b_, c_, derive_drift_, a_};
  }

 private:
  ConstantCoefficientModel(double sigma, double b, double c, bool derive,
                           double a)
      : sigma_(sigma), b_(b), c_(c), derive_drift_(derive), a_(a) {
    if (!std::isfinite(sigma) || !std::isfinite(b) || !std::isfinite(c) ||
        !std::isfinite(a))
      throw domain_error("ConstantCoefficientModel: inputs must be finite");
  }

  double sigma_;
  double b_;
  double c_;
  bool derive_drift_;
  double a_;
};

// One-dimensional sub-family with user hooks g1(t) and w1(k):
//   X = omega / (T - t)
//   v1 = s / (1 + X + s^2) * w1(k)
//   sigma1 = -(k/2) v1 + sqrt(X) (1 + (T - t) g1(t))
//   loadings b = 0, c = v1 / sigma1; drift from the no-drift relation.
// sigma1 may legitimately be negative; only sigma1^2 and the products
// b*omega*sigma1, c*omega*sigma1 enter the dynamics, which are invariant
// under a joint sign flip of sigma1 and the asset driver.
class SwSubfamilyModel final : public CoefficientModel {
 public:
  SwSubfamilyModel(double big_t, std::function<double(double)> g1,
                   std::function<double(double)> w1)
      : big_t_(big_t), g1_(std::move(g1)), w1_(std::move(w1)) {
    if (!(big_t > 0.0) || !std::isfinite(big_t))
      throw domain_error("SwSubfamilyModel: T must be finite and > 0");
    if (!g1_ || !w1_) throw domain_error("SwSubfamilyModel: missing hooks");
  }

  ModelEval eval(const IrvState& state) const override {
    if (!(state.t < big_t_))
      throw domain_error("SwSubfamilyModel: t must be < T");
    const double ttm = big_t_ - state.t;
    const double x = state.omega / ttm;
    const double v1 = state.s / (1.0 + x + state.s * state.s) * w1_(state.k);
    const double sigma1 =
        -0.5 * state.k * v1 + std::sqrt(x) * (1.0 + ttm * g1_(state.t));
    if (!(std::fabs(sigma1) >= 1e-12))
      throw singular_model_error("SwSubfamilyModel: vanishing volatility");
    return {sigma1, 0.0, v1 / sigma1, true, 0.0};
  }

  double maturity() const override { return big_t_; }

 private:
  double big_t_;
  std::function<double(double)> g1_;
  std::function<double(double)> w1_;
};

inline SwSubfamilyModel sw_subfamily_model(double big_t,
                                           std::function<double(double)> g1,
                                           std::function<double(double)> w1) {
  return SwSubfamilyModel(big_t, std::move(g1), std::move(w1));
}

// sgn with sgn(0) = 0, the convention used by the sub-family hooks.
inline double sign_of(double x) {
  return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
}

}  // namespace irv

#endif  // IRV_COEFFICIENT_MODEL_HPP
