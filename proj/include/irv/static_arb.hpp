#ifndef IRV_STATIC_ARB_HPP
#define IRV_STATIC_ARB_HPP

// Static-arbitrage checking of a call-price snapshot on a strike grid.
//
// check() evaluates the four grid conditions
//   1. (S - K_i)+ < C_i < S
//   2. -1 < (C_{i+1} - C_i)/(K_{i+1} - K_i) < 0
//   3. slopes nondecreasing across adjacent segments (non-strict)
//   4. -1 < (C_1 - S)/K_1 <= slope_1
// with strictness exactly as stated; a nonnegative tol relaxes every
// comparison by that much for noisy inputs.
//
// brute_force_oracle() independently certifies a snapshot by searching
// static buy-and-hold portfolios in (underlying, cash, calls): named
// candidates (covered calls, verticals, butterflies) first, then a small
// two-phase simplex over box-bounded weights.  A certificate is a portfolio
// with cost <= 0 whose payoff is nonnegative on a dense terminal grid and
// strictly positive somewhere.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "irv/errors.hpp"

namespace irv {

struct SmileSnapshot {
  double s = 0.0;
  std::vector<double> strikes;
  std::vector<double> calls;

  SmileSnapshot(double s_in, std::vector<double> strikes_in,
                std::vector<double> calls_in)
      : s(s_in), strikes(std::move(strikes_in)), calls(std::move(calls_in)) {
    if (!(s > 0.0) || !std::isfinite(s))
      throw config_error("SmileSnapshot: spot must be finite and > 0");
    if (strikes.empty())
      throw config_error("SmileSnapshot: needs at least one strike");
    if (strikes.size() != calls.size())
      throw config_error("SmileSnapshot: strikes/calls size mismatch");
    for (std::size_t i = 0; i < strikes.size(); ++i) {
      if (!(strikes[i] > 0.0) || !std::isfinite(strikes[i]))
        throw config_error("SmileSnapshot: strikes must be finite and > 0");
      if (i > 0 && !(strikes[i] > strikes[i - 1]))
        throw config_error("SmileSnapshot: strikes must be strictly "
                           "increasing");
      if (!(calls[i] >= 0.0) || !std::isfinite(calls[i]))
        throw config_error("SmileSnapshot: calls must be finite and >= 0");
    }
  }

  std::size_t size() const { return strikes.size(); }
};

namespace static_arb {

enum class ArbCondition { bounds, slope, convexity, first_slope };

inline const char* to_string(ArbCondition c) {
  switch (c) {
    case ArbCondition::bounds:
      return "bounds";
    case ArbCondition::slope:
      return "slope";
    case ArbCondition::convexity:
      return "convexity";
    default:
      return "first-slope";
  }
}

struct ViolationEntry {
  ArbCondition condition;
  // 1-based: strike index for bounds, left-strike index of the segment for
  // slope, left segment of the pair for convexity, 1 for first-slope.
  std::size_t index;
  // Depth of the violation, max(-margin, 0); zero when a strict inequality
  // fails exactly at its boundary.
  double magnitude;
};

struct ViolationReport {
  std::vector<ViolationEntry> entries;
  bool clean() const { return entries.empty(); }
};

inline ViolationReport check(const SmileSnapshot& snap, double tol = 0.0) {
  if (!(tol >= 0.0) || !std::isfinite(tol))
    throw domain_error("static_arb::check: tol must be finite and >= 0");
  ViolationReport rep;
  const std::size_t n = snap.size();
  const auto fail_strict = [&](double margin) { return margin <= -tol; };
  const auto fail_loose = [&](double margin) { return margin < -tol; };
  const auto add = [&](ArbCondition c, std::size_t idx, double margin) {
    rep.entries.push_back({c, idx, std::max(-margin, 0.0)});
  };

  for (std::size_t i = 0; i < n; ++i) {
    const double intrinsic = std::max(snap.s - snap.strikes[i], 0.0);
    const double lo = snap.calls[i] - intrinsic;
    const double hi = snap.s - snap.calls[i];
    if (fail_strict(lo)) add(ArbCondition::bounds, i + 1, lo);
    if (fail_strict(hi)) add(ArbCondition::bounds, i + 1, hi);
  }
  if (n < 2) return rep;

  std::vector<double> slope(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    slope[i] = (snap.calls[i + 1] - snap.calls[i]) /
               (snap.strikes[i + 1] - snap.strikes[i]);
    const double lo = slope[i] + 1.0;
    const double hi = -slope[i];
    if (fail_strict(lo)) add(ArbCondition::slope, i + 1, lo);
    if (fail_strict(hi)) add(ArbCondition::slope, i + 1, hi);
  }
  for (std::size_t i = 0; i + 2 < n; ++i) {
    const double margin = slope[i + 1] - slope[i];
    if (fail_loose(margin)) add(ArbCondition::convexity, i + 1, margin);
  }
  const double first = (snap.calls[0] - snap.s) / snap.strikes[0];
  if (fail_strict(first + 1.0)) add(ArbCondition::first_slope, 1, first + 1.0);
  if (fail_loose(slope[0] - first))
    add(ArbCondition::first_slope, 1, slope[0] - first);
  return rep;
}

// ---------------------------------------------------------------------------
// Brute-force portfolio oracle
// ---------------------------------------------------------------------------

struct OracleConfig {
  double weight_bound = 10.0;  // per-position weight in [-bound, bound]
  int grid_points = 2001;      // terminal-price validation grid on [0, 3 max]
  double declare_tol = 1e-9;   // strictly-positive-payoff threshold (scaled)
  int max_pivots = 20000;      // simplex budget before declaring inconclusive
};

enum class OracleOutcome { absent, arbitrage, inconclusive };

struct ArbCertificate {
  std::string family;  // candidate family or LP phase that produced it
  double w_underlying = 0.0;
  double w_cash = 0.0;
  std::vector<double> w_calls;
  double cost = 0.0;
  double min_payoff = 0.0;
  double max_payoff = 0.0;
  double witness_s = 0.0;  // grid point with strictly positive payoff
};

struct OracleResult {
  OracleOutcome outcome = OracleOutcome::absent;
  ArbCertificate certificate;  // meaningful when outcome == arbitrage
};

namespace detail {

enum class LpStatus { optimal, unbounded, infeasible, iteration_limit };

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  std::vector<double> x;
  double objective = 0.0;
};

// Dense two-phase primal simplex with Bland's rule:
//   maximize c.x  subject to  A x <= b, x >= 0.
inline LpResult solve_lp_max(const std::vector<std::vector<double>>& a,
                             const std::vector<double>& b,
                             const std::vector<double>& c, int max_pivots) {
  constexpr double kEps = 1e-9;
  const std::size_t m = a.size();
  const std::size_t n = c.size();
  // Columns: n structural, m slack, then one artificial per negative-rhs
  // row; the last column is the rhs.
  std::size_t n_art = 0;
  for (double v : b)
    if (v < 0.0) ++n_art;
  const std::size_t cols = n + m + n_art;
  std::vector<std::vector<double>> t(m, std::vector<double>(cols + 1, 0.0));
  std::vector<std::size_t> basis(m);
  std::size_t art = n + m;
  for (std::size_t i = 0; i < m; ++i) {
    const double flip = b[i] < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) t[i][j] = flip * a[i][j];
    t[i][n + i] = flip;
    t[i][cols] = flip * b[i];
    if (b[i] < 0.0) {
      t[i][art] = 1.0;
      basis[i] = art++;
    } else {
      basis[i] = n + i;
    }
  }

  int pivots = 0;
  // Runs Bland-rule pivoting on the objective vector `obj` restricted to
  // `active` columns; returns false on iteration exhaustion.
  const auto run = [&](const std::vector<double>& obj, std::size_t active,
                       bool& unbounded) -> bool {
    unbounded = false;
    std::vector<double> red(active);
    while (true) {
      // Reduced costs: obj_j - obj_B . column_j.
      for (std::size_t j = 0; j < active; ++j) {
        double z = 0.0;
        for (std::size_t i = 0; i < m; ++i) z += obj[basis[i]] * t[i][j];
        red[j] = obj[j] - z;
      }
      std::size_t enter = active;
      for (std::size_t j = 0; j < active; ++j) {
        bool basic = false;
        for (std::size_t i = 0; i < m; ++i)
          if (basis[i] == j) basic = true;
        if (!basic && red[j] > kEps) {
          enter = j;
          break;  // Bland: first improving index
        }
      }
      if (enter == active) return true;  // optimal
      std::size_t leave = m;
      double best = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (t[i][enter] > kEps) {
          const double ratio = t[i][cols] / t[i][enter];
          if (leave == m || ratio < best - 1e-15 ||
              (std::fabs(ratio - best) <= 1e-15 &&
               basis[i] < basis[leave])) {
            leave = i;
            best = ratio;
          }
        }
      }
      if (leave == m) {
        unbounded = true;
        return true;
      }
      if (++pivots > max_pivots) return false;
      const double piv = t[leave][enter];
      for (std::size_t j = 0; j <= cols; ++j) t[leave][j] /= piv;
      for (std::size_t i = 0; i < m; ++i) {
        if (i == leave) continue;
        const double f = t[i][enter];
        if (f == 0.0) continue;
        for (std::size_t j = 0; j <= cols; ++j) t[i][j] -= f * t[leave][j];
      }
      basis[leave] = enter;
    }
  };

  LpResult out;
  bool unbounded = false;
  if (n_art > 0) {
    std::vector<double> obj1(cols, 0.0);
    for (std::size_t j = n + m; j < cols; ++j) obj1[j] = -1.0;
    if (!run(obj1, cols, unbounded)) {
      out.status = LpStatus::iteration_limit;
      return out;
    }
    double infeas = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      if (basis[i] >= n + m) infeas += t[i][cols];
    if (infeas > 1e-7) {
      out.status = LpStatus::infeasible;
      return out;
    }
    // Pivot any degenerate artificial out of the basis when possible.
    for (std::size_t i = 0; i < m; ++i) {
      if (basis[i] < n + m) continue;
      for (std::size_t j = 0; j < n + m; ++j) {
        if (std::fabs(t[i][j]) > kEps) {
          const double piv = t[i][j];
          for (std::size_t jj = 0; jj <= cols; ++jj) t[i][jj] /= piv;
          for (std::size_t ii = 0; ii < m; ++ii) {
            if (ii == i) continue;
            const double f = t[ii][j];
            if (f == 0.0) continue;
            for (std::size_t jj = 0; jj <= cols; ++jj)
              t[ii][jj] -= f * t[i][jj];
          }
          basis[i] = j;
          break;
        }
      }
    }
  }
  std::vector<double> obj2(cols, 0.0);
  for (std::size_t j = 0; j < n; ++j) obj2[j] = c[j];
  if (!run(obj2, n + m, unbounded)) {
    out.status = LpStatus::iteration_limit;
    return out;
  }
  if (unbounded) {
    out.status = LpStatus::unbounded;
    return out;
  }
  out.status = LpStatus::optimal;
  out.x.assign(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    if (basis[i] < n) out.x[basis[i]] = t[i][cols];
  out.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) out.objective += c[j] * out.x[j];
  return out;
}

// Portfolio payoff at terminal price p: w_u p + w_cash + sum w_i (p - K_i)+.
inline double portfolio_payoff(const SmileSnapshot& snap, double w_u,
                               double w_cash, const std::vector<double>& w,
                               double p) {
  double v = w_u * p + w_cash;
  for (std::size_t i = 0; i < snap.size(); ++i)
    v += w[i] * std::max(p - snap.strikes[i], 0.0);
  return v;
}

inline double portfolio_cost(const SmileSnapshot& snap, double w_u,
                             double w_cash, const std::vector<double>& w) {
  double v = w_u * snap.s + w_cash;
  for (std::size_t i = 0; i < snap.size(); ++i) v += w[i] * snap.calls[i];
  return v;
}

}  // namespace detail

// Searches for a static arbitrage certificate.  Completeness within the
// weight box comes from the final linear programs: phase A minimizes cost
// subject to nonnegative payoff, phase B maximizes payoff subject to
// nonpositive cost.  Payoff nonnegativity is imposed exactly through the
// payoff kinks {0, K_1..K_N, 3 max(K_N, s)} (piecewise linearity) together
// with a nonnegative asymptotic payoff slope, which extends the guarantee
// from the truncated grid to every terminal level.  Every candidate is
// validated on the dense terminal grid before being returned.
inline OracleResult brute_force_oracle(const SmileSnapshot& snap,
                                       const OracleConfig& cfg = {}) {
  if (snap.size() > 8)
    throw domain_error("brute_force_oracle: desk scale is N <= 8");
  if (!(cfg.weight_bound > 0.0) || cfg.grid_points < 3)
    throw domain_error("brute_force_oracle: bad search budget");
  const std::size_t n = snap.size();
  const double m_end = 3.0 * std::max(snap.strikes.back(), snap.s);
  const double scale =
      std::max({1.0, snap.s, snap.strikes.back(),
                *std::max_element(snap.calls.begin(), snap.calls.end())});
  const double tol_zero = 1e-12 * scale;
  const double tol_pos = cfg.declare_tol * scale;

  OracleResult result;
  // Validates a candidate on the dense grid and promotes it to the result
  // when it is a genuine weak arbitrage.
  const auto accept = [&](const std::string& family, double w_u, double w_cash,
                          const std::vector<double>& w) -> bool {
    // Candidate costs are the same floating-point margins the checker
    // tests, so a plain sign test keeps the two in exact agreement; a
    // positive-cost candidate is a cheap lottery ticket, not an arbitrage.
    const double cost = detail::portfolio_cost(snap, w_u, w_cash, w);
    if (!(cost <= 0.0)) return false;
    // Beyond the last strike the payoff is linear forever; a negative slope
    // there would eventually push it below zero off the validation grid.
    double slope_inf = w_u;
    for (double v : w) slope_inf += v;
    if (slope_inf < -1e-11) return false;
    double min_p = 0.0, max_p = 0.0, witness = 0.0;
    for (int g = 0; g < cfg.grid_points; ++g) {
      const double p = m_end * g / (cfg.grid_points - 1);
      const double v = detail::portfolio_payoff(snap, w_u, w_cash, w, p);
      if (g == 0 || v < min_p) min_p = v;
      if (g == 0 || v > max_p) {
        max_p = v;
        witness = p;
      }
    }
    if (min_p < -tol_zero) return false;
    if (!(max_p > tol_pos || cost < -tol_pos)) return false;
    result.outcome = OracleOutcome::arbitrage;
    result.certificate =
        {family, w_u, w_cash, w, cost, min_p, max_p, witness};
    return true;
  };

  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(w.begin(), w.end(), 0.0);
    w[i] = -1.0;  // short call, long underlying: fires when C_i >= S
    if (accept("covered-call", 1.0, 0.0, w)) return result;
    w[i] = 1.0;  // long call, short underlying, K_i cash: C_i <= S - K_i
    if (accept("intrinsic", -1.0, snap.strikes[i], w)) return result;
    if (accept("long-call", 0.0, 0.0, w)) return result;  // C_i <= 0
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    std::fill(w.begin(), w.end(), 0.0);
    w[i] = 1.0;
    w[i + 1] = -1.0;  // fires when the slope is >= 0
    if (accept("vertical", 0.0, 0.0, w)) return result;
    w[i] = -1.0;
    w[i + 1] = 1.0;  // plus cash: fires when the slope is <= -1
    if (accept("vertical-cash", 0.0, snap.strikes[i + 1] - snap.strikes[i], w))
      return result;
  }
  for (std::size_t i = 0; i + 2 < n; ++i) {
    const double d1 = snap.strikes[i + 1] - snap.strikes[i];
    const double d2 = snap.strikes[i + 2] - snap.strikes[i + 1];
    std::fill(w.begin(), w.end(), 0.0);
    w[i] = d2 / (d1 + d2);
    w[i + 1] = -1.0;
    w[i + 2] = d1 / (d1 + d2);
    if (accept("butterfly", 0.0, 0.0, w)) return result;
  }
  if (n >= 2) {
    // Butterfly on virtual strike 0 (the underlying), K_1, K_2.
    const double d1 = snap.strikes[0];
    const double d2 = snap.strikes[1] - snap.strikes[0];
    std::fill(w.begin(), w.end(), 0.0);
    w[0] = -1.0;
    w[1] = d1 / (d1 + d2);
    if (accept("first-slope-butterfly", d2 / (d1 + d2), 0.0, w)) return result;
  }

  // LP over shifted weights x = w + B in [0, 2B], with payoff nonnegativity
  // imposed at the payoff kinks {0, K_1..K_N, M}.
  const std::size_t nv = n + 2;  // underlying, cash, calls
  const double bound = cfg.weight_bound;
  std::vector<double> q(nv);
  q[0] = snap.s;
  q[1] = 1.0;
  for (std::size_t i = 0; i < n; ++i) q[2 + i] = snap.calls[i];
  std::vector<double> kinks;
  kinks.push_back(0.0);
  for (double k : snap.strikes) kinks.push_back(k);
  kinks.push_back(m_end);
  const auto payoff_row = [&](double p) {
    std::vector<double> row(nv);
    row[0] = p;
    row[1] = 1.0;
    for (std::size_t i = 0; i < n; ++i)
      row[2 + i] = std::max(p - snap.strikes[i], 0.0);
    return row;
  };
  const auto lp_to_weights = [&](const std::vector<double>& x) {
    std::vector<double> wc(n);
    for (std::size_t i = 0; i < n; ++i) wc[i] = x[2 + i] - bound;
    double w_u = x[0] - bound;
    double w_cash = x[1] - bound;
    // Arbitrage is positively homogeneous, so rescale to unit max weight.
    // This keeps the acceptance tolerances meaningful: a near-zero vertex
    // that only looks profitable through leverage on a nearly-free option
    // blows past the cost tolerance once scaled up.
    double m = std::max(std::fabs(w_u), std::fabs(w_cash));
    for (double v : wc) m = std::max(m, std::fabs(v));
    if (m > 0.0) {
      w_u /= m;
      w_cash /= m;
      for (double& v : wc) v /= m;
    }
    return std::tuple<double, double, std::vector<double>>(w_u, w_cash, wc);
  };

  std::vector<std::vector<double>> a;
  std::vector<double> b;
  for (double p : kinks) {
    auto row = payoff_row(p);
    double r = 0.0;
    for (double v : row) r += v * bound;
    for (double& v : row) v = -v;
    a.push_back(row);  // -payoff(x) <= -r  <=>  payoff(w) >= 0
    b.push_back(-r);
  }
  {
    // Asymptotic slope w_u + sum of call weights must stay nonnegative.
    std::vector<double> row(nv, 0.0);
    row[0] = -1.0;
    for (std::size_t i = 0; i < n; ++i) row[2 + i] = -1.0;
    a.push_back(row);
    b.push_back(-(1.0 + static_cast<double>(n)) * bound);
  }
  for (std::size_t j = 0; j < nv; ++j) {
    std::vector<double> row(nv, 0.0);
    row[j] = 1.0;
    a.push_back(row);
    b.push_back(2.0 * bound);
  }

  bool hit_limit = false;
  {
    std::vector<double> c(nv);
    for (std::size_t j = 0; j < nv; ++j) c[j] = -q[j];  // minimize cost
    const auto lp = detail::solve_lp_max(a, b, c, cfg.max_pivots);
    if (lp.status == detail::LpStatus::optimal) {
      const auto [w_u, w_cash, wc] = lp_to_weights(lp.x);
      if (accept("lp-min-cost", w_u, w_cash, wc)) return result;
    } else {
      hit_limit = true;
    }
  }
  {
    auto a2 = a;
    auto b2 = b;
    double theta = 0.0;
    for (double v : q) theta += v * bound;
    a2.push_back(q);  // cost(w) <= 0  <=>  q.x <= theta
    b2.push_back(theta);
    std::vector<double> c(nv, 0.0);
    for (double p : kinks) {
      const auto row = payoff_row(p);
      for (std::size_t j = 0; j < nv; ++j) c[j] += row[j];
    }
    const auto lp = detail::solve_lp_max(a2, b2, c, cfg.max_pivots);
    if (lp.status == detail::LpStatus::optimal) {
      const auto [w_u, w_cash, wc] = lp_to_weights(lp.x);
      if (accept("lp-max-payoff", w_u, w_cash, wc)) return result;
    } else {
      hit_limit = true;
    }
  }
  result.outcome =
      hit_limit ? OracleOutcome::inconclusive : OracleOutcome::absent;
  return result;
}

}  // namespace static_arb
}  // namespace irv

#endif  // IRV_STATIC_ARB_HPP
