#ifndef IRV_SDE_ENGINE_HPP
#define IRV_SDE_ENGINE_HPP

// Stopped Euler simulator for the implied-remaining-variance dynamics
//   dS = sigma S dW
//   d(omega) = a sigma^2 dt + b omega sigma dZ + c omega sigma dW
// with the asset stepped by its exact lognormal solution and omega by plain
// Euler.  Paths stop at the first grid point whose omega leaves the open
// band (1/n, n) or at the horizon; values are frozen after the stop.
//
// Draws come from the counter-based generator, so a path depends only on
// (master seed, path index); reductions run in path order.  Ensembles are
// therefore bit-identical for any worker count.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "irv/black_scholes.hpp"
#include "irv/coefficient_model.hpp"
#include "irv/core.hpp"
#include "irv/errors.hpp"
#include "irv/rng.hpp"
#include "irv/stats.hpp"

namespace irv {

inline constexpr std::size_t kNoStep = static_cast<std::size_t>(-1);

struct TimeGrid {
  double dt;
  std::size_t steps;

  TimeGrid(double dt_in, std::size_t steps_in) : dt(dt_in), steps(steps_in) {
    if (!(dt > 0.0) || !std::isfinite(dt))
      throw domain_error("TimeGrid: dt must be finite and > 0");
    if (steps == 0) throw domain_error("TimeGrid: steps must be >= 1");
  }
  double horizon() const { return dt * static_cast<double>(steps); }
  double time_at(std::size_t i) const { return dt * static_cast<double>(i); }
  std::vector<double> times() const {
    std::vector<double> out(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) out[i] = time_at(i);
    return out;
  }
};

struct SimConfig {
  std::size_t n_paths = 1;
  std::uint64_t master_seed = 0;
  double band_n = 1e6;   // omega band (1/n, n)
  unsigned workers = 0;  // 0: hardware concurrency
  bool antithetic = false;
};

enum class StopReason { lower_band, upper_band, horizon };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::lower_band:
      return "lower-band";
    case StopReason::upper_band:
      return "upper-band";
    default:
      return "horizon";
  }
}

struct StoppedPath {
  std::vector<double> times;
  std::vector<double> s;
  std::vector<double> omega;
  std::vector<double> call;  // unnormalized price s * BS(k, sqrt(omega))
  std::size_t stop_index = 0;
  StopReason stop_reason = StopReason::horizon;
  bool valid = true;
  // First step whose update failed (model threw or state went non-finite);
  // kNoStep for valid paths.  Arrays are frozen from the last good state.
  std::size_t invalid_step = kNoStep;
};

struct PathSummary {
  double terminal_s = 0.0;
  double terminal_omega = 0.0;
  double terminal_call = 0.0;
  std::size_t stop_index = 0;
  StopReason stop_reason = StopReason::horizon;
  bool valid = true;
  double realized_qv = 0.0;
  double predicted_qv = 0.0;
};

struct EnsembleStats {
  std::size_t n_paths = 0;
  std::size_t n_valid = 0;
  std::size_t n_invalid = 0;
  std::size_t n_lower_band = 0;
  std::size_t n_upper_band = 0;
  std::size_t n_horizon = 0;
  double c0 = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
  double z = 0.0;
};

struct QvReport {
  std::size_t n_valid = 0;
  double mean_realized = 0.0;
  double mean_predicted = 0.0;
  double rel_error = 0.0;
};

namespace detail {

// Recorder policy contract (all calls single-threaded within one path):
//   begin(path_index)
//   pre_step(i, state, eval)        pre-stop states t_i only
//   record(i, t, s, omega)          every grid index 0..steps, frozen tail included
//   finish(stop_index, reason, valid, invalid_step)

template <class Recorder>
void run_path(const CoefficientModel& model, double strike, double s0,
              double omega0, const TimeGrid& grid, const SimConfig& cfg,
              const CounterRng& rng, std::size_t path_index, Recorder& rec) {
  const double lower = 1.0 / cfg.band_n;
  const double upper = cfg.band_n;
  const std::uint64_t draw = cfg.antithetic ? path_index / 2 : path_index;
  const double sign = (cfg.antithetic && (path_index & 1u)) ? -1.0 : 1.0;
  const double sqrt_dt = std::sqrt(grid.dt);

  rec.begin(path_index);
  double s = s0;
  double w = omega0;
  rec.record(0, 0.0, s, w);

  std::size_t stop = kNoStep;
  StopReason reason = StopReason::horizon;
  bool valid = true;
  std::size_t invalid_step = kNoStep;
  if (w <= lower) {
    stop = 0;
    reason = StopReason::lower_band;
  } else if (w >= upper) {
    stop = 0;
    reason = StopReason::upper_band;
  }

  double frozen_s = s;
  double frozen_w = w;
  std::size_t last_recorded = 0;
  for (std::size_t i = 0; i < grid.steps && stop == kNoStep; ++i) {
    const IrvState st{grid.time_at(i), s, w, std::log(strike / s), 0.0};
    ModelEval ev;
    try {
      ev = model.eval(st);
    } catch (const std::exception&) {
      valid = false;
      invalid_step = i;
      break;
    }
    rec.pre_step(i, st, ev);
    const double a = ev.derive_drift ? no_drift_a(ev.b, ev.c, w, st.k) : ev.a;
    const double sig = ev.sigma;
    const double xw =
        sign * rng.normal(draw, static_cast<std::uint32_t>(i), kChannelAssetW);
    const double xz = sign * rng.normal(draw, static_cast<std::uint32_t>(i),
                                        kChannelVarianceZ);
    s = s * std::exp(sig * sqrt_dt * xw - 0.5 * sig * sig * grid.dt);
    w = w + a * sig * sig * grid.dt + (ev.b * xz + ev.c * xw) * w * sig * sqrt_dt;
    if (!std::isfinite(s) || !std::isfinite(w)) {
      valid = false;
      invalid_step = i + 1;
      s = frozen_s;
      w = frozen_w;
      break;
    }
    if (w < 0.0) {
      // Negative Euler overshoot: clamp to the lower threshold and treat as
      // a lower-band exit at this grid point.
      w = lower;
      stop = i + 1;
      reason = StopReason::lower_band;
    } else if (w <= lower) {
      stop = i + 1;
      reason = StopReason::lower_band;
    } else if (w >= upper) {
      stop = i + 1;
      reason = StopReason::upper_band;
    }
    rec.record(i + 1, grid.time_at(i + 1), s, w);
    last_recorded = i + 1;
    frozen_s = s;
    frozen_w = w;
  }
  if (valid && stop == kNoStep) stop = grid.steps;
  for (std::size_t j = last_recorded + 1; j <= grid.steps; ++j)
    rec.record(j, grid.time_at(j), frozen_s, frozen_w);
  if (!valid) stop = last_recorded;
  rec.finish(stop, reason, valid, invalid_step);
}

inline void validate_run(const CoefficientModel& model, double strike,
                         double s0, double omega0, const TimeGrid& grid,
                         const SimConfig& cfg) {
  if (!(strike > 0.0) || !std::isfinite(strike))
    throw domain_error("simulate: strike must be finite and > 0");
  if (!(s0 > 0.0) || !std::isfinite(s0))
    throw domain_error("simulate: s0 must be finite and > 0");
  if (!(omega0 > 0.0) || !std::isfinite(omega0))
    throw domain_error("simulate: omega0 must be finite and > 0");
  if (!(cfg.band_n > 1.0))
    throw domain_error("simulate: band_n must be > 1");
  if (cfg.n_paths == 0) throw domain_error("simulate: n_paths must be >= 1");
  if (!(grid.time_at(grid.steps - 1) < model.maturity()))
    throw domain_error("simulate: grid extends past the model maturity");
}

template <class Fn>
void parallel_paths(std::size_t n_paths, unsigned workers, Fn fn) {
  unsigned w = workers ? workers : std::thread::hardware_concurrency();
  if (w == 0) w = 1;
  if (static_cast<std::size_t>(w) > n_paths)
    w = static_cast<unsigned>(n_paths);
  if (w <= 1) {
    for (std::size_t i = 0; i < n_paths; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(w);
  const std::size_t block = (n_paths + w - 1) / w;
  for (unsigned t = 0; t < w; ++t) {
    const std::size_t lo = static_cast<std::size_t>(t) * block;
    const std::size_t hi = std::min(n_paths, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Builds a full StoppedPath, including per-step call values.
class FullRecorder {
 public:
  FullRecorder(double strike, std::size_t steps)
      : strike_(strike), steps_(steps) {}

  void begin(std::size_t) {
    path_ = StoppedPath{};
    path_.times.resize(steps_ + 1);
    path_.s.resize(steps_ + 1);
    path_.omega.resize(steps_ + 1);
    path_.call.resize(steps_ + 1);
  }
  void pre_step(std::size_t, const IrvState&, const ModelEval&) {}
  void record(std::size_t i, double t, double s, double w) {
    path_.times[i] = t;
    path_.s[i] = s;
    path_.omega[i] = w;
    path_.call[i] = s * bs_call(std::log(strike_ / s), std::sqrt(w));
  }
  void finish(std::size_t stop, StopReason reason, bool valid,
              std::size_t invalid_step) {
    path_.stop_index = stop;
    path_.stop_reason = reason;
    path_.valid = valid;
    path_.invalid_step = invalid_step;
  }
  StoppedPath& path() { return path_; }

 private:
  double strike_;
  std::size_t steps_;
  StoppedPath path_;
};

// Terminal values only; optionally accumulates realized/predicted quadratic
// variation of the price along the way.
class SummaryRecorder {
 public:
  SummaryRecorder(double strike, double dt, bool with_qv)
      : strike_(strike), dt_(dt), with_qv_(with_qv) {}

  void begin(std::size_t) {
    out_ = PathSummary{};
    have_pre_ = false;
  }
  void pre_step(std::size_t, const IrvState& st, const ModelEval& ev) {
    if (!with_qv_) return;
    const double v = std::sqrt(st.omega);
    const auto d = d_pair(st.k, v);
    const double half = 0.5 * strike_ * v * norm_pdf(d.d_minus);
    const double dcz = ev.b * half * ev.sigma;
    const double dcw = (st.s * norm_cdf(d.d_plus) + ev.c * half) * ev.sigma;
    out_.predicted_qv += (dcz * dcz + dcw * dcw) * dt_;
    pre_call_ = st.s * bs_call(st.k, v);
    have_pre_ = true;
  }
  void record(std::size_t i, double, double s, double w) {
    last_s_ = s;
    last_w_ = w;
    if (with_qv_ && have_pre_ && i > 0) {
      const double call = s * bs_call(std::log(strike_ / s), std::sqrt(w));
      const double inc = call - pre_call_;
      out_.realized_qv += inc * inc;
      have_pre_ = false;
    }
  }
  void finish(std::size_t stop, StopReason reason, bool valid,
              std::size_t) {
    out_.stop_index = stop;
    out_.stop_reason = reason;
    out_.valid = valid;
    out_.terminal_s = last_s_;
    out_.terminal_omega = last_w_;
    out_.terminal_call =
        last_s_ * bs_call(std::log(strike_ / last_s_), std::sqrt(last_w_));
  }
  const PathSummary& summary() const { return out_; }

 private:
  double strike_;
  double dt_;
  bool with_qv_;
  PathSummary out_;
  double pre_call_ = 0.0;
  double last_s_ = 0.0;
  double last_w_ = 0.0;
  bool have_pre_ = false;
};

}  // namespace detail

// Receives finished paths; invocations may be concurrent but always carry
// distinct path indices.
class PathSink {
 public:
  virtual ~PathSink() = default;
  virtual void on_path(std::size_t path_index, const StoppedPath& path) = 0;
};

inline void simulate_into(const CoefficientModel& model, double strike,
                          double s0, double omega0, const TimeGrid& grid,
                          const SimConfig& cfg, PathSink& sink) {
  detail::validate_run(model, strike, s0, omega0, grid, cfg);
  const CounterRng rng(cfg.master_seed);
  detail::parallel_paths(cfg.n_paths, cfg.workers, [&](std::size_t p) {
    detail::FullRecorder rec(strike, grid.steps);
    detail::run_path(model, strike, s0, omega0, grid, cfg, rng, p, rec);
    sink.on_path(p, rec.path());
  });
}

inline std::vector<StoppedPath> simulate(const CoefficientModel& model,
                                         double strike, double s0,
                                         double omega0, const TimeGrid& grid,
                                         const SimConfig& cfg) {
  struct Collect final : PathSink {
    std::vector<StoppedPath>* out;
    void on_path(std::size_t i, const StoppedPath& p) override {
      (*out)[i] = p;
    }
  };
  std::vector<StoppedPath> paths(cfg.n_paths);
  Collect sink;
  sink.out = &paths;
  simulate_into(model, strike, s0, omega0, grid, cfg, sink);
  return paths;
}

inline std::vector<PathSummary> simulate_summaries(
    const CoefficientModel& model, double strike, double s0, double omega0,
    const TimeGrid& grid, const SimConfig& cfg, bool with_qv = false) {
  detail::validate_run(model, strike, s0, omega0, grid, cfg);
  const CounterRng rng(cfg.master_seed);
  std::vector<PathSummary> out(cfg.n_paths);
  detail::parallel_paths(cfg.n_paths, cfg.workers, [&](std::size_t p) {
    detail::SummaryRecorder rec(strike, grid.dt, with_qv);
    detail::run_path(model, strike, s0, omega0, grid, cfg, rng, p, rec);
    out[p] = rec.summary();
  });
  return out;
}

inline double initial_call_price(double strike, double s0, double omega0) {
  return s0 * bs_call(std::log(strike / s0), std::sqrt(omega0));
}

inline EnsembleStats ensemble_stats(std::span<const PathSummary> summaries,
                                    double c0) {
  EnsembleStats st;
  st.n_paths = summaries.size();
  st.c0 = c0;
  std::vector<double> terminal;
  terminal.reserve(summaries.size());
  for (const auto& p : summaries) {
    if (!p.valid) {
      ++st.n_invalid;
      continue;
    }
    ++st.n_valid;
    switch (p.stop_reason) {
      case StopReason::lower_band:
        ++st.n_lower_band;
        break;
      case StopReason::upper_band:
        ++st.n_upper_band;
        break;
      default:
        ++st.n_horizon;
    }
    terminal.push_back(p.terminal_call);
  }
  const SummaryStats s = summarize(terminal);
  st.mean = s.mean;
  st.sd = s.sd;
  st.se = s.se;
  if (s.se > 0.0)
    st.z = (s.mean - c0) / s.se;
  else
    st.z = s.mean == c0 ? 0.0 : std::copysign(
        std::numeric_limits<double>::infinity(), s.mean - c0);
  return st;
}

// Compares the ensemble mean of the stopped terminal price with the initial
// price; the z-score is the martingale-defect statistic.
inline EnsembleStats martingale_test(const std::vector<StoppedPath>& paths) {
  std::vector<PathSummary> summaries(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& p = paths[i];
    summaries[i].valid = p.valid;
    summaries[i].stop_index = p.stop_index;
    summaries[i].stop_reason = p.stop_reason;
    summaries[i].terminal_s = p.s[p.stop_index];
    summaries[i].terminal_omega = p.omega[p.stop_index];
    summaries[i].terminal_call = p.call[p.stop_index];
  }
  const double c0 = paths.empty() ? 0.0 : paths.front().call.front();
  return ensemble_stats(summaries, c0);
}

inline EnsembleStats martingale_test(const CoefficientModel& model,
                                     double strike, double s0, double omega0,
                                     const TimeGrid& grid,
                                     const SimConfig& cfg) {
  const auto summaries =
      simulate_summaries(model, strike, s0, omega0, grid, cfg, false);
  return ensemble_stats(summaries, initial_call_price(strike, s0, omega0));
}

inline QvReport qv_report_from(std::span<const PathSummary> summaries) {
  QvReport rep;
  std::vector<double> realized, predicted;
  realized.reserve(summaries.size());
  predicted.reserve(summaries.size());
  for (const auto& p : summaries) {
    if (!p.valid) continue;
    realized.push_back(p.realized_qv);
    predicted.push_back(p.predicted_qv);
  }
  rep.n_valid = realized.size();
  rep.mean_realized = summarize(realized).mean;
  rep.mean_predicted = summarize(predicted).mean;
  if (rep.mean_predicted != 0.0)
    rep.rel_error =
        std::fabs(rep.mean_realized - rep.mean_predicted) / rep.mean_predicted;
  return rep;
}

// Realized vs predicted quadratic variation of the price over an ensemble.
// The predicted density uses the full price loadings:
//   dC_Z = b (K sqrt(omega) phi(d_minus) / 2) sigma
//   dC_W = (S N(d_plus) + c K sqrt(omega) phi(d_minus) / 2) sigma
inline QvReport qv_check(const std::vector<StoppedPath>& paths,
                         const CoefficientModel& model, double strike) {
  std::vector<PathSummary> summaries(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& p = paths[i];
    summaries[i].valid = p.valid;
    if (!p.valid) continue;
    double realized = 0.0, predicted = 0.0;
    for (std::size_t j = 0; j < p.stop_index; ++j) {
      const double dt = p.times[j + 1] - p.times[j];
      const double k = std::log(strike / p.s[j]);
      const IrvState st{p.times[j], p.s[j], p.omega[j], k, 0.0};
      const ModelEval ev = model.eval(st);
      const double v = std::sqrt(p.omega[j]);
      const auto d = d_pair(k, v);
      const double half = 0.5 * strike * v * norm_pdf(d.d_minus);
      const double dcz = ev.b * half * ev.sigma;
      const double dcw = (p.s[j] * norm_cdf(d.d_plus) + ev.c * half) * ev.sigma;
      predicted += (dcz * dcz + dcw * dcw) * dt;
      const double inc = p.call[j + 1] - p.call[j];
      realized += inc * inc;
    }
    summaries[i].realized_qv = realized;
    summaries[i].predicted_qv = predicted;
  }
  return qv_report_from(summaries);
}

inline QvReport qv_check(const CoefficientModel& model, double strike,
                         double s0, double omega0, const TimeGrid& grid,
                         const SimConfig& cfg) {
  const auto summaries =
      simulate_summaries(model, strike, s0, omega0, grid, cfg, true);
  return qv_report_from(summaries);
}

}  // namespace irv

#endif  // IRV_SDE_ENGINE_HPP
