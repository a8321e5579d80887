#ifndef IRV_STATS_HPP
#define IRV_STATS_HPP

#include <cmath>
#include <cstddef>
#include <span>

namespace irv {

struct SummaryStats {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1 denominator)
  double se = 0.0;
};

// Two-pass compensated mean / standard deviation.  Deterministic: the
// summation order is the order of the input span.
inline SummaryStats summarize(std::span<const double> xs) {
  SummaryStats st;
  st.n = xs.size();
  if (st.n == 0) return st;
  double sum = 0.0, comp = 0.0;
  for (const double x : xs) {
    const double y = x - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  st.mean = sum / static_cast<double>(st.n);
  if (st.n > 1) {
    double ss = 0.0, c2 = 0.0;
    for (const double x : xs) {
      const double d = x - st.mean;
      const double y = d * d - c2;
      const double t = ss + y;
      c2 = (t - ss) - y;
      ss = t;
    }
    st.sd = std::sqrt(ss / static_cast<double>(st.n - 1));
    st.se = st.sd / std::sqrt(static_cast<double>(st.n));
  }
  return st;
}

}  // namespace irv

#endif  // IRV_STATS_HPP
