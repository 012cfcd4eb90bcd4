#include "medrep/stats.hpp"

#include "medrep/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace medrep {

namespace {

double beta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw ComputeError("regularized_beta: continued fraction did not converge");
}

// I_x(a, b) with y = 1 - x supplied separately so tails near x = 1 keep
// their precision.
double ibeta(double a, double b, double x, double y) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  const double lfront =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
  const double front = std::exp(lfront);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, y) / b;
}

// P(T > |t|) for df > 0.
double t_tail(double t, double df) {
  if (std::isinf(t)) return 0.0;
  const double t2 = t * t;
  const double denom = df + t2;
  return 0.5 * ibeta(0.5 * df, 0.5, df / denom, t2 / denom);
}

}  // namespace

double regularized_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw ComputeError("regularized_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw ComputeError("regularized_beta: x outside [0, 1]");
  return ibeta(a, b, x, 1.0 - x);
}

double student_t_sf(double t, double df) {
  if (!(df > 0.0)) throw ComputeError("student_t: df must be positive");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  return t >= 0.0 ? t_tail(t, df) : 1.0 - t_tail(t, df);
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw ComputeError("student_t: df must be positive");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  return t <= 0.0 ? t_tail(t, df) : 1.0 - t_tail(t, df);
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

TTest one_sample_ttest(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) throw ComputeError("one_sample_ttest: need at least 2 values");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(n - 1);
  if (!(var > 0.0)) throw ComputeError("one_sample_ttest: zero variance");
  TTest r;
  r.n = static_cast<int>(n);
  r.mean = mean;
  r.df = static_cast<double>(n - 1);
  r.t = mean / std::sqrt(var / static_cast<double>(n));
  r.p_pos = student_t_sf(r.t, r.df);
  r.p_neg = student_t_cdf(r.t, r.df);
  r.p_two = std::min(1.0, 2.0 * std::min(r.p_pos, r.p_neg));
  return r;
}

std::vector<double> bh_adjust(const std::vector<double>& p) {
  const std::size_t m = p.size();
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) throw ComputeError("bh_adjust: p-value outside [0, 1]");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> out(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const std::size_t i = order[r];
    // m / rank >= 1, so the rounded product never drops below p.
    running = std::min(running, p[i] * (static_cast<double>(m) / static_cast<double>(r + 1)));
    out[i] = running;
  }
  return out;
}

}  // namespace medrep
