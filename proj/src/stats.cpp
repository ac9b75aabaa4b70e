#include "pbt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pbt/core.hpp"

namespace pbt {

namespace {

// Stirling remainder of log Gamma(z) for z >= 10.
double stirling_tail(double z) {
  const double z2 = z * z;
  return (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * z2)) / z2) / z2) / z;
}

// log Gamma(a) - log Gamma(a + b) for a >= 10, without the cancellation of
// two huge lgamma values.
double log_gamma_ratio(double a, double b) {
  const double c = a + b;
  return -(a - 0.5) * std::log1p(b / a) - b * std::log(c) + b + stirling_tail(a) -
         stirling_tail(c);
}

// Continued fraction for I_x(a, b) (modified Lentz). `y` = 1 - x and the logs
// are passed in so callers can supply them without cancellation.
double incomplete_beta_cf(double a, double b, double x, double log_x, double log_y) {
  constexpr int kMaxIter = 100000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
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
    if (std::abs(del - 1.0) < kEps) break;
  }
  const double front = std::exp(a * log_x + b * log_y - log_beta(a, b));
  return front * h / a;
}

// I_x(a, b) given x, y = 1 - x and their logs.
double incomplete_beta(double a, double b, double x, double y, double log_x, double log_y) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  if (x < (a + 1.0) / (a + b + 2.0)) return incomplete_beta_cf(a, b, x, log_x, log_y);
  return 1.0 - incomplete_beta_cf(b, a, y, log_y, log_x);
}

struct Moments {
  double mean;
  double var;
};

Moments moments(std::span<const double> v) {
  double sum = 0.0;
  for (double s : v) sum += s;
  const double mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double s : v) ss += (s - mean) * (s - mean);
  return {mean, ss / static_cast<double>(v.size() - 1)};
}

}  // namespace

double log_beta(double a, double b) {
  const double big = std::max(a, b);
  const double small = std::min(a, b);
  if (big >= 10.0) return std::lgamma(small) + log_gamma_ratio(big, small);
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw Error("incomplete beta needs x in [0, 1]");
  const double y = 1.0 - x;
  return incomplete_beta(a, b, x, y, std::log(x), std::log1p(-x));
}

double student_t_upper_tail(double t, double df) {
  if (!(df > 0.0)) throw Error("student_t_upper_tail needs df > 0");
  if (std::isnan(t)) throw Error("student_t_upper_tail of NaN");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  if (t == 0.0) return 0.5;
  if (std::isinf(df)) return 0.5 * std::erfc(t / std::numbers::sqrt2);

  // P(|T| > |t|) = I_x(df/2, 1/2) with x = df / (df + t^2).
  const double t2 = t * t;
  const double x = df / (df + t2);
  const double y = t2 / (df + t2);
  const double log_x = -std::log1p(t2 / df);
  const double log_y = std::log(t2) - std::log(df + t2);
  const double two_sided = incomplete_beta(0.5 * df, 0.5, x, y, log_x, log_y);
  return t > 0 ? 0.5 * two_sided : 1.0 - 0.5 * two_sided;
}

WelchResult welch_t(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2 || y.size() < 2) throw Error("welch_t needs at least two samples per side");
  auto finite = [](double s) { return std::isfinite(s); };
  if (!std::all_of(x.begin(), x.end(), finite) || !std::all_of(y.begin(), y.end(), finite)) {
    throw Error("welch_t samples must be finite");
  }
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  const Moments mx = moments(x);
  const Moments my = moments(y);
  const double vx = mx.var / nx;
  const double vy = my.var / ny;
  const double se2 = vx + vy;
  const double diff = my.mean - mx.mean;

  WelchResult r;
  if (se2 == 0.0) {
    r.df = nx + ny - 2.0;
    if (diff == 0.0) {
      r.t = 0.0;
      r.p_one_sided = 0.5;
    } else {
      r.t = diff > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
      r.p_one_sided = diff > 0 ? 0.0 : 1.0;
    }
    return r;
  }
  r.t = diff / std::sqrt(se2);
  r.df = se2 * se2 / (vx * vx / (nx - 1.0) + vy * vy / (ny - 1.0));
  r.p_one_sided = student_t_upper_tail(r.t, r.df);
  return r;
}

}  // namespace pbt
