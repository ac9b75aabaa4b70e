#pragma once

#include <span>

namespace pbt {

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  // P(T > t) under the null: small when y's mean is convincingly above x's.
  double p_one_sided = 0.5;
};

/// Welch's unequal-variance t-test of mean(y) - mean(x), with
/// Welch-Satterthwaite degrees of freedom. Needs at least two finite samples
/// on each side.
///
/// Zero pooled variance is handled explicitly: equal means give t = 0 and
/// p = 0.5; otherwise t = +/-inf and p = 0 (y above) or 1 (y below). The
/// degrees of freedom fall back to n_x + n_y - 2 in that case.
WelchResult welch_t(std::span<const double> x, std::span<const double> y);

/// P(T > t) for a Student-t variable with `df` degrees of freedom (df > 0,
/// +inf allowed for the normal limit).
double student_t_upper_tail(double t, double df);

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
double regularized_incomplete_beta(double a, double b, double x);

/// log B(a, b), stable when one argument is large.
double log_beta(double a, double b);

}  // namespace pbt
