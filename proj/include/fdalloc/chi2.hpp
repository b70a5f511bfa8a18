#pragma once

namespace fdalloc {

/// Regularized lower incomplete gamma function P(a, x), a > 0, x >= 0.
double regularized_gamma_p(double a, double x);

/// Chi-square CDF with dof degrees of freedom.
double chi2_cdf(double x, int dof);

/// Upper-tail quantile of the chi-square distribution: the threshold tau with
/// P(X > tau) = alpha, found by bisection on the regularized gamma function
/// to 1e-9 absolute accuracy. Throws std::invalid_argument for alpha outside
/// (0, 1) or dof < 1.
double chi2_threshold(double alpha, int dof);

} // namespace fdalloc
