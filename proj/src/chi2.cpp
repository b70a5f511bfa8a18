#include "fdalloc/chi2.hpp"

#include <cmath>
#include <stdexcept>

namespace fdalloc {

namespace {

// Series expansion, converges fast for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction (modified Lentz), for x >= a + 1. Returns Q(a, x).
double gamma_q_contfrac(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

} // namespace

double regularized_gamma_p(double a, double x) {
    if (a <= 0.0 || x < 0.0) {
        throw std::invalid_argument("regularized_gamma_p: require a > 0, x >= 0");
    }
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_contfrac(a, x);
}

double chi2_cdf(double x, int dof) {
    if (x <= 0.0) return 0.0;
    return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_threshold(double alpha, int dof) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("chi2_threshold: alpha must be in (0, 1)");
    }
    if (dof < 1) {
        throw std::invalid_argument("chi2_threshold: dof must be >= 1");
    }
    const double target = 1.0 - alpha;
    double lo = 0.0;
    double hi = 1.0;
    while (chi2_cdf(hi, dof) < target) hi *= 2.0; // bracket; CDF -> 1
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (chi2_cdf(mid, dof) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace fdalloc
