#include "fdalloc/chi2.hpp"
#include "fdalloc/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace fdalloc;

TEST_CASE("chi-square quantiles at one degree of freedom") {
    // chi2_1 median and 95th percentile
    CHECK(chi2_threshold(0.5, 1) == doctest::Approx(0.454936).epsilon(1e-5));
    CHECK(chi2_threshold(0.05, 1) == doctest::Approx(3.841459).epsilon(1e-5));
}

TEST_CASE("quantile/cdf round trip to the stated accuracy") {
    for (int dof : {1, 2, 5, 15, 40}) {
        for (double alpha : {0.5, 0.1, 0.05, 0.01, 0.001}) {
            const double tau = chi2_threshold(alpha, dof);
            CHECK(chi2_cdf(tau, dof) == doctest::Approx(1.0 - alpha).epsilon(1e-9));
        }
    }
}

TEST_CASE("threshold is monotone decreasing in alpha") {
    for (int dof : {1, 3, 15}) {
        double prev = std::numeric_limits<double>::infinity();
        for (double alpha : {0.01, 0.05, 0.1, 0.25, 0.5, 0.9}) {
            const double tau = chi2_threshold(alpha, dof);
            CHECK(tau < prev);
            prev = tau;
        }
    }
}

TEST_CASE("argument validation") {
    CHECK_THROWS_AS(chi2_threshold(0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(chi2_threshold(1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(chi2_threshold(0.05, 0), std::invalid_argument);
    CHECK_THROWS_AS(regularized_gamma_p(-1.0, 1.0), std::invalid_argument);
}

TEST_CASE("monte carlo quantile of squared standard normals") {
    // chi2_1 samples are squares of standard normals
    const std::size_t n = 10'000'000;
    Rng rng(20250809);
    std::vector<double> samples;
    samples.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double z = rng.normal();
        samples.push_back(z * z);
    }
    for (double alpha : {0.5, 0.05}) {
        const auto idx = static_cast<std::size_t>((1.0 - alpha) * static_cast<double>(n));
        std::nth_element(samples.begin(), samples.begin() + static_cast<long>(idx), samples.end());
        const double empirical = samples[idx];
        CHECK(empirical == doctest::Approx(chi2_threshold(alpha, 1)).epsilon(1e-2));
    }
}
