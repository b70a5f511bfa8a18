#include "fdalloc/progress.hpp"
#include "fdalloc/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace fdalloc;

namespace {
const Eigen::Vector2d kStart{0.3, 0.1};
const Eigen::Vector2d kGoal{0.35, 0.5};
} // namespace

TEST_CASE("progress type clamps on construction") {
    CHECK(Progress(-0.5).value() == 0.0);
    CHECK(Progress(1.5).value() == 1.0);
    CHECK(Progress(0.25).value() == 0.25);
}

TEST_CASE("spatial progress endpoints and midpoint") {
    CHECK(spatial_progress(kStart, kStart, kGoal).value() == 0.0);
    CHECK(spatial_progress(kGoal, kStart, kGoal).value() == 1.0);

    // Table-style cross-check: |start - goal| for robot 0 / task 0 is 0.403
    CHECK((kStart - kGoal).norm() == doctest::Approx(0.403).epsilon(1e-3));

    const Eigen::Vector2d mid = 0.5 * (kStart + kGoal);
    CHECK(spatial_progress(mid, kStart, kGoal, 0.0).value() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("spatial progress clips near endpoints") {
    // a point 0.5% of the way along snaps to 0 with the default 1% clip
    const Eigen::Vector2d p = kStart + 0.005 * (kGoal - kStart);
    CHECK(spatial_progress(p, kStart, kGoal).value() == 0.0);
    const Eigen::Vector2d q = kStart + 0.995 * (kGoal - kStart);
    CHECK(spatial_progress(q, kStart, kGoal).value() == 1.0);
}

TEST_CASE("spatial progress rejects a zero-length task") {
    CHECK_THROWS_AS(spatial_progress(kStart, kStart, kStart), std::invalid_argument);
}

TEST_CASE("spatial progress is monotone along the segment") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Vector2d a{rng.uniform(), rng.uniform()};
        Eigen::Vector2d b{rng.uniform(), rng.uniform()};
        if ((a - b).norm() < 1e-6) b.x() += 0.1;
        double prev = -1.0;
        for (int k = 0; k <= 20; ++k) {
            const double s = k / 20.0;
            const double r = spatial_progress(a + s * (b - a), a, b, 0.0).value();
            CHECK(r >= prev - 1e-12);
            prev = r;
        }
    }
}

TEST_CASE("workload progress") {
    CHECK(workload_progress(0, 10).value() == 0.0);
    CHECK(workload_progress(10, 10).value() == 1.0);
    CHECK(workload_progress(3, 8).value() == doctest::Approx(0.375).epsilon(1e-15));
    CHECK_THROWS_AS(workload_progress(1, 0), std::invalid_argument);
    CHECK_THROWS_AS(workload_progress(5, 3), std::invalid_argument);
    CHECK_THROWS_AS(workload_progress(-1, 3), std::invalid_argument);
}

TEST_CASE("composite weighted sum") {
    CHECK(composite_progress({Progress(0.5)}, {1.0}, CompositeMode::WeightedSum).value() == 0.5);
    CHECK(composite_progress({Progress(0.4), Progress(0.6)}, {1.0, 1.0},
                             CompositeMode::WeightedSum)
              .value() == 1.0);
    CHECK_THROWS_AS(composite_progress({}, {}, CompositeMode::WeightedSum),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        composite_progress({Progress(0.5)}, {-0.1}, CompositeMode::WeightedSum),
        std::invalid_argument);
}

TEST_CASE("smooth-min approaches the minimum for large sharpness") {
    const double sm = composite_progress({Progress(0.2), Progress(0.9)}, {1.0, 1.0},
                                         CompositeMode::SmoothMin, 100.0)
                          .value();
    CHECK(std::fabs(sm - 0.2) <= 1e-3);
}

TEST_CASE("smooth-min undershoots equal subprogresses by at most ln(n)/s") {
    const double s = 5.0;
    const double sm = composite_progress({Progress(0.37), Progress(0.37), Progress(0.37)},
                                         {1.0, 1.0, 1.0}, CompositeMode::SmoothMin, s)
                          .value();
    CHECK(sm <= 0.37);
    CHECK(sm >= 0.37 - std::log(3.0) / s - 1e-12);
}

TEST_CASE("smooth-min error bound 2 ln(n)/s over random inputs") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(6));
        std::vector<Progress> rs;
        std::vector<double> ws;
        double mn = 1.0;
        for (int k = 0; k < n; ++k) {
            const double r = rng.uniform();
            rs.emplace_back(r);
            ws.push_back(1.0);
            mn = std::min(mn, r);
        }
        const double s = 5.0 + 95.0 * rng.uniform();
        const double sm = composite_progress(rs, ws, CompositeMode::SmoothMin, s).value();
        CHECK(std::fabs(sm - mn) <= 2.0 * std::log(static_cast<double>(n)) / s + 1e-12);
    }
}

TEST_CASE("all constructions stay inside [0, 1] under fuzzing") {
    Rng rng(13);
    for (int trial = 0; trial < 500; ++trial) {
        const Eigen::Vector2d a{rng.uniform() * 4 - 2, rng.uniform() * 4 - 2};
        Eigen::Vector2d b{rng.uniform() * 4 - 2, rng.uniform() * 4 - 2};
        const Eigen::Vector2d c{rng.uniform() * 4 - 2, rng.uniform() * 4 - 2};
        if ((a - b).norm() < 1e-9) b.x() += 1.0;
        const double r1 = spatial_progress(c, a, b, rng.uniform() * 0.05).value();
        CHECK(r1 >= 0.0);
        CHECK(r1 <= 1.0);

        std::vector<Progress> rs;
        std::vector<double> ws;
        const int n = 1 + static_cast<int>(rng.below(4));
        for (int k = 0; k < n; ++k) {
            rs.emplace_back(rng.uniform() * 3 - 1);
            ws.push_back(rng.uniform() * 2);
        }
        const double r2 = composite_progress(rs, ws, CompositeMode::WeightedSum).value();
        CHECK(r2 >= 0.0);
        CHECK(r2 <= 1.0);
        if (std::any_of(ws.begin(), ws.end(), [](double w) { return w > 0; })) {
            const double r3 =
                composite_progress(rs, ws, CompositeMode::SmoothMin, 1.0 + rng.uniform() * 50)
                    .value();
            CHECK(r3 >= 0.0);
            CHECK(r3 <= 1.0);
        }
    }
}
