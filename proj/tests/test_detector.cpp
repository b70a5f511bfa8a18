#include "fdalloc/detector.hpp"

#include "fdalloc/chi2.hpp"
#include "fdalloc/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace fdalloc;

namespace {

DetectorConfig quiet_cfg() {
    DetectorConfig cfg;
    cfg.validate();
    return cfg;
}

// per-sample NIS test (no windowed memory), for exercising pure debounce
DetectorConfig sample_cfg() {
    DetectorConfig cfg;
    cfg.window_w = 1;
    cfg.validate();
    return cfg;
}

double chi2_sample(Rng& rng) {
    const double z = rng.normal();
    return z * z;
}

} // namespace

TEST_CASE("nis of a scalar stream") {
    CHECK(nis(0.0, 5.0) == 0.0);
    CHECK(nis(2.0, 4.0) == doctest::Approx(1.0));
    CHECK(nis(-3.0, 9.0) == doctest::Approx(1.0)); // sign invariant
    CHECK_THROWS_AS(nis(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("windowed statistic is the mean of stored samples") {
    NisWindow w(15);
    w.push(1.0);
    w.push(1.0);
    w.push(1.0);
    CHECK(windowed_nis(w, 15) == doctest::Approx(1.0));

    NisWindow full(15);
    for (int k = 0; k < 15; ++k) full.push(2.5);
    CHECK(windowed_nis(full, 15) == doctest::Approx(2.5));

    NisWindow empty(15);
    CHECK_THROWS_AS(windowed_nis(empty, 15), std::logic_error);

    // ring behavior: old samples age out
    NisWindow ring(3);
    ring.push(10.0);
    ring.push(1.0);
    ring.push(1.0);
    ring.push(1.0);
    CHECK(ring.mean() == doctest::Approx(1.0));
}

TEST_CASE("windowed test calibration on disjoint windows") {
    // mean of 15 iid chi2_1 compared against chi2_15 / 15 keeps the level
    const int w = 15;
    const double alpha = 0.05;
    const double tau = chi2_threshold(alpha, w) / w;
    Rng rng(99);
    const int windows = 100000;
    int exceed = 0;
    for (int t = 0; t < windows; ++t) {
        double acc = 0.0;
        for (int k = 0; k < w; ++k) acc += chi2_sample(rng);
        if (acc / w > tau) ++exceed;
    }
    const double rate = static_cast<double>(exceed) / windows;
    CHECK(rate == doctest::Approx(alpha).epsilon(0.2)); // 0.05 +- 0.01
}

TEST_CASE("confidence map") {
    const double tau = 3.84;
    CHECK(confidence(tau, tau, 1.0) == 0.0);
    CHECK(confidence(tau * 2.0, tau, 1.0) == doctest::Approx(1.0)); // d = tau (1 + eta)
    CHECK(confidence(0.0, tau, 1.0) == 0.0);
    CHECK(confidence(tau * 1.5, tau, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("healthy stream stays healthy") {
    const DetectorConfig cfg = quiet_cfg();
    DetectorState st(cfg);
    for (int k = 0; k < 500; ++k) {
        const auto out = detector_step(st, cfg, 0.2, 1.0, 0.0);
        CHECK(out.label == HealthLabel::Healthy);
        CHECK(out.confidence == 0.0);
    }
}

TEST_CASE("persistent trigger walks healthy -> suspect -> fault") {
    const DetectorConfig cfg = quiet_cfg(); // K_s = 2, K_f = 5
    DetectorState st(cfg);
    std::vector<HealthLabel> seen;
    for (int k = 1; k <= cfg.K_f; ++k) {
        seen.push_back(detector_step(st, cfg, 50.0, 1.0, 0.0).label);
    }
    CHECK(seen[0] == HealthLabel::Healthy);            // run = 1 < K_s
    CHECK(seen[cfg.K_s - 1] == HealthLabel::Suspect);  // run = K_s
    CHECK(seen[cfg.K_f - 2] == HealthLabel::Suspect);  // run = K_f - 1
    CHECK(seen[cfg.K_f - 1] == HealthLabel::Fault);    // run = K_f
}

TEST_CASE("fault requires K_f consecutive triggers") {
    const DetectorConfig cfg = sample_cfg();
    DetectorState st(cfg);
    // repeat: trigger K_f - 1 times, then one clear; fault never declared
    for (int round = 0; round < 50; ++round) {
        for (int k = 0; k < cfg.K_f - 1; ++k) {
            CHECK(detector_step(st, cfg, 50.0, 1.0, 0.0).label != HealthLabel::Fault);
        }
        CHECK(detector_step(st, cfg, 0.0, 1.0, 0.0).label != HealthLabel::Fault);
    }
}

TEST_CASE("suspect decays to healthy after K_out clears") {
    const DetectorConfig cfg = sample_cfg();
    DetectorState st(cfg);
    for (int k = 0; k < cfg.K_s; ++k) detector_step(st, cfg, 50.0, 1.0, 0.0);
    CHECK(st.label == HealthLabel::Suspect);
    for (int k = 0; k < cfg.K_out - 1; ++k) {
        detector_step(st, cfg, 0.0, 1.0, 0.0);
        CHECK(st.label == HealthLabel::Suspect);
    }
    detector_step(st, cfg, 0.0, 1.0, 0.0);
    CHECK(st.label == HealthLabel::Healthy);
}

TEST_CASE("fault is sticky unless recovery is enabled") {
    DetectorConfig cfg = sample_cfg();
    DetectorState st(cfg);
    for (int k = 0; k < cfg.K_f; ++k) detector_step(st, cfg, 50.0, 1.0, 0.0);
    REQUIRE(st.label == HealthLabel::Fault);
    for (int k = 0; k < 5 * cfg.K_out; ++k) detector_step(st, cfg, 0.0, 1.0, 0.0);
    CHECK(st.label == HealthLabel::Fault);

    cfg.allow_fault_recovery = true;
    DetectorState rec(cfg);
    for (int k = 0; k < cfg.K_f; ++k) detector_step(rec, cfg, 50.0, 1.0, 0.0);
    REQUIRE(rec.label == HealthLabel::Fault);
    for (int k = 0; k < cfg.K_out; ++k) detector_step(rec, cfg, 0.0, 1.0, 0.0);
    CHECK(rec.label == HealthLabel::Suspect);
    for (int k = 0; k < cfg.K_out; ++k) detector_step(rec, cfg, 0.0, 1.0, 0.0);
    CHECK(rec.label == HealthLabel::Healthy);
}

TEST_CASE("stall gate fires after stall_L dwell samples even with low NIS") {
    const DetectorConfig cfg = quiet_cfg(); // beta = 0.005, stall_L = 4
    DetectorState st(cfg);
    for (int k = 1; k <= cfg.stall_L - 1; ++k) {
        const auto out = detector_step(st, cfg, 0.0, 0.0, 0.0);
        CHECK_FALSE(out.stall_trigger);
    }
    const auto out = detector_step(st, cfg, 0.0, 0.0, 0.0);
    CHECK(out.stall_trigger);
    // resumes counting from zero once the rate recovers
    const auto cleared = detector_step(st, cfg, 0.0, 1.0, 0.0);
    CHECK_FALSE(cleared.stall_trigger);
}

TEST_CASE("uncertainty gate suspends declarations and freezes debounce") {
    const DetectorConfig cfg = quiet_cfg();
    DetectorState st(cfg);
    detector_step(st, cfg, 50.0, 1.0, 0.0); // trigger_run = 1
    CHECK(st.trigger_run == 1);

    // gate on: label goes uninformative, the run neither grows nor resets
    for (int k = 0; k < 20; ++k) {
        const auto out = detector_step(st, cfg, 50.0, 1.0, 1.0);
        CHECK(out.label == HealthLabel::Uninformative);
        CHECK(out.uncertainty_gated);
        CHECK(st.trigger_run == 1);
    }
    // no fault can be declared while gated, however long the trigger persists
    CHECK(st.label != HealthLabel::Fault);

    // release with triggers: escalates one level at a time, never straight to fault
    auto out = detector_step(st, cfg, 50.0, 1.0, 0.0);
    CHECK(out.label == HealthLabel::Suspect); // run reaches K_s = 2
    for (int k = 0; k < cfg.K_f; ++k) out = detector_step(st, cfg, 50.0, 1.0, 0.0);
    CHECK(out.label == HealthLabel::Fault);
}

TEST_CASE("uninformative returns to healthy after the gate clears") {
    const DetectorConfig cfg = quiet_cfg();
    DetectorState st(cfg);
    detector_step(st, cfg, 0.0, 1.0, 1.0);
    CHECK(st.label == HealthLabel::Uninformative);
    for (int k = 0; k < cfg.K_out - 1; ++k) {
        detector_step(st, cfg, 0.0, 1.0, 0.0);
        CHECK(st.label == HealthLabel::Uninformative);
    }
    detector_step(st, cfg, 0.0, 1.0, 0.0);
    CHECK(st.label == HealthLabel::Healthy);
}

TEST_CASE("existing fault is retained through the gate") {
    const DetectorConfig cfg = quiet_cfg();
    DetectorState st(cfg);
    for (int k = 0; k < cfg.K_f; ++k) detector_step(st, cfg, 50.0, 1.0, 0.0);
    REQUIRE(st.label == HealthLabel::Fault);
    const auto out = detector_gate_step(st, cfg, 1.0);
    CHECK(out.label == HealthLabel::Fault);
}

TEST_CASE("gate-only step acts solely on the trace") {
    const DetectorConfig cfg = quiet_cfg();
    DetectorState st(cfg);
    auto out = detector_gate_step(st, cfg, 0.0);
    CHECK(out.label == HealthLabel::Healthy);
    out = detector_gate_step(st, cfg, cfg.gamma * 2.0);
    CHECK(out.label == HealthLabel::Uninformative);
    CHECK(st.trigger_run == 0);
    CHECK(st.nis_window.empty());
}

TEST_CASE("per-step suspect rate approximates alpha to the K_s") {
    // i.i.d. chi2_1 NIS against the per-sample threshold (window of one);
    // K_s consecutive triggers thin the false-alarm rate to ~alpha^K_s
    for (int ks : {1, 2, 3}) {
        DetectorConfig cfg;
        cfg.alpha = 0.05;
        cfg.window_w = 1;
        cfg.K_s = ks;
        cfg.K_f = 1000000; // keep faults out of the way
        cfg.K_out = 1;
        cfg.beta = 1e-12;  // rate gate off
        cfg.validate();
        DetectorState st(cfg);
        Rng rng(1000 + static_cast<std::uint64_t>(ks));
        const long steps = 1000000;
        long declarations = 0;
        HealthLabel prev = HealthLabel::Healthy;
        for (long k = 0; k < steps; ++k) {
            const auto out = detector_step(st, cfg, chi2_sample(rng), 1.0, 0.0);
            if (out.label == HealthLabel::Suspect && prev == HealthLabel::Healthy) ++declarations;
            prev = out.label;
        }
        const double rate = static_cast<double>(declarations) / static_cast<double>(steps);
        const double expected = std::pow(cfg.alpha, ks);
        CHECK(rate <= 3.0 * expected);
        CHECK(rate >= expected / 3.0);
    }
}

TEST_CASE("all-zero nis keeps confidence at zero and the label healthy") {
    const DetectorConfig cfg = quiet_cfg();
    DetectorState st(cfg);
    for (int k = 0; k < 200; ++k) {
        const auto out = detector_step(st, cfg, 0.0, 1.0, 0.0);
        CHECK(out.confidence == 0.0);
        CHECK(out.label == HealthLabel::Healthy);
    }
}

TEST_CASE("windowed memory keeps the trigger latched through clean samples") {
    // with w = 15, a burst of large NIS dominates the window mean for several
    // ticks, so isolated clean samples do not reset the debounce counters
    const DetectorConfig cfg = quiet_cfg();
    DetectorState st(cfg);
    for (int k = 0; k < 3; ++k) detector_step(st, cfg, 60.0, 1.0, 0.0);
    const int run_before = st.trigger_run;
    const auto out = detector_step(st, cfg, 0.0, 1.0, 0.0); // clean sample
    CHECK(out.nis_trigger);
    CHECK(st.trigger_run == run_before + 1);
}

TEST_CASE("config validation rejects bad fields") {
    DetectorConfig cfg;
    cfg.alpha = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = DetectorConfig{};
    cfg.K_f = cfg.K_s;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = DetectorConfig{};
    cfg.beta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
