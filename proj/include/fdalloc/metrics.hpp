#pragma once

#include "fdalloc/config.hpp"
#include "fdalloc/sim.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace fdalloc {

/// Steps from injection to the Fault declaration; nullopt when never declared.
/// Throws std::invalid_argument if no fault was injected on `robot`.
std::optional<long> detection_delay(const RunLog& log, int robot);

/// Mean and sample std of the per-step (unwindowed) NIS over the robot's
/// assigned-stream lifetime, excluding each stream's first w burn-in updates.
/// Throws std::invalid_argument for a robot with an injected fault.
std::pair<double, double> nis_stats(const RunLog& log, int robot);

/// Steps labeled Suspect/Fault over total stream-steps, across no-fault runs.
/// Throws std::invalid_argument if any log contains injected faults.
double false_alarm_rate(const std::vector<RunLog>& logs);

/// Per-re-solve l1 assignment change (the initial solve is not a re-solve).
std::vector<double> churn_series(const RunLog& log);

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

/// Trapezoid area under (fpr, tpr) points sorted by fpr.
double auc_trapezoid(const std::vector<RocPoint>& points);

struct MagnitudePoint {
    double magnitude = 0.0;
    int n_runs = 0;
    double accuracy = 0.0; // true positive on the faulted robot, no false positive elsewhere
    int detected = 0;
    std::vector<RocPoint> roc; // threshold sweep over recorded windowed NIS
    double auc = 0.0;
};

struct SweepResult {
    FaultSpec::Kind kind = FaultSpec::Kind::NoiseIncrease;
    std::vector<MagnitudePoint> points;
};

/// Run the (magnitudes x seeds) grid off `base_cfg`, which must contain
/// exactly one fault of kind `kind` whose magnitude is replaced per point.
/// Seeds are 0..runs_per_magnitude-1. `jobs` parallelizes across runs;
/// results are reduced in deterministic order.
SweepResult roc_and_accuracy_sweep(const ScenarioConfig& base_cfg, FaultSpec::Kind kind,
                                   const std::vector<double>& magnitudes, int runs_per_magnitude,
                                   int jobs = 1);

/// Accuracy semantics shared by the sweep: detection on the faulted robot at
/// or after injection and no Fault label on any other robot during the run.
bool run_is_accurate(const RunLog& log);

} // namespace fdalloc
