#pragma once

#include "fdalloc/allocator.hpp"
#include "fdalloc/config.hpp"
#include "fdalloc/detector.hpp"
#include "fdalloc/kalman.hpp"
#include "fdalloc/rng.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace fdalloc {

/// One detector tick on one (robot, task) stream.
struct StreamSample {
    long step = 0;
    int robot = -1;
    int task = -1;
    long stream_age = 0; // measurement updates since the stream was latched
    double true_progress = 0.0;
    double measured = 0.0; // NaN when dropped
    bool dropped = false;
    double nis_value = 0.0;     // NaN when dropped
    double innovation_normalized = 0.0; // innovation / sqrt(S); NaN when dropped
    double windowed_nis = 0.0;  // NaN until a sample exists
    double windowed_threshold = 0.0;
    bool nis_trigger = false;
    bool stall_trigger = false;
    bool gated = false;
    HealthLabel label = HealthLabel::Healthy;
    double confidence = 0.0;
    double r_hat = 0.0;
    double rdot_hat = 0.0;
    double trace_p = 0.0;
    double p11 = 0.0; // posterior covariance entries (prior during dropout)
    double p12 = 0.0;
    double p22 = 0.0;
};

struct StepRecord {
    long step = 0;
    Eigen::MatrixXd positions; // N x 2, true
    std::vector<HealthLabel> health;
    Eigen::MatrixXd alpha; // N x M, last solved
    std::vector<int> assigned; // task per robot, -1 when idle
    bool solved = false;
    double churn = 0.0;
    int qp_iterations = 0;
    double qp_solve_time = 0.0; // seconds
    double detector_time = 0.0; // seconds, all streams this step
    double slack_sum = 0.0;     // sum of delta at the last solve
    std::vector<StreamSample> streams;
};

struct RobotSummary {
    int robot = -1;
    bool faulty = false;
    int task_before = -1; // last task held at the (first) fault injection; first task otherwise
    int task_after = -1;  // last task held by run end
    long fault_init_step = -1;
    long fault_det_step = -1;
    bool completed = false; // this robot finished at least one task
    double nis_mean = 0.0;  // NaN for faulted robots or empty streams
    double nis_std = 0.0;
};

struct TaskSummary {
    int task = -1;
    bool completed = false;
    long completion_step = -1;
    int completed_by = -1;
};

struct RunSummary {
    std::vector<RobotSummary> robots;
    std::vector<TaskSummary> tasks;
    double total_churn = 0.0;
    long solve_count = 0;
    double max_qp_solve_time = 0.0;      // seconds
    double mean_detector_time = 0.0;     // seconds per step
};

struct RunLog {
    ScenarioConfig cfg;
    std::vector<StepRecord> steps;
    RunSummary summary;
};

/// Single-integrator Euler step, clamped to the unit workspace.
Eigen::MatrixXd step_dynamics(const Eigen::MatrixXd& positions, const Eigen::MatrixXd& controls,
                              double dt);

/// TaskAbandonment zeroes the affected robot's control during its window.
Eigen::MatrixXd apply_actuation_faults(Eigen::MatrixXd controls,
                                       const std::vector<FaultSpec>& faults, long step);

/// Measurement channel for one assigned stream. Returns nullopt during an
/// active CommDropout. Noise is synthesized in the progress coordinate with
/// std sigma/L (sigma elevated during NoiseIncrease); VelocitySlipBias adds
/// an accumulating drift magnitude*(steps since fault start + 1).
std::optional<double> measure_progress(double true_progress, double distance_to_goal,
                                       const std::vector<FaultSpec>& faults, int robot, long step,
                                       double sigma_xy, double l_min, Rng& sensor_rng);

/// Execute the full detector-allocator pipeline for cfg.steps ticks.
/// Deterministic: identical configs (including seed) produce identical logs.
RunLog run_scenario(const ScenarioConfig& cfg);

/// Recompute the run summary from the per-step records alone (the cross-check
/// route used by the metrics tests; run_scenario fills summaries from its own
/// live counters).
RunSummary summarize_records(const ScenarioConfig& cfg, const std::vector<StepRecord>& steps);

} // namespace fdalloc
