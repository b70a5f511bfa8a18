#pragma once

#include <Eigen/Core>

#include <vector>

namespace fdalloc {

/// Normalized task-completion fraction. Always in [0, 1]; the constructor clamps.
class Progress {
public:
    Progress() = default;
    Progress(double v); // NOLINT(google-explicit-constructor) value type, clamps
    double value() const { return value_; }
    operator double() const { return value_; }

private:
    double value_ = 0.0;
};

enum class CompositeMode { WeightedSum, SmoothMin };

/// Progress of a point-to-point spatial task: 1 - d(t)/d(0), clamped to [0, 1].
/// Values within clip_eps of either endpoint snap to it.
/// Throws std::invalid_argument on a zero-length task (start == goal).
Progress spatial_progress(const Eigen::Vector2d& current_pos, const Eigen::Vector2d& start_pos,
                          const Eigen::Vector2d& goal_pos, double clip_eps = 0.01);

/// Completed fraction items_done / items_assigned.
/// Throws std::invalid_argument on an empty workload or items_done > items_assigned.
Progress workload_progress(long items_done, long items_assigned);

/// Soft aggregation of subtask progresses: clamped weighted sum, or a smooth-min
/// (normalized log-sum-exp, exact when all subprogresses are equal) for tasks
/// bottlenecked by the slowest subtask. `smoothing` is the soft-min sharpness.
Progress composite_progress(const std::vector<Progress>& subprogresses,
                            const std::vector<double>& weights, CompositeMode mode,
                            double smoothing = 10.0);

} // namespace fdalloc
