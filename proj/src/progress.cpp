#include "fdalloc/progress.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fdalloc {

Progress::Progress(double v) : value_(std::clamp(v, 0.0, 1.0)) {}

Progress spatial_progress(const Eigen::Vector2d& current_pos, const Eigen::Vector2d& start_pos,
                          const Eigen::Vector2d& goal_pos, double clip_eps) {
    const double total = (start_pos - goal_pos).norm();
    if (total <= 0.0) {
        throw std::invalid_argument("spatial_progress: zero-length task");
    }
    const double remaining = (current_pos - goal_pos).norm();
    double r = std::clamp(1.0 - remaining / total, 0.0, 1.0);
    if (r < clip_eps) r = 0.0;
    if (r > 1.0 - clip_eps) r = 1.0;
    return Progress(r);
}

Progress workload_progress(long items_done, long items_assigned) {
    if (items_assigned < 1) {
        throw std::invalid_argument("workload_progress: empty workload");
    }
    if (items_done < 0 || items_done > items_assigned) {
        throw std::invalid_argument("workload_progress: items_done outside [0, items_assigned]");
    }
    return Progress(static_cast<double>(items_done) / static_cast<double>(items_assigned));
}

Progress composite_progress(const std::vector<Progress>& subprogresses,
                            const std::vector<double>& weights, CompositeMode mode,
                            double smoothing) {
    if (subprogresses.empty() || subprogresses.size() != weights.size()) {
        throw std::invalid_argument("composite_progress: empty or mismatched inputs");
    }
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("composite_progress: negative weight");
    }
    if (mode == CompositeMode::WeightedSum) {
        double acc = 0.0;
        for (std::size_t k = 0; k < subprogresses.size(); ++k) {
            acc += weights[k] * subprogresses[k].value();
        }
        return Progress(acc);
    }
    // Smooth-min: -(1/s) log(sum_k (w_k / max_w) exp(-s r_k)). Scaling by the
    // largest weight makes the result invariant to the weights' overall scale
    // and keeps the classic log-sum-exp limit, which converges to min r_k from
    // below within ln(n)/s.
    if (smoothing <= 0.0) {
        throw std::invalid_argument("composite_progress: smoothing must be > 0");
    }
    double wmax = 0.0;
    for (double w : weights) wmax = std::max(wmax, w);
    if (wmax <= 0.0) throw std::invalid_argument("composite_progress: all weights zero");

    // log-sum-exp with the max term factored out for stability
    double m = -subprogresses[0].value();
    for (const auto& r : subprogresses) m = std::max(m, -r.value());
    double acc = 0.0;
    for (std::size_t k = 0; k < subprogresses.size(); ++k) {
        acc += (weights[k] / wmax) * std::exp(smoothing * (-subprogresses[k].value() - m));
    }
    const double soft = -(m + std::log(acc) / smoothing);
    return Progress(soft);
}

} // namespace fdalloc
