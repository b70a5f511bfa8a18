#include "fdalloc/detector.hpp"

#include "fdalloc/chi2.hpp"

#include <algorithm>
#include <vector>
#include <cmath>
#include <stdexcept>

namespace fdalloc {

const char* to_string(HealthLabel label) {
    switch (label) {
        case HealthLabel::Healthy: return "healthy";
        case HealthLabel::Suspect: return "suspect";
        case HealthLabel::Fault: return "fault";
        case HealthLabel::Uninformative: return "uninformative";
    }
    return "?";
}

void DetectorConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("detector: alpha not in (0,1)");
    if (window_w < 1) throw std::invalid_argument("detector: window_w must be >= 1");
    if (beta <= 0.0) throw std::invalid_argument("detector: beta must be > 0");
    if (stall_L < 1) throw std::invalid_argument("detector: stall_L must be >= 1");
    if (gamma <= 0.0) throw std::invalid_argument("detector: gamma must be > 0");
    if (K_s < 1) throw std::invalid_argument("detector: K_s must be >= 1");
    if (K_f <= K_s) throw std::invalid_argument("detector: K_f must be > K_s");
    if (K_out < 1) throw std::invalid_argument("detector: K_out must be >= 1");
    if (eta <= 0.0) throw std::invalid_argument("detector: eta must be > 0");
}

NisWindow::NisWindow(int capacity) : buf_(static_cast<std::size_t>(std::max(1, capacity)), 0.0) {}

void NisWindow::push(double d) {
    if (count_ == buf_.size()) {
        sum_ -= buf_[head_];
    } else {
        ++count_;
    }
    buf_[head_] = d;
    sum_ += d;
    head_ = (head_ + 1) % buf_.size();
}

double NisWindow::mean() const {
    if (count_ == 0) throw std::logic_error("NisWindow::mean: empty window");
    return sum_ / static_cast<double>(count_);
}

void NisWindow::clear() {
    head_ = 0;
    count_ = 0;
    sum_ = 0.0;
    std::fill(buf_.begin(), buf_.end(), 0.0);
}

DetectorState::DetectorState(const DetectorConfig& cfg) : nis_window(cfg.window_w) {}

double nis(double innovation, double S) {
    if (S <= 0.0) throw std::invalid_argument("nis: S must be > 0");
    return innovation * innovation / S;
}

double windowed_nis(const NisWindow& window, int w) {
    if (window.empty()) throw std::logic_error("windowed_nis: empty window");
    (void)w; // the ring already holds at most w samples
    return window.mean();
}

double confidence(double d, double tau, double eta) {
    if (tau <= 0.0 || eta <= 0.0) throw std::invalid_argument("confidence: tau, eta must be > 0");
    return std::clamp((d / tau - 1.0) / eta, 0.0, 1.0);
}

namespace {

// Quantiles are fixed per (alpha, dof); memoize so a detector tick costs O(1).
double cached_chi2_threshold(double alpha, int dof) {
    thread_local double cached_alpha = -1.0;
    thread_local std::vector<double> by_dof;
    if (alpha != cached_alpha) {
        cached_alpha = alpha;
        by_dof.clear();
    }
    if (dof >= static_cast<int>(by_dof.size())) by_dof.resize(dof + 1, -1.0);
    if (by_dof[dof] < 0.0) by_dof[dof] = chi2_threshold(alpha, dof);
    return by_dof[dof];
}

// Escalate/decay one level at most per tick. Fault is never entered from
// Uninformative directly and is sticky unless recovery is enabled.
void advance_label(DetectorState& state, const DetectorConfig& cfg, bool gate_released) {
    if (state.label == HealthLabel::Healthy && state.trigger_run >= cfg.K_s) {
        state.label = HealthLabel::Suspect;
    } else if (state.label == HealthLabel::Uninformative && gate_released &&
               state.trigger_run >= cfg.K_s) {
        state.label = HealthLabel::Suspect;
    } else if (state.label == HealthLabel::Suspect && state.trigger_run >= cfg.K_f) {
        state.label = HealthLabel::Fault;
    } else if (state.clear_run >= cfg.K_out) {
        if (state.label == HealthLabel::Suspect ||
            (state.label == HealthLabel::Uninformative && gate_released)) {
            state.label = HealthLabel::Healthy;
            state.clear_run = 0;
        } else if (state.label == HealthLabel::Fault && cfg.allow_fault_recovery) {
            state.label = HealthLabel::Suspect;
            state.clear_run = 0;
        }
    }
}

} // namespace

DetectorOutput detector_step(DetectorState& state, const DetectorConfig& cfg, double d,
                             double r_dot_hat, double trace_P) {
    DetectorOutput out;

    state.nis_window.push(d);
    const int n = static_cast<int>(state.nis_window.size());
    out.windowed_nis = state.nis_window.mean();
    // mean of n i.i.d. chi2_1 samples is chi2_n / n
    out.windowed_threshold = cached_chi2_threshold(cfg.alpha, n) / static_cast<double>(n);
    out.nis_trigger = out.windowed_nis > out.windowed_threshold;

    if (std::fabs(r_dot_hat) < cfg.beta) {
        ++state.stall_run;
    } else {
        state.stall_run = 0;
    }
    out.stall_trigger = state.stall_run >= cfg.stall_L;

    const bool gated = trace_P > cfg.gamma;
    out.uncertainty_gated = gated;

    if (gated) {
        // Suspend new declarations; freeze debounce so the outage neither
        // cancels nor completes an in-progress detection.
        if (state.label != HealthLabel::Fault) state.label = HealthLabel::Uninformative;
    } else {
        const bool z = out.nis_trigger || out.stall_trigger;
        if (z) {
            ++state.trigger_run;
            state.clear_run = 0;
        } else {
            ++state.clear_run;
            state.trigger_run = 0;
        }
        advance_label(state, cfg, /*gate_released=*/true);
    }

    state.confidence = confidence(d, cached_chi2_threshold(cfg.alpha, 1), cfg.eta);
    out.confidence = state.confidence;
    out.label = state.label;
    return out;
}

DetectorOutput detector_gate_step(DetectorState& state, const DetectorConfig& cfg, double trace_P) {
    DetectorOutput out;
    out.uncertainty_gated = trace_P > cfg.gamma;
    if (out.uncertainty_gated && state.label != HealthLabel::Fault) {
        state.label = HealthLabel::Uninformative;
    }
    state.confidence = 0.0;
    out.confidence = 0.0;
    out.label = state.label;
    if (!state.nis_window.empty()) out.windowed_nis = state.nis_window.mean();
    return out;
}

} // namespace fdalloc
