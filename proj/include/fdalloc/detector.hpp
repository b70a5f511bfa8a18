#pragma once

#include <cstddef>
#include <vector>

namespace fdalloc {

enum class HealthLabel { Healthy, Suspect, Fault, Uninformative };

const char* to_string(HealthLabel label);

struct DetectorConfig {
    double alpha = 0.001;       // NIS significance level
    int window_w = 15;          // NIS averaging window
    double beta = 0.005;        // stall rate threshold [progress/s]
    int stall_L = 4;            // stall dwell samples
    double gamma = 0.05;        // covariance-trace gate
    int K_s = 2;                // consecutive triggers: healthy -> suspect
    int K_f = 10;               // consecutive triggers: suspect -> fault
    int K_out = 10;             // consecutive clears to decay one level
    double eta = 1.0;           // confidence slope
    bool allow_fault_recovery = false;

    void validate() const; // throws std::invalid_argument on a bad field
};

/// Fixed-capacity ring of the most recent NIS values.
class NisWindow {
public:
    explicit NisWindow(int capacity = 15);
    void push(double d);
    double mean() const;          // mean of stored samples; throws when empty
    std::size_t size() const { return count_; }
    bool empty() const { return count_ == 0; }
    void clear();

private:
    std::vector<double> buf_;
    std::size_t head_ = 0;
    std::size_t count_ = 0;
    double sum_ = 0.0;
};

struct DetectorState {
    explicit DetectorState(const DetectorConfig& cfg = DetectorConfig{});
    HealthLabel label = HealthLabel::Healthy;
    int trigger_run = 0;
    int clear_run = 0;
    int stall_run = 0;
    NisWindow nis_window;
    double confidence = 0.0;
};

struct DetectorOutput {
    HealthLabel label = HealthLabel::Healthy;
    double confidence = 0.0;
    bool nis_trigger = false;
    bool stall_trigger = false;
    bool uncertainty_gated = false;
    double windowed_nis = 0.0;
    double windowed_threshold = 0.0;
};

/// NIS for a scalar measurement: innovation^2 / S. Throws if S <= 0.
double nis(double innovation, double S);

/// Mean of the most recent min(w, available) NIS values. The matched decision
/// threshold for a mean of n samples is chi2_threshold(alpha, n) / n.
double windowed_nis(const NisWindow& window, int w);

/// Clamped affine confidence map: min(1, max(0, (d / tau - 1) / eta)).
double confidence(double d, double tau, double eta);

/// One detector tick: pushes d into the window, evaluates the windowed NIS
/// test, the low-rate stall gate and the uncertainty gate, advances the
/// debounce counters and updates the health label in place.
DetectorOutput detector_step(DetectorState& state, const DetectorConfig& cfg, double d,
                             double r_dot_hat, double trace_P);

/// Dropout tick: only the uncertainty gate acts; debounce counters and the
/// NIS window freeze so an outage neither launders nor fabricates evidence.
DetectorOutput detector_gate_step(DetectorState& state, const DetectorConfig& cfg, double trace_P);

} // namespace fdalloc
