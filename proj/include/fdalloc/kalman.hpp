#pragma once

#include <Eigen/Core>

#include <optional>

namespace fdalloc {

enum class KfVariant { CV, RT };

/// Two-state progress filter model on x = [r, rdot].
///
/// CV (command-unaware): x_{t+1} = [[1, dt], [0, 1]] x_t + w_t.
/// RT (command-aware):   x_{t+1} = [[1, 0], [0, 0]] x_t + [dt, 1]^T u_t + w_t.
/// Both measure y_t = [1 0] x_t + v_t.
struct KfModel {
    KfVariant variant = KfVariant::CV;
    double dt = 0.1;
    Eigen::Matrix2d A = Eigen::Matrix2d::Identity();
    Eigen::Vector2d B = Eigen::Vector2d::Zero(); // RT only
    Eigen::RowVector2d C{1.0, 0.0};
    Eigen::Matrix2d Q = Eigen::Matrix2d::Zero();
    double R = 1e-6;
};

KfModel make_cv_model(double dt, const Eigen::Matrix2d& Q, double R);
KfModel make_rt_model(double dt, const Eigen::Matrix2d& Q, double R);

struct KfState {
    Eigen::Vector2d x_hat = Eigen::Vector2d::Zero();
    Eigen::Matrix2d P = Eigen::Matrix2d::Zero();
    Eigen::Vector2d x_prior = Eigen::Vector2d::Zero();
    Eigen::Matrix2d P_prior = Eigen::Matrix2d::Zero();
    bool predicted = false; // a predict has happened since the last update
};

struct KfUpdate {
    KfState state;
    double innovation = 0.0;
    double S = 0.0; // innovation variance
};

/// Initialize the filter at progress r0 with rate rdot0 and covariance P0 (PSD).
/// Throws std::invalid_argument if r0 is outside [0, 1] or P0 is not PSD.
KfState kf_init(double r0, double rdot0, const Eigen::Matrix2d& P0);

/// Time update. `u` is the nominal progress rate, required for RT and
/// forbidden for CV. Posterior is set to the prior, so repeated predicts
/// implement prediction-only operation during measurement dropout.
KfState kf_predict(const KfState& state, const KfModel& model,
                   std::optional<double> u = std::nullopt);

/// Measurement update; returns the new state plus the innovation and its
/// variance S = P_prior(0,0) + R for the detector.
KfUpdate kf_update(const KfState& state, const KfModel& model, double y);

/// Paper baseline Q0 = diag(1.0e-6, 5.0e-5) before the 1/L^2 scaling.
Eigen::Matrix2d default_q0_base();

/// Distance-dependent covariance scaling: R = sigma_xy^2 / L^2, Q = Q0_base / L^2.
struct ScaledCovariances {
    Eigen::Matrix2d Q;
    double R;
};
ScaledCovariances scale_covariances(double L, double sigma_xy,
                                    const Eigen::Matrix2d& Q0_base = default_q0_base());

/// Open-loop covariance after D prediction-only steps:
/// P_{k+D|k} = A^D P A^D^T + sum_{j<D} A^j Q A^j^T.
/// Uses the closed form A^D = [[1, D dt], [0, 1]] for the CV model.
Eigen::Matrix2d dropout_covariance(const Eigen::Matrix2d& P, const KfModel& model, long D);

struct OutageBudget {
    enum class Kind { Finite, CapReached, AlreadyUninformative } kind = Kind::Finite;
    long d_max = 0;
};

/// Largest D with trace(dropout_covariance(P, model, D)) <= gamma.
/// Returns AlreadyUninformative if trace(P) > gamma, CapReached if the trace
/// never exceeds gamma within `cap` steps.
OutageBudget max_informative_outage(const Eigen::Matrix2d& P, const KfModel& model, double gamma,
                                    long cap = 1000000);

} // namespace fdalloc
