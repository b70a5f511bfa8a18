#include "fdalloc/kalman.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace fdalloc {

namespace {

Eigen::Matrix2d symmetrize(const Eigen::Matrix2d& M) { return 0.5 * (M + M.transpose()); }

bool is_psd(const Eigen::Matrix2d& M, double tol = 1e-12) {
    const Eigen::Matrix2d S = symmetrize(M);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(S);
    return es.eigenvalues().minCoeff() >= -tol;
}

} // namespace

KfModel make_cv_model(double dt, const Eigen::Matrix2d& Q, double R) {
    if (dt <= 0.0) throw std::invalid_argument("make_cv_model: dt must be > 0");
    if (R <= 0.0) throw std::invalid_argument("make_cv_model: R must be > 0");
    if (!is_psd(Q)) throw std::invalid_argument("make_cv_model: Q must be PSD");
    KfModel m;
    m.variant = KfVariant::CV;
    m.dt = dt;
    m.A << 1.0, dt, 0.0, 1.0;
    m.B.setZero();
    m.Q = symmetrize(Q);
    m.R = R;
    return m;
}

KfModel make_rt_model(double dt, const Eigen::Matrix2d& Q, double R) {
    if (dt <= 0.0) throw std::invalid_argument("make_rt_model: dt must be > 0");
    if (R <= 0.0) throw std::invalid_argument("make_rt_model: R must be > 0");
    if (!is_psd(Q)) throw std::invalid_argument("make_rt_model: Q must be PSD");
    KfModel m;
    m.variant = KfVariant::RT;
    m.dt = dt;
    m.A << 1.0, 0.0, 0.0, 0.0;
    m.B << dt, 1.0;
    m.Q = symmetrize(Q);
    m.R = R;
    return m;
}

KfState kf_init(double r0, double rdot0, const Eigen::Matrix2d& P0) {
    if (r0 < 0.0 || r0 > 1.0) {
        throw std::invalid_argument("kf_init: progress out of range [0, 1]");
    }
    if (!is_psd(P0)) {
        throw std::invalid_argument("kf_init: P0 must be positive semidefinite");
    }
    KfState s;
    s.x_hat << r0, rdot0;
    s.P = symmetrize(P0);
    s.x_prior = s.x_hat;
    s.P_prior = s.P;
    s.predicted = false;
    return s;
}

KfState kf_predict(const KfState& state, const KfModel& model, std::optional<double> u) {
    if (model.variant == KfVariant::CV && u.has_value()) {
        throw std::invalid_argument("kf_predict: CV model takes no input");
    }
    if (model.variant == KfVariant::RT && !u.has_value()) {
        throw std::invalid_argument("kf_predict: RT model requires a nominal rate input");
    }
    KfState s = state;
    s.x_prior = model.A * state.x_hat;
    if (model.variant == KfVariant::RT) s.x_prior += model.B * (*u);
    s.P_prior = symmetrize(model.A * state.P * model.A.transpose() + model.Q);
    s.x_hat = s.x_prior;
    s.P = s.P_prior;
    s.predicted = true;
    return s;
}

KfUpdate kf_update(const KfState& state, const KfModel& model, double y) {
    if (!state.predicted) {
        throw std::logic_error("kf_update: no predict since the last update");
    }
    const double S = state.P_prior(0, 0) + model.R;
    if (S <= 0.0) {
        throw std::runtime_error("kf_update: degenerate innovation covariance");
    }
    const double innovation = y - state.x_prior(0);
    const Eigen::Vector2d K = state.P_prior * model.C.transpose() / S;

    KfUpdate out;
    out.innovation = innovation;
    out.S = S;
    out.state = state;
    out.state.x_hat = state.x_prior + K * innovation;
    const Eigen::Matrix2d IKC = Eigen::Matrix2d::Identity() - K * model.C;
    out.state.P = symmetrize(IKC * state.P_prior);
    out.state.predicted = false;
    return out;
}

Eigen::Matrix2d default_q0_base() {
    Eigen::Matrix2d q;
    q << 1.0e-6, 0.0, 0.0, 5.0e-5;
    return q;
}

ScaledCovariances scale_covariances(double L, double sigma_xy, const Eigen::Matrix2d& Q0_base) {
    if (L <= 0.0) throw std::invalid_argument("scale_covariances: L must be > 0");
    ScaledCovariances sc;
    sc.R = sigma_xy * sigma_xy / (L * L);
    sc.Q = Q0_base / (L * L);
    return sc;
}

Eigen::Matrix2d dropout_covariance(const Eigen::Matrix2d& P, const KfModel& model, long D) {
    if (D < 0) throw std::invalid_argument("dropout_covariance: D must be >= 0");
    Eigen::Matrix2d AD;
    if (model.variant == KfVariant::CV) {
        // closed form: A^D = [[1, D dt], [0, 1]]
        AD << 1.0, static_cast<double>(D) * model.dt, 0.0, 1.0;
    } else {
        AD.setIdentity();
        for (long j = 0; j < D; ++j) AD = model.A * AD;
    }
    Eigen::Matrix2d out = AD * P * AD.transpose();
    Eigen::Matrix2d Aj = Eigen::Matrix2d::Identity();
    for (long j = 0; j < D; ++j) {
        out += Aj * model.Q * Aj.transpose();
        Aj = model.A * Aj;
    }
    return symmetrize(out);
}

OutageBudget max_informative_outage(const Eigen::Matrix2d& P, const KfModel& model, double gamma,
                                    long cap) {
    if (gamma <= 0.0) throw std::invalid_argument("max_informative_outage: gamma must be > 0");
    OutageBudget b;
    if (P.trace() > gamma) {
        b.kind = OutageBudget::Kind::AlreadyUninformative;
        return b;
    }
    // trace is non-decreasing in D for PSD Q, so a linear scan terminates at
    // the first exceedance
    Eigen::Matrix2d cov = P;
    for (long d = 1; d <= cap; ++d) {
        cov = symmetrize(model.A * cov * model.A.transpose() + model.Q);
        if (cov.trace() > gamma) {
            b.kind = OutageBudget::Kind::Finite;
            b.d_max = d - 1;
            return b;
        }
    }
    b.kind = OutageBudget::Kind::CapReached;
    b.d_max = cap;
    return b;
}

} // namespace fdalloc
