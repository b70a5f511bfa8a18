#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace fdalloc {

/// Dense convex QP: minimize 0.5 x'Px + q'x subject to Gx <= h, Ax = b.
struct QpProblem {
    Eigen::MatrixXd P; // n x n, symmetric PSD
    Eigen::VectorXd q; // n
    Eigen::MatrixXd G; // m x n
    Eigen::VectorXd h; // m
    Eigen::MatrixXd A; // p x n
    Eigen::VectorXd b; // p
    std::vector<std::string> variable_names; // optional, diagnostics only

    Eigen::Index num_vars() const { return P.rows(); }
    Eigen::Index num_ineq() const { return G.rows(); }
    Eigen::Index num_eq() const { return A.rows(); }

    /// Throws std::invalid_argument on dimension mismatch or a P that is
    /// asymmetric / indefinite beyond tolerance.
    void validate() const;
};

enum class QpStatus { Optimal, Infeasible, MaxIter };

const char* to_string(QpStatus status);

struct QpSolution {
    Eigen::VectorXd x;
    Eigen::VectorXd mu;  // inequality multipliers, >= 0
    Eigen::VectorXd nu;  // equality multipliers
    double objective = 0.0;
    QpStatus status = QpStatus::MaxIter;
    int iterations = 0;
    double solve_time = 0.0; // seconds
    double kkt_residual = 0.0;
};

struct QpSettings {
    int max_iter = 500;
    double eps_abs = 1e-8;
    double eps_rel = 1e-8;
    double eps_infeas = 1e-7;
    double sigma = 1e-6;      // proximal regularization
    double alpha_relax = 1.6; // over-relaxation
    double rho0 = 0.1;        // initial step size
    bool polish = true;
    bool adaptive_rho = true;
    int check_interval = 10;
};

struct QpWarmStart {
    Eigen::VectorXd x; // primal iterate
    Eigen::VectorXd y; // stacked row duals for [G; A] (signed; optional)
};

/// Operator-splitting (ADMM) solve with Ruiz equilibration and an active-set
/// polish step. Status Optimal certifies primal feasibility violation and
/// KKT residual both <= 1e-6; otherwise MaxIter/Infeasible is reported.
QpSolution solve_qp(const QpProblem& problem, const std::optional<QpWarmStart>& warm = std::nullopt,
                    const QpSettings& settings = QpSettings{});

/// Max over stationarity, feasibility violations, complementary slackness
/// |mu_i (Gx - h)_i| and dual negativity max(-mu_i, 0).
double kkt_residual(const QpProblem& problem, const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                    const Eigen::VectorXd& nu);

/// Plain-text dump of (P, q, G, h, A, b) for offline debugging. The format is
/// line oriented: a header per block ("P <rows> <cols>") followed by one text
/// row per matrix row.
std::string dump_problem(const QpProblem& problem);

} // namespace fdalloc
