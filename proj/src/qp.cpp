#include "fdalloc/qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fdalloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Eigen::VectorXd& v) {
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Internal box form: min 0.5 x'Px + q'x  s.t.  l <= Cx <= u.
struct BoxProblem {
    Eigen::MatrixXd P;
    Eigen::VectorXd q;
    Eigen::MatrixXd C;
    Eigen::VectorXd l, u;
};

// Ruiz equilibration state; x_orig = D * x_scaled, y_orig = E * y_scaled / c.
struct Scaling {
    Eigen::VectorXd D;
    Eigen::VectorXd E;
    double c = 1.0;
};

Scaling ruiz_equilibrate(BoxProblem& bp, int iters = 10) {
    const Eigen::Index n = bp.P.rows();
    const Eigen::Index m = bp.C.rows();
    Scaling s;
    s.D = Eigen::VectorXd::Ones(n);
    s.E = Eigen::VectorXd::Ones(m);
    s.c = 1.0;

    for (int k = 0; k < iters; ++k) {
        Eigen::VectorXd dx(n), de(m);
        for (Eigen::Index j = 0; j < n; ++j) {
            double norm = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) norm = std::max(norm, std::fabs(bp.P(i, j)));
            for (Eigen::Index i = 0; i < m; ++i) norm = std::max(norm, std::fabs(bp.C(i, j)));
            dx(j) = norm > 0.0 ? 1.0 / std::sqrt(norm) : 1.0;
        }
        for (Eigen::Index i = 0; i < m; ++i) {
            double norm = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) norm = std::max(norm, std::fabs(bp.C(i, j)));
            de(i) = norm > 0.0 ? 1.0 / std::sqrt(norm) : 1.0;
        }
        bp.P = dx.asDiagonal() * bp.P * dx.asDiagonal();
        bp.q = dx.asDiagonal() * bp.q;
        bp.C = de.asDiagonal() * bp.C * dx.asDiagonal();
        for (Eigen::Index i = 0; i < m; ++i) {
            if (std::isfinite(bp.l(i))) bp.l(i) *= de(i);
            if (std::isfinite(bp.u(i))) bp.u(i) *= de(i);
        }
        s.D = s.D.cwiseProduct(dx);
        s.E = s.E.cwiseProduct(de);

        // cost normalization
        double mean_col = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            double norm = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) norm = std::max(norm, std::fabs(bp.P(i, j)));
            mean_col += norm;
        }
        mean_col = n > 0 ? mean_col / static_cast<double>(n) : 0.0;
        const double denom = std::max(mean_col, inf_norm(bp.q));
        const double g = denom > 0.0 ? 1.0 / denom : 1.0;
        bp.P *= g;
        bp.q *= g;
        s.c *= g;
    }
    return s;
}

struct Residuals {
    double prim = 0.0;
    double dual = 0.0;
    double prim_rel_den = 0.0;
    double dual_rel_den = 0.0;
};

Residuals compute_residuals(const BoxProblem& orig, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& z, const Eigen::VectorXd& y) {
    Residuals r;
    const Eigen::VectorXd Cx = orig.C * x;
    r.prim = inf_norm(Cx - z);
    r.prim_rel_den = std::max(inf_norm(Cx), inf_norm(z));
    const Eigen::VectorXd Px = orig.P * x;
    const Eigen::VectorXd Cty = orig.C.transpose() * y;
    r.dual = inf_norm(Px + orig.q + Cty);
    r.dual_rel_den = std::max({inf_norm(Px), inf_norm(orig.q), inf_norm(Cty)});
    return r;
}

// Primal infeasibility certificate: dy with C'dy ~ 0 and u'[dy]+ + l'[dy]- < 0.
bool primal_infeasibility(const BoxProblem& orig, const Eigen::VectorXd& dy, double eps) {
    const double norm_dy = inf_norm(dy);
    if (norm_dy < 1e-14) return false;
    if (inf_norm(orig.C.transpose() * dy) > eps * norm_dy) return false;
    double support = 0.0;
    for (Eigen::Index i = 0; i < dy.size(); ++i) {
        const double pos = std::max(dy(i), 0.0);
        const double neg = std::min(dy(i), 0.0);
        if (pos > eps * norm_dy && !std::isfinite(orig.u(i))) return false;
        if (neg < -eps * norm_dy && !std::isfinite(orig.l(i))) return false;
        if (std::isfinite(orig.u(i))) support += orig.u(i) * pos;
        if (std::isfinite(orig.l(i))) support += orig.l(i) * neg;
    }
    return support < -eps * norm_dy;
}

// Dual infeasibility certificate: direction dx of unbounded descent.
bool dual_infeasibility(const BoxProblem& orig, const Eigen::VectorXd& dx, double eps) {
    const double norm_dx = inf_norm(dx);
    if (norm_dx < 1e-14) return false;
    if (inf_norm(orig.P * dx) > eps * norm_dx) return false;
    if (orig.q.dot(dx) > -eps * norm_dx) return false;
    const Eigen::VectorXd Cdx = orig.C * dx;
    for (Eigen::Index i = 0; i < Cdx.size(); ++i) {
        if (std::isfinite(orig.u(i)) && Cdx(i) > eps * norm_dx) return false;
        if (std::isfinite(orig.l(i)) && Cdx(i) < -eps * norm_dx) return false;
    }
    return true;
}

// Active-set polish: solve the equality-constrained KKT system on the rows the
// ADMM duals mark active, with tiny regularization and iterative refinement.
bool polish_solution(const BoxProblem& orig, const Eigen::VectorXd& y_hint, Eigen::VectorXd& x_out,
                     Eigen::VectorXd& y_out) {
    const Eigen::Index n = orig.P.rows();
    const Eigen::Index m = orig.C.rows();
    std::vector<Eigen::Index> active;
    std::vector<double> rhs_act;
    for (Eigen::Index i = 0; i < m; ++i) {
        const bool eq = std::isfinite(orig.l(i)) && std::isfinite(orig.u(i)) &&
                        orig.u(i) - orig.l(i) < 1e-14;
        if (eq) {
            active.push_back(i);
            rhs_act.push_back(orig.u(i));
        } else if (y_hint(i) > 1e-10 && std::isfinite(orig.u(i))) {
            active.push_back(i);
            rhs_act.push_back(orig.u(i));
        } else if (y_hint(i) < -1e-10 && std::isfinite(orig.l(i))) {
            active.push_back(i);
            rhs_act.push_back(orig.l(i));
        }
    }
    const Eigen::Index k = static_cast<Eigen::Index>(active.size());
    const double delta = 1e-9;

    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
    K.topLeftCorner(n, n) = orig.P + delta * Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index a = 0; a < k; ++a) {
        K.block(n + a, 0, 1, n) = orig.C.row(active[static_cast<std::size_t>(a)]);
        K.block(0, n + a, n, 1) = orig.C.row(active[static_cast<std::size_t>(a)]).transpose();
        K(n + a, n + a) = -delta;
    }
    Eigen::VectorXd rhs(n + k);
    rhs.head(n) = -orig.q;
    for (Eigen::Index a = 0; a < k; ++a) rhs(n + a) = rhs_act[static_cast<std::size_t>(a)];

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
    Eigen::VectorXd t = lu.solve(rhs);
    if (!t.allFinite()) return false;

    // refine against the unregularized KKT operator
    Eigen::MatrixXd K0 = K;
    K0.topLeftCorner(n, n) = orig.P;
    for (Eigen::Index a = 0; a < k; ++a) K0(n + a, n + a) = 0.0;
    for (int r = 0; r < 3; ++r) {
        const Eigen::VectorXd resid = rhs - K0 * t;
        t += lu.solve(resid);
    }
    if (!t.allFinite()) return false;

    x_out = t.head(n);
    y_out = Eigen::VectorXd::Zero(m);
    for (Eigen::Index a = 0; a < k; ++a) y_out(active[static_cast<std::size_t>(a)]) = t(n + a);
    return true;
}

double kkt_residual_box(const BoxProblem& orig, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& y) {
    double res = inf_norm(orig.P * x + orig.q + orig.C.transpose() * y);
    const Eigen::VectorXd Cx = orig.C * x;
    for (Eigen::Index i = 0; i < Cx.size(); ++i) {
        if (std::isfinite(orig.u(i))) {
            res = std::max(res, Cx(i) - orig.u(i));                        // feasibility
            res = std::max(res, std::fabs(std::max(y(i), 0.0) * (Cx(i) - orig.u(i))));
        } else if (y(i) > 0.0) {
            res = std::max(res, y(i)); // multiplier on a nonexistent bound
        }
        if (std::isfinite(orig.l(i))) {
            res = std::max(res, orig.l(i) - Cx(i));
            res = std::max(res, std::fabs(std::min(y(i), 0.0) * (Cx(i) - orig.l(i))));
        } else if (y(i) < 0.0) {
            res = std::max(res, -y(i));
        }
    }
    return res;
}

} // namespace

void QpProblem::validate() const {
    const Eigen::Index n = P.rows();
    if (P.cols() != n) throw std::invalid_argument("qp: P must be square");
    if (q.size() != n) throw std::invalid_argument("qp: q size mismatch");
    if (G.rows() != h.size()) throw std::invalid_argument("qp: G/h size mismatch");
    if (G.rows() > 0 && G.cols() != n) throw std::invalid_argument("qp: G column mismatch");
    if (A.rows() != b.size()) throw std::invalid_argument("qp: A/b size mismatch");
    if (A.rows() > 0 && A.cols() != n) throw std::invalid_argument("qp: A column mismatch");
    if (!variable_names.empty() && static_cast<Eigen::Index>(variable_names.size()) != n)
        throw std::invalid_argument("qp: variable_names size mismatch");
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, P.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("qp: P must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (P + P.transpose()),
                                                      Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin < -1e-10 * std::max(1.0, P.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("qp: P is not positive semidefinite");
}

const char* to_string(QpStatus status) {
    switch (status) {
        case QpStatus::Optimal: return "optimal";
        case QpStatus::Infeasible: return "infeasible";
        case QpStatus::MaxIter: return "max_iter";
    }
    return "?";
}

double kkt_residual(const QpProblem& problem, const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                    const Eigen::VectorXd& nu) {
    if (x.size() != problem.num_vars() || mu.size() != problem.num_ineq() ||
        nu.size() != problem.num_eq())
        throw std::invalid_argument("kkt_residual: dimension mismatch");
    double res = inf_norm(problem.P * x + problem.q + problem.G.transpose() * mu +
                          problem.A.transpose() * nu);
    if (problem.num_ineq() > 0) {
        const Eigen::VectorXd slack = problem.G * x - problem.h;
        res = std::max(res, slack.maxCoeff());                        // primal feasibility
        res = std::max(res, mu.cwiseProduct(slack).cwiseAbs().maxCoeff()); // complementarity
        res = std::max(res, (-mu).maxCoeff());                        // dual feasibility
    }
    if (problem.num_eq() > 0) {
        res = std::max(res, inf_norm(problem.A * x - problem.b));
    }
    return std::max(res, 0.0);
}

QpSolution solve_qp(const QpProblem& problem, const std::optional<QpWarmStart>& warm,
                    const QpSettings& settings) {
    const auto t0 = std::chrono::steady_clock::now();
    problem.validate();

    const Eigen::Index n = problem.num_vars();
    const Eigen::Index mi = problem.num_ineq();
    const Eigen::Index me = problem.num_eq();
    const Eigen::Index m = mi + me;

    // regularize a semidefinite P (assignment variables enter linearly)
    Eigen::MatrixXd Pw = 0.5 * (problem.P + problem.P.transpose());
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Pw, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < 1e-9)
            Pw += 1e-9 * Eigen::MatrixXd::Identity(n, n);
    }

    BoxProblem orig;
    orig.P = Pw;
    orig.q = problem.q;
    orig.C.resize(m, n);
    orig.l.resize(m);
    orig.u.resize(m);
    if (mi > 0) {
        orig.C.topRows(mi) = problem.G;
        orig.l.head(mi).setConstant(-kInf);
        orig.u.head(mi) = problem.h;
    }
    if (me > 0) {
        orig.C.bottomRows(me) = problem.A;
        orig.l.tail(me) = problem.b;
        orig.u.tail(me) = problem.b;
    }

    BoxProblem sp = orig;
    const Scaling sc = ruiz_equilibrate(sp);

    // per-row step sizes: stiffer on equality rows
    double rho_base = settings.rho0;
    auto make_rho = [&](double base) {
        Eigen::VectorXd rho(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const bool eq = std::isfinite(sp.l(i)) && std::isfinite(sp.u(i)) &&
                            sp.u(i) - sp.l(i) < 1e-14;
            rho(i) = eq ? base * 1e3 : base;
        }
        return rho;
    };
    Eigen::VectorXd rho = make_rho(rho_base);

    auto factorize = [&](const Eigen::VectorXd& rho_vec) {
        Eigen::MatrixXd M = sp.P + settings.sigma * Eigen::MatrixXd::Identity(n, n);
        if (m > 0) M += sp.C.transpose() * rho_vec.asDiagonal() * sp.C;
        return Eigen::LDLT<Eigen::MatrixXd>(M);
    };
    Eigen::LDLT<Eigen::MatrixXd> kkt = factorize(rho);

    // scaled iterates
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    if (warm.has_value()) {
        if (warm->x.size() != n) throw std::invalid_argument("solve_qp: warm start size mismatch");
        x = sc.D.cwiseInverse().asDiagonal() * warm->x;
        if (warm->y.size() == m) y = sc.c * sc.E.cwiseInverse().asDiagonal() * warm->y;
        if (m > 0) z = (sp.C * x).cwiseMax(sp.l).cwiseMin(sp.u);
    }

    QpSolution sol;
    sol.status = QpStatus::MaxIter;

    auto unscale_x = [&](const Eigen::VectorXd& xs) { return (sc.D.asDiagonal() * xs).eval(); };
    auto unscale_y = [&](const Eigen::VectorXd& ys) {
        return ((sc.E.asDiagonal() * ys) / sc.c).eval();
    };

    auto finish = [&](const Eigen::VectorXd& xu, const Eigen::VectorXd& yu, QpStatus status,
                      int iters) {
        sol.x = xu;
        sol.mu = Eigen::VectorXd::Zero(mi);
        sol.nu = Eigen::VectorXd::Zero(me);
        for (Eigen::Index i = 0; i < mi; ++i) sol.mu(i) = std::max(yu(i), 0.0);
        for (Eigen::Index i = 0; i < me; ++i) sol.nu(i) = yu(mi + i);
        sol.objective = 0.5 * xu.dot(problem.P * xu) + problem.q.dot(xu);
        sol.status = status;
        sol.iterations = iters;
        sol.kkt_residual = kkt_residual(problem, sol.x, sol.mu, sol.nu);
        if (status == QpStatus::Optimal) {
            // status certifies the contract; downgrade if the certificate fails
            double viol = 0.0;
            if (mi > 0) viol = std::max(viol, (problem.G * xu - problem.h).maxCoeff());
            if (me > 0) viol = std::max(viol, inf_norm(problem.A * xu - problem.b));
            if (viol > 1e-6 || sol.kkt_residual > 1e-6) sol.status = QpStatus::MaxIter;
        }
        sol.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    Eigen::VectorXd dy_acc = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd dx_acc = Eigen::VectorXd::Zero(n);
    int refactor_count = 0;

    int iter = 0;
    while (iter < settings.max_iter) {
        ++iter;

        Eigen::VectorXd rhs = settings.sigma * x - sp.q;
        if (m > 0) rhs += sp.C.transpose() * (rho.cwiseProduct(z) - y);
        const Eigen::VectorXd x_tilde = kkt.solve(rhs);
        const Eigen::VectorXd z_tilde = m > 0 ? (sp.C * x_tilde).eval() : Eigen::VectorXd(0);

        const Eigen::VectorXd x_next = settings.alpha_relax * x_tilde +
                                       (1.0 - settings.alpha_relax) * x;
        Eigen::VectorXd z_next(m), y_next(m);
        if (m > 0) {
            const Eigen::VectorXd w = settings.alpha_relax * z_tilde +
                                      (1.0 - settings.alpha_relax) * z;
            z_next = (w + y.cwiseQuotient(rho)).cwiseMax(sp.l).cwiseMin(sp.u);
            y_next = y + rho.cwiseProduct(w - z_next);
        }

        dx_acc = x_next - x;
        if (m > 0) dy_acc = y_next - y;
        x = x_next;
        if (m > 0) {
            z = z_next;
            y = y_next;
        }

        const bool check = iter == 1 || iter % settings.check_interval == 0 ||
                           iter == settings.max_iter;
        if (!check) continue;

        const Eigen::VectorXd xu = unscale_x(x);
        const Eigen::VectorXd yu = m > 0 ? unscale_y(y) : Eigen::VectorXd(0);
        const Eigen::VectorXd zu = m > 0
            ? (sc.E.cwiseInverse().asDiagonal() * z).eval()
            : Eigen::VectorXd(0);
        const Residuals res = compute_residuals(orig, xu, zu, yu);
        const double eps_p = settings.eps_abs + settings.eps_rel * res.prim_rel_den;
        const double eps_d = settings.eps_abs + settings.eps_rel * res.dual_rel_den;

        const bool admm_converged = (m == 0 || res.prim <= eps_p) && res.dual <= eps_d;

        // try to snap to the exact active-set solution once close enough
        const bool near = (m == 0 || res.prim <= 1e4 * eps_p) && res.dual <= 1e4 * eps_d;
        if (settings.polish && (admm_converged || near)) {
            Eigen::VectorXd xp, yp;
            if (polish_solution(orig, m > 0 ? yu : Eigen::VectorXd(0), xp, yp)) {
                const double polished = kkt_residual_box(orig, xp, yp);
                const double raw = kkt_residual_box(orig, xu, yu);
                if (polished <= std::max(settings.eps_abs, 1e-9) || polished < raw) {
                    if (polished <= 1e-7) {
                        finish(xp, yp, QpStatus::Optimal, iter);
                        return sol;
                    }
                }
            }
        }
        if (admm_converged) {
            finish(xu, yu, QpStatus::Optimal, iter);
            return sol;
        }

        if (m > 0) {
            const Eigen::VectorXd dyu = unscale_y(dy_acc);
            if (primal_infeasibility(orig, dyu, settings.eps_infeas)) {
                finish(xu, yu, QpStatus::Infeasible, iter);
                return sol;
            }
        }
        if (dual_infeasibility(orig, unscale_x(dx_acc), settings.eps_infeas)) {
            // unbounded below: report as MaxIter with diagnostics
            finish(xu, yu, QpStatus::MaxIter, iter);
            return sol;
        }

        // adaptive step size
        if (settings.adaptive_rho && m > 0 && refactor_count < 10) {
            const double pn = res.prim / std::max(res.prim_rel_den, 1e-12);
            const double dn = res.dual / std::max(res.dual_rel_den, 1e-12);
            if (pn > 1e-14 && dn > 1e-14) {
                const double ratio = std::sqrt(pn / dn);
                if (ratio > 5.0 || ratio < 0.2) {
                    rho_base = std::clamp(rho_base * ratio, 1e-6, 1e6);
                    rho = make_rho(rho_base);
                    kkt = factorize(rho);
                    ++refactor_count;
                }
            }
        }
    }

    finish(unscale_x(x), m > 0 ? unscale_y(y) : Eigen::VectorXd(0), QpStatus::MaxIter,
           settings.max_iter);
    return sol;
}

std::string dump_problem(const QpProblem& problem) {
    std::ostringstream os;
    os.precision(17);
    auto block = [&os](const char* name, const Eigen::MatrixXd& M) {
        os << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
        for (Eigen::Index i = 0; i < M.rows(); ++i) {
            for (Eigen::Index j = 0; j < M.cols(); ++j) {
                os << M(i, j) << (j + 1 == M.cols() ? '\n' : ' ');
            }
        }
    };
    os << "# qp problem dump\n";
    block("P", problem.P);
    block("q", problem.q);
    block("G", problem.G);
    block("h", problem.h);
    block("A", problem.A);
    block("b", problem.b);
    if (!problem.variable_names.empty()) {
        os << "names";
        for (const auto& v : problem.variable_names) os << ' ' << v;
        os << '\n';
    }
    return os.str();
}

} // namespace fdalloc
