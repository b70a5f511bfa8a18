#include "fdalloc/allocator.hpp"

#include <algorithm>
#include <cmath>

namespace fdalloc {

void TeamSpec::validate() const {
    if (N < 1 || M < 1) throw std::invalid_argument("team: N and M must be >= 1");
    if (S.rows() != N || S.cols() != M) throw std::invalid_argument("team: S must be N x M");
    if (base_weights.rows() != N || base_weights.cols() != M)
        throw std::invalid_argument("team: base_weights must be N x M");
    if (base_slack_cost.size() != N)
        throw std::invalid_argument("team: base_slack_cost must have N entries");
    if (S.minCoeff() < 0.0 || S.maxCoeff() > 1.0)
        throw std::invalid_argument("team: S entries must lie in [0, 1]");
    if (base_weights.minCoeff() < 0.0)
        throw std::invalid_argument("team: base weights must be >= 0");
    if (base_slack_cost.minCoeff() <= 0.0)
        throw std::invalid_argument("team: slack costs must be > 0");
    if (kappa <= 0.0 || rho <= 0.0 || delta_max <= 0.0)
        throw std::invalid_argument("team: kappa, rho, delta_max must be > 0");
    for (int m = 0; m < M; ++m) {
        if (S.col(m).maxCoeff() <= 0.0)
            throw std::invalid_argument("team: task " + std::to_string(m) +
                                        " has no capable robot");
    }
}

void HealthPolicy::validate() const {
    if (!(M_f > kappa_s && kappa_s > 0.0))
        throw std::invalid_argument("policy: require M_f > kappa_s > 0");
    if (rho_s <= 0.0) throw std::invalid_argument("policy: rho_s must be > 0");
    if (lambda < 0.0) throw std::invalid_argument("policy: lambda must be >= 0");
    if (cooldown_steps < 0 || periodic_resolve_every < 1)
        throw std::invalid_argument("policy: bad trigger intervals");
}

HealthWeights health_weights(const TeamSpec& spec, const HealthPolicy& policy,
                             const std::vector<HealthLabel>& health) {
    if (static_cast<int>(health.size()) != spec.N)
        throw std::invalid_argument("health_weights: health size mismatch");
    HealthWeights out;
    out.w = spec.base_weights;
    out.c = spec.base_slack_cost;
    for (int i = 0; i < spec.N; ++i) {
        const bool suspect = health[i] == HealthLabel::Suspect ||
                             health[i] == HealthLabel::Uninformative;
        const bool fault = health[i] == HealthLabel::Fault;
        if (suspect) {
            out.w.row(i).array() += policy.kappa_s;
            out.c(i) *= 1.0 + policy.rho_s;
        }
        if (fault) out.w.row(i).array() += policy.M_f;
    }
    return out;
}

std::vector<double> health_mask(const TeamSpec& spec, const std::vector<HealthLabel>& health) {
    if (static_cast<int>(health.size()) != spec.N)
        throw std::invalid_argument("health_mask: health size mismatch");
    std::vector<double> g(static_cast<std::size_t>(spec.N), 1.0);
    for (int i = 0; i < spec.N; ++i) {
        if (health[i] == HealthLabel::Fault) g[static_cast<std::size_t>(i)] = 0.0;
    }
    return g;
}

bool should_reallocate(long step, bool health_changed, long last_solve_step,
                       const HealthPolicy& policy) {
    const long since = step - last_solve_step;
    if (health_changed && since >= policy.cooldown_steps) return true;
    return since >= policy.periodic_resolve_every;
}

AllocationQp build_allocation_qp(const TeamSpec& spec, const Eigen::MatrixXd& positions,
                                 const Eigen::MatrixXd& goals, const Eigen::MatrixXd& w,
                                 const Eigen::VectorXd& c, const std::vector<double>& g,
                                 const std::optional<Eigen::MatrixXd>& prev_alpha, double lambda,
                                 double u_max, const std::vector<bool>& task_active,
                                 const std::vector<bool>& gated_tasks) {
    spec.validate();
    const int N = spec.N;
    const int M = spec.M;
    if (positions.rows() != N || positions.cols() != 2)
        throw std::invalid_argument("build_allocation_qp: positions must be N x 2");
    if (goals.rows() != M || goals.cols() != 2)
        throw std::invalid_argument("build_allocation_qp: goals must be M x 2");
    if (w.rows() != N || w.cols() != M)
        throw std::invalid_argument("build_allocation_qp: w must be N x M");
    if (c.size() != N) throw std::invalid_argument("build_allocation_qp: c must have N entries");
    if (static_cast<int>(g.size()) != N)
        throw std::invalid_argument("build_allocation_qp: g must have N entries");
    if (prev_alpha && (prev_alpha->rows() != N || prev_alpha->cols() != M))
        throw std::invalid_argument("build_allocation_qp: prev_alpha must be N x M");
    if (u_max <= 0.0) throw std::invalid_argument("build_allocation_qp: u_max must be > 0");

    auto active = [&](int m) {
        return task_active.empty() || task_active[static_cast<std::size_t>(m)];
    };
    auto gated = [&](int m) {
        return gated_tasks.empty() || gated_tasks[static_cast<std::size_t>(m)];
    };

    AllocationQp built;
    built.layout.N = N;
    built.layout.M = M;
    built.layout.churn = prev_alpha.has_value() && lambda > 0.0;
    built.has_prev = prev_alpha.has_value();
    built.prev_alpha = prev_alpha ? *prev_alpha : Eigen::MatrixXd::Zero(N, M);
    const AllocationLayout& L = built.layout;
    const Eigen::Index nv = L.num_vars();

    // caps: alpha <= S * g on gated tasks, <= S otherwise; 0 once complete
    Eigen::MatrixXd cap(N, M);
    for (int i = 0; i < N; ++i) {
        for (int m = 0; m < M; ++m) {
            double v = spec.S(i, m);
            if (gated(m)) v *= g[static_cast<std::size_t>(i)];
            if (!active(m)) v = 0.0;
            cap(i, m) = v;
        }
    }

    QpProblem qp;
    qp.P = Eigen::MatrixXd::Zero(nv, nv);
    qp.q = Eigen::VectorXd::Zero(nv);
    for (int i = 0; i < N; ++i) {
        qp.P(L.u_index(i, 0), L.u_index(i, 0)) = 2.0;
        qp.P(L.u_index(i, 1), L.u_index(i, 1)) = 2.0;
    }
    // coverage pull: B (1 - sum_i alpha_im)^2 per active task
    const double B = spec.coverage_gain;
    for (int m = 0; m < M; ++m) {
        if (!active(m)) continue;
        for (int i = 0; i < N; ++i) {
            for (int j = 0; j < N; ++j) qp.P(L.alpha_index(i, m), L.alpha_index(j, m)) += 2.0 * B;
            qp.q(L.alpha_index(i, m)) -= 2.0 * B;
        }
    }
    for (int i = 0; i < N; ++i) {
        for (int m = 0; m < M; ++m) {
            qp.q(L.alpha_index(i, m)) += w(i, m);
            qp.q(L.delta_index(i, m)) += c(i);
            if (L.churn) qp.q(L.t_index(i, m)) += lambda;
        }
    }

    // count inequality rows
    int barrier_rows = 0;
    for (int i = 0; i < N; ++i)
        for (int m = 0; m < M; ++m)
            if (cap(i, m) > 0.0) ++barrier_rows;
    const int rows = barrier_rows + 2 * N * M + N + 2 * N * M + (L.churn ? 2 * N * M : 0) + 4 * N;
    qp.G = Eigen::MatrixXd::Zero(rows, nv);
    qp.h = Eigen::VectorXd::Zero(rows);
    int r = 0;

    // (a) progress constraint, active in proportion to alpha:
    //     2 d'u + (kappa |d|^2 + relax) alpha - rho delta <= relax
    for (int i = 0; i < N; ++i) {
        for (int m = 0; m < M; ++m) {
            if (cap(i, m) <= 0.0) continue;
            const Eigen::Vector2d d = positions.row(i).transpose() - goals.row(m).transpose();
            qp.G(r, L.u_index(i, 0)) = 2.0 * d.x();
            qp.G(r, L.u_index(i, 1)) = 2.0 * d.y();
            qp.G(r, L.alpha_index(i, m)) = spec.kappa * d.squaredNorm() + spec.barrier_relax;
            qp.G(r, L.delta_index(i, m)) = -spec.rho;
            qp.h(r) = spec.barrier_relax;
            ++r;
        }
    }
    // (b) 0 <= alpha <= cap
    for (int i = 0; i < N; ++i) {
        for (int m = 0; m < M; ++m) {
            qp.G(r, L.alpha_index(i, m)) = 1.0;
            qp.h(r) = cap(i, m);
            ++r;
            qp.G(r, L.alpha_index(i, m)) = -1.0;
            qp.h(r) = 0.0;
            ++r;
        }
    }
    // (c) per-robot simplex
    for (int i = 0; i < N; ++i) {
        for (int m = 0; m < M; ++m) qp.G(r, L.alpha_index(i, m)) = 1.0;
        qp.h(r) = 1.0;
        ++r;
    }
    // (d) 0 <= delta <= delta_max
    for (int i = 0; i < N; ++i) {
        for (int m = 0; m < M; ++m) {
            qp.G(r, L.delta_index(i, m)) = 1.0;
            qp.h(r) = spec.delta_max;
            ++r;
            qp.G(r, L.delta_index(i, m)) = -1.0;
            qp.h(r) = 0.0;
            ++r;
        }
    }
    // (e) churn epigraph: t >= +-(alpha - prev)
    if (L.churn) {
        for (int i = 0; i < N; ++i) {
            for (int m = 0; m < M; ++m) {
                qp.G(r, L.alpha_index(i, m)) = 1.0;
                qp.G(r, L.t_index(i, m)) = -1.0;
                qp.h(r) = built.prev_alpha(i, m);
                ++r;
                qp.G(r, L.alpha_index(i, m)) = -1.0;
                qp.G(r, L.t_index(i, m)) = -1.0;
                qp.h(r) = -built.prev_alpha(i, m);
                ++r;
            }
        }
    }
    // (f) speed box
    for (int i = 0; i < N; ++i) {
        for (int axis = 0; axis < 2; ++axis) {
            qp.G(r, L.u_index(i, axis)) = 1.0;
            qp.h(r) = u_max;
            ++r;
            qp.G(r, L.u_index(i, axis)) = -1.0;
            qp.h(r) = u_max;
            ++r;
        }
    }

    qp.A = Eigen::MatrixXd::Zero(0, nv);
    qp.b = Eigen::VectorXd::Zero(0);

    qp.variable_names.reserve(static_cast<std::size_t>(nv));
    for (int i = 0; i < N; ++i) {
        qp.variable_names.push_back("u" + std::to_string(i) + "x");
        qp.variable_names.push_back("u" + std::to_string(i) + "y");
    }
    auto pair_names = [&](const char* prefix) {
        for (int i = 0; i < N; ++i)
            for (int m = 0; m < M; ++m)
                qp.variable_names.push_back(prefix + std::to_string(i) + "_" + std::to_string(m));
    };
    pair_names("a");
    pair_names("d");
    if (L.churn) pair_names("t");

    built.qp = std::move(qp);
    return built;
}

AllocationSolution solve_allocation(const AllocationQp& built,
                                    const std::optional<AllocationSolution>& warm,
                                    const QpSettings& settings) {
    std::optional<QpWarmStart> ws;
    if (warm && warm->solver_stats.x.size() == built.qp.num_vars()) {
        QpWarmStart w;
        w.x = warm->solver_stats.x;
        Eigen::VectorXd duals(built.qp.num_ineq());
        if (warm->solver_stats.mu.size() == built.qp.num_ineq()) {
            duals = warm->solver_stats.mu;
            w.y = duals;
        }
        ws = std::move(w);
    }

    QpSolution qsol = solve_qp(built.qp, ws, settings);
    if (qsol.status == QpStatus::Infeasible) {
        throw AllocationInfeasible("allocation infeasible (slack should prevent this)",
                                   dump_problem(built.qp));
    }

    const AllocationLayout& L = built.layout;
    AllocationSolution out;
    out.u.resize(L.N, 2);
    out.alpha.resize(L.N, L.M);
    out.delta.resize(L.N, L.M);
    for (int i = 0; i < L.N; ++i) {
        out.u(i, 0) = qsol.x(L.u_index(i, 0));
        out.u(i, 1) = qsol.x(L.u_index(i, 1));
        for (int m = 0; m < L.M; ++m) {
            out.alpha(i, m) = std::clamp(qsol.x(L.alpha_index(i, m)), 0.0, 1.0);
            out.delta(i, m) = std::max(qsol.x(L.delta_index(i, m)), 0.0);
        }
    }
    out.churn = built.has_prev ? (out.alpha - built.prev_alpha).cwiseAbs().sum() : 0.0;
    out.objective = qsol.objective;
    out.solver_stats = std::move(qsol);
    return out;
}

std::vector<int> extract_assignments(const Eigen::MatrixXd& alpha) {
    const int N = static_cast<int>(alpha.rows());
    const int M = static_cast<int>(alpha.cols());
    std::vector<int> owner(static_cast<std::size_t>(M), -1);
    for (int m = 0; m < M; ++m) {
        double best = 0.5;
        for (int i = 0; i < N; ++i) {
            if (alpha(i, m) > best) {
                best = alpha(i, m);
                owner[static_cast<std::size_t>(m)] = i;
            }
        }
    }
    std::vector<int> assigned(static_cast<std::size_t>(N), -1);
    for (int m = 0; m < M; ++m) {
        const int i = owner[static_cast<std::size_t>(m)];
        if (i >= 0) assigned[static_cast<std::size_t>(i)] = m;
    }
    return assigned;
}

} // namespace fdalloc
