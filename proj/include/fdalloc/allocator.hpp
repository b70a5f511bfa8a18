#pragma once

#include "fdalloc/detector.hpp"
#include "fdalloc/qp.hpp"

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <vector>

namespace fdalloc {

/// Static team description: specialization caps, base costs and barrier gains.
struct TeamSpec {
    int N = 0; // robots
    int M = 0; // tasks
    Eigen::MatrixXd S;            // N x M specialization, entries in [0, 1]
    Eigen::MatrixXd base_weights; // N x M, w0 >= 0
    Eigen::VectorXd base_slack_cost; // per robot, > 0
    double kappa = 0.25;    // barrier gain
    double rho = 1.0;       // slack gain in the barrier row
    double delta_max = 1.0; // slack bound
    double coverage_gain = 25.0;  // per-task pull toward total assignment 1
    double barrier_relax = 10.0;  // big-M deactivating barrier rows at alpha=0

    /// Throws if dimensions disagree or some task has no capable robot.
    void validate() const;
};

struct HealthPolicy {
    double kappa_s = 0.05; // suspect demotion penalty
    double M_f = 1000.0;   // fault penalty
    double rho_s = 1.0;    // suspect slack-cost inflation
    double lambda = 0.5;   // churn weight
    int cooldown_steps = 5;
    int periodic_resolve_every = 10;

    void validate() const;
};

struct HealthWeights {
    Eigen::MatrixXd w; // N x M effective weights
    Eigen::VectorXd c; // per-robot slack costs
};

/// Eq.-style schedules: w = w0 + kappa_s 1{suspect} + M_f 1{fault},
/// c = c0 (1 + rho_s 1{suspect}). Uninformative is demoted like Suspect.
HealthWeights health_weights(const TeamSpec& spec, const HealthPolicy& policy,
                             const std::vector<HealthLabel>& health);

/// Hard gate: g_i = 0 iff h_i = Fault. Tasks outside `gated_tasks` rely on the
/// soft M_f penalty instead of the cap.
std::vector<double> health_mask(const TeamSpec& spec, const std::vector<HealthLabel>& health);

/// Event trigger: health change after the cooldown, or the slow periodic rate.
bool should_reallocate(long step, bool health_changed, long last_solve_step,
                       const HealthPolicy& policy);

/// Index bookkeeping for the stacked decision vector [u, alpha, delta, t].
struct AllocationLayout {
    int N = 0;
    int M = 0;
    bool churn = false;
    Eigen::Index u_index(int i, int axis) const { return 2 * i + axis; }
    Eigen::Index alpha_index(int i, int m) const { return 2 * N + i * M + m; }
    Eigen::Index delta_index(int i, int m) const { return 2 * N + N * M + i * M + m; }
    Eigen::Index t_index(int i, int m) const { return 2 * N + 2 * N * M + i * M + m; }
    Eigen::Index num_vars() const { return 2 * N + (churn ? 3 : 2) * N * M; }
};

struct AllocationQp {
    QpProblem qp;
    AllocationLayout layout;
    Eigen::MatrixXd prev_alpha; // zeros when absent
    bool has_prev = false;
};

struct AllocationSolution {
    Eigen::MatrixXd u;     // N x 2 controls
    Eigen::MatrixXd alpha; // N x M in [0, 1]
    Eigen::MatrixXd delta; // N x M slack
    double churn = 0.0;    // l1 distance to the previous assignment
    double objective = 0.0;
    QpSolution solver_stats;     // x/mu/nu retained for warm starts
};

class AllocationInfeasible : public std::runtime_error {
public:
    AllocationInfeasible(const std::string& msg, std::string dump)
        : std::runtime_error(msg), problem_dump(std::move(dump)) {}
    std::string problem_dump;
};

/// Assemble the allocation QP. Barrier rows activate in proportion to alpha;
/// the l1 churn penalty uses epigraph auxiliaries and is omitted on the first
/// solve or when lambda = 0. `task_active` marks tasks still requiring
/// coverage (completed tasks get cap 0 and no pull); empty means all active.
AllocationQp build_allocation_qp(const TeamSpec& spec, const Eigen::MatrixXd& positions,
                                 const Eigen::MatrixXd& goals, const Eigen::MatrixXd& w,
                                 const Eigen::VectorXd& c, const std::vector<double>& g,
                                 const std::optional<Eigen::MatrixXd>& prev_alpha, double lambda,
                                 double u_max, const std::vector<bool>& task_active = {},
                                 const std::vector<bool>& gated_tasks = {});

/// Solve and unpack. Throws AllocationInfeasible (with a problem dump) if the
/// solver reports an infeasible program, which slack should make unreachable.
AllocationSolution solve_allocation(const AllocationQp& built,
                                    const std::optional<AllocationSolution>& warm = std::nullopt,
                                    const QpSettings& settings = QpSettings{});

/// Integer reading of a relaxed assignment: task m belongs to robot i when
/// alpha(i,m) > 0.5; conflicting claims go to the larger alpha, then the lower
/// robot index. Unassigned robots get -1.
std::vector<int> extract_assignments(const Eigen::MatrixXd& alpha);

} // namespace fdalloc
