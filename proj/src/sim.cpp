#include "fdalloc/sim.hpp"

#include "fdalloc/progress.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace fdalloc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Stream {
    int task = -1;
    double d0 = 0.0; // latched distance at assignment
    KfState kf;
    DetectorState det;
    long age = 0;       // measurement updates so far
    double q_scale = 1.0;
};

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void fill_nis_stats(RobotSummary& rs, const std::vector<double>& kept) {
    if (rs.faulty || kept.empty()) {
        rs.nis_mean = kNaN;
        rs.nis_std = kNaN;
        return;
    }
    rs.nis_mean = mean_of(kept);
    rs.nis_std = std_of(kept, rs.nis_mean);
}

} // namespace

Eigen::MatrixXd step_dynamics(const Eigen::MatrixXd& positions, const Eigen::MatrixXd& controls,
                              double dt) {
    if (positions.rows() != controls.rows() || positions.cols() != 2 || controls.cols() != 2)
        throw std::invalid_argument("step_dynamics: positions/controls must both be N x 2");
    Eigen::MatrixXd next = positions + dt * controls;
    return next.cwiseMax(0.0).cwiseMin(1.0);
}

Eigen::MatrixXd apply_actuation_faults(Eigen::MatrixXd controls,
                                       const std::vector<FaultSpec>& faults, long step) {
    for (const auto& f : faults) {
        if (f.kind == FaultSpec::Kind::TaskAbandonment && f.active_at(step) &&
            f.robot < controls.rows()) {
            controls.row(f.robot).setZero();
        }
    }
    return controls;
}

std::optional<double> measure_progress(double true_progress, double distance_to_goal,
                                       const std::vector<FaultSpec>& faults, int robot, long step,
                                       double sigma_xy, double l_min, Rng& sensor_rng) {
    double sigma = sigma_xy;
    double bias = 0.0;
    for (const auto& f : faults) {
        if (f.robot != robot || !f.active_at(step)) continue;
        switch (f.kind) {
            case FaultSpec::Kind::CommDropout:
                return std::nullopt;
            case FaultSpec::Kind::NoiseIncrease:
                sigma = f.magnitude;
                break;
            case FaultSpec::Kind::VelocitySlipBias:
                bias += f.magnitude * static_cast<double>(step - f.start_step + 1);
                break;
            case FaultSpec::Kind::TaskAbandonment:
                break; // actuation channel only
        }
    }
    const double L = std::max(distance_to_goal, l_min);
    const double noise = sensor_rng.normal() * (sigma / L);
    return Progress(true_progress + bias + noise).value();
}

namespace {

class Simulation {
public:
    explicit Simulation(const ScenarioConfig& cfg)
        : cfg_(cfg),
          N_(cfg.num_robots()),
          M_(cfg.num_tasks()),
          positions_(cfg.robot_starts),
          prev_controls_(Eigen::MatrixXd::Zero(N_, 2)),
          alpha_(Eigen::MatrixXd::Zero(N_, M_)),
          health_(static_cast<std::size_t>(N_), HealthLabel::Healthy),
          health_at_solve_(health_),
          assigned_(static_cast<std::size_t>(N_), -1),
          streams_(static_cast<std::size_t>(N_)),
          task_active_(static_cast<std::size_t>(M_), true),
          last_held_(static_cast<std::size_t>(N_), -1) {
        cfg.validate();
        sensor_rngs_.reserve(static_cast<std::size_t>(N_));
        for (int i = 0; i < N_; ++i) {
            sensor_rngs_.push_back(Rng::stream(cfg.seed, "sensor", static_cast<std::uint64_t>(i)));
        }
        log_.cfg = cfg;
        log_.summary.robots.resize(static_cast<std::size_t>(N_));
        log_.summary.tasks.resize(static_cast<std::size_t>(M_));
        for (int i = 0; i < N_; ++i) log_.summary.robots[static_cast<std::size_t>(i)].robot = i;
        for (int m = 0; m < M_; ++m) log_.summary.tasks[static_cast<std::size_t>(m)].task = m;
        for (const auto& f : cfg.faults) {
            auto& rs = log_.summary.robots.at(static_cast<std::size_t>(f.robot));
            rs.faulty = true;
            if (rs.fault_init_step < 0 || f.start_step < rs.fault_init_step)
                rs.fault_init_step = f.start_step;
        }
        kept_nis_.resize(static_cast<std::size_t>(N_));
    }

    RunLog run() {
        const long ref_step = first_fault_step();
        for (long t = 0; t < cfg_.steps; ++t) {
            StepRecord rec;
            rec.step = t;

            sense_and_detect(t, rec);
            maybe_solve(t, rec);

            // latch the "task before fault" column at the injection step
            if (t == ref_step || (ref_step < 0 && t == 0)) {
                for (int i = 0; i < N_; ++i) {
                    auto& rs = log_.summary.robots[static_cast<std::size_t>(i)];
                    rs.task_before = last_held_[static_cast<std::size_t>(i)];
                }
            }

            execute(t);

            rec.positions = positions_;
            rec.health = health_;
            rec.alpha = alpha_;
            rec.assigned = assigned_;
            rec.slack_sum = slack_sum_;
            log_.steps.push_back(std::move(rec));
        }
        finalize();
        return std::move(log_);
    }

private:
    long first_fault_step() const {
        long s = -1;
        for (const auto& f : cfg_.faults)
            if (s < 0 || f.start_step < s) s = f.start_step;
        return s;
    }

    void sense_and_detect(long t, StepRecord& rec) {
        const auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < N_; ++i) {
            Stream& st = streams_[static_cast<std::size_t>(i)];
            if (st.task < 0) continue;

            const Eigen::Vector2d goal = cfg_.task_goals.row(st.task).transpose();
            const Eigen::Vector2d d = positions_.row(i).transpose() - goal;
            const double dist = d.norm();
            const double L = std::max(dist, cfg_.sim.l_min);
            const double r_true = std::clamp(1.0 - dist / st.d0, 0.0, 1.0);

            const auto scaled =
                scale_covariances(L, cfg_.sigma_xy, cfg_.sim.q0_scale * default_q0_base());
            KfModel model = cfg_.kf_variant == KfVariant::CV
                ? make_cv_model(cfg_.dt, st.q_scale * scaled.Q, scaled.R)
                : make_rt_model(cfg_.dt, st.q_scale * scaled.Q, scaled.R);

            std::optional<double> u_nom;
            if (cfg_.kf_variant == KfVariant::RT) {
                const Eigen::Vector2d dir = dist > 1e-12 ? (-d / dist).eval()
                                                         : Eigen::Vector2d::Zero();
                u_nom = std::max(0.0, prev_controls_.row(i).dot(dir.transpose())) / st.d0;
            }
            st.kf = kf_predict(st.kf, model, u_nom);

            const auto y = measure_progress(r_true, dist, cfg_.faults, i, t, cfg_.sigma_xy,
                                            cfg_.sim.l_min,
                                            sensor_rngs_[static_cast<std::size_t>(i)]);

            StreamSample sample;
            sample.step = t;
            sample.robot = i;
            sample.task = st.task;
            sample.true_progress = r_true;

            if (!y.has_value()) {
                // prediction mode: only the uncertainty gate may act
                const auto out = detector_gate_step(st.det, cfg_.detector, st.kf.P_prior.trace());
                sample.dropped = true;
                sample.measured = kNaN;
                sample.nis_value = kNaN;
                sample.innovation_normalized = kNaN;
                sample.windowed_nis = st.det.nis_window.empty() ? kNaN : out.windowed_nis;
                sample.windowed_threshold = kNaN;
                sample.gated = out.uncertainty_gated;
                sample.label = out.label;
                sample.confidence = out.confidence;
                sample.trace_p = st.kf.P_prior.trace();
                sample.r_hat = st.kf.x_hat(0);
                sample.rdot_hat = st.kf.x_hat(1);
                sample.p11 = st.kf.P_prior(0, 0);
                sample.p12 = st.kf.P_prior(0, 1);
                sample.p22 = st.kf.P_prior(1, 1);
                sample.stream_age = st.age;
            } else {
                const KfUpdate up = kf_update(st.kf, model, *y);
                st.kf = up.state;
                ++st.age;
                const double d_nis = nis(up.innovation, up.S);

                // near completion the commanded rate tapers by design; do not
                // let the stall gate read that as a failure
                const double rate_for_gate =
                    st.kf.x_hat(0) >= cfg_.sim.stall_guard_progress ? cfg_.detector.beta * 2.0
                                                                    : st.kf.x_hat(1);
                const auto out = detector_step(st.det, cfg_.detector, d_nis, rate_for_gate,
                                               st.kf.P.trace());

                if (cfg_.sim.adaptive_q && st.age % cfg_.detector.window_w == 0) {
                    st.q_scale *= std::clamp(st.det.nis_window.mean(), 0.5, 4.0);
                }

                sample.measured = *y;
                sample.nis_value = d_nis;
                sample.innovation_normalized = up.innovation / std::sqrt(up.S);
                sample.windowed_nis = out.windowed_nis;
                sample.windowed_threshold = out.windowed_threshold;
                sample.nis_trigger = out.nis_trigger;
                sample.stall_trigger = out.stall_trigger;
                sample.gated = out.uncertainty_gated;
                sample.label = out.label;
                sample.confidence = out.confidence;
                sample.r_hat = st.kf.x_hat(0);
                sample.rdot_hat = st.kf.x_hat(1);
                sample.trace_p = st.kf.P.trace();
                sample.p11 = st.kf.P(0, 0);
                sample.p12 = st.kf.P(0, 1);
                sample.p22 = st.kf.P(1, 1);
                sample.stream_age = st.age;
                if (st.age > cfg_.detector.window_w) {
                    kept_nis_[static_cast<std::size_t>(i)].push_back(d_nis);
                }
            }

            const HealthLabel before = health_[static_cast<std::size_t>(i)];
            health_[static_cast<std::size_t>(i)] = st.det.label;
            if (st.det.label == HealthLabel::Fault && before != HealthLabel::Fault) {
                auto& rs = log_.summary.robots[static_cast<std::size_t>(i)];
                if (rs.fault_det_step < 0) rs.fault_det_step = t;
            }
            rec.streams.push_back(sample);
        }
        rec.detector_time =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        detector_time_total_ += rec.detector_time;
    }

    void maybe_solve(long t, StepRecord& rec) {
        const bool health_changed = health_ != health_at_solve_ || assignment_dirty_;
        const bool first = last_solve_step_ < 0;
        if (!first && !should_reallocate(t, health_changed, last_solve_step_, cfg_.policy)) return;

        const auto hw = health_weights(cfg_.team, cfg_.policy, health_);
        const auto g = health_mask(cfg_.team, health_);
        std::optional<Eigen::MatrixXd> prev;
        if (!first) prev = alpha_;

        const auto built = build_allocation_qp(cfg_.team, positions_, cfg_.task_goals, hw.w, hw.c,
                                               g, prev, cfg_.policy.lambda, cfg_.sim.u_max,
                                               task_active_, cfg_.gated_tasks);
        const auto sol = solve_allocation(built, warm_, QpSettings{});

        alpha_ = sol.alpha;
        slack_sum_ = sol.delta.sum();
        rec.solved = true;
        rec.churn = sol.churn;
        rec.qp_iterations = sol.solver_stats.iterations;
        rec.qp_solve_time = sol.solver_stats.solve_time;
        log_.summary.total_churn += sol.churn;
        log_.summary.solve_count += 1;
        log_.summary.max_qp_solve_time =
            std::max(log_.summary.max_qp_solve_time, sol.solver_stats.solve_time);

        apply_assignments(extract_assignments(alpha_));
        warm_ = sol;
        last_solve_step_ = t;
        health_at_solve_ = health_;
        assignment_dirty_ = false;
    }

    void apply_assignments(const std::vector<int>& next) {
        for (int i = 0; i < N_; ++i) {
            Stream& st = streams_[static_cast<std::size_t>(i)];
            const int task = next[static_cast<std::size_t>(i)];
            if (task == st.task) continue;
            if (task < 0) {
                st.task = -1;
                continue;
            }
            // new stream: latch the distance and re-initialize the filter
            const double dist =
                (positions_.row(i) - cfg_.task_goals.row(task)).norm();
            st.task = task;
            st.d0 = std::max(dist, cfg_.sim.l_min);
            const double speed_guess =
                std::min(cfg_.sim.u_max, std::max(cfg_.sim.u_floor, 0.5 * cfg_.team.kappa * dist));
            Eigen::Matrix2d P0 = cfg_.sim.p0_diag * Eigen::Matrix2d::Identity();
            st.kf = kf_init(0.0, speed_guess / st.d0, P0);
            st.det = DetectorState(cfg_.detector);
            st.det.label = health_[static_cast<std::size_t>(i)]; // labels persist across streams
            st.age = 0;
            st.q_scale = 1.0;
            last_held_[static_cast<std::size_t>(i)] = task;
        }
        assigned_ = next;
    }

    void execute(long t) {
        Eigen::MatrixXd controls = Eigen::MatrixXd::Zero(N_, 2);
        for (int i = 0; i < N_; ++i) {
            const int m = assigned_[static_cast<std::size_t>(i)];
            if (m < 0) continue;
            const Eigen::Vector2d d = positions_.row(i).transpose() -
                                      cfg_.task_goals.row(m).transpose();
            const double dist = d.norm();
            if (dist <= cfg_.sim.completion_radius || dist < 1e-12) continue;
            const double a = alpha_(i, m);
            double speed = std::min(cfg_.sim.u_max,
                                    std::max(cfg_.sim.u_floor, 0.5 * cfg_.team.kappa * a * dist));
            speed = std::min(speed, dist / cfg_.dt); // do not overshoot the goal
            controls.row(i) = (-speed / dist) * d.transpose();
        }
        controls = apply_actuation_faults(std::move(controls), cfg_.faults, t);
        positions_ = step_dynamics(positions_, controls, cfg_.dt);
        prev_controls_ = controls;

        for (int i = 0; i < N_; ++i) {
            const int m = assigned_[static_cast<std::size_t>(i)];
            if (m < 0 || !task_active_[static_cast<std::size_t>(m)]) continue;
            const double dist = (positions_.row(i) - cfg_.task_goals.row(m)).norm();
            if (dist < cfg_.sim.completion_radius) {
                auto& ts = log_.summary.tasks[static_cast<std::size_t>(m)];
                ts.completed = true;
                ts.completion_step = t;
                ts.completed_by = i;
                log_.summary.robots[static_cast<std::size_t>(i)].completed = true;
                task_active_[static_cast<std::size_t>(m)] = false;
                streams_[static_cast<std::size_t>(i)].task = -1;
                assigned_[static_cast<std::size_t>(i)] = -1;
                assignment_dirty_ = true;
            }
        }
    }

    void finalize() {
        for (int i = 0; i < N_; ++i) {
            auto& rs = log_.summary.robots[static_cast<std::size_t>(i)];
            rs.task_after = last_held_[static_cast<std::size_t>(i)];
            fill_nis_stats(rs, kept_nis_[static_cast<std::size_t>(i)]);
        }
        log_.summary.mean_detector_time =
            cfg_.steps > 0 ? detector_time_total_ / static_cast<double>(cfg_.steps) : 0.0;
    }

    ScenarioConfig cfg_;
    int N_;
    int M_;
    Eigen::MatrixXd positions_;
    Eigen::MatrixXd prev_controls_;
    Eigen::MatrixXd alpha_;
    std::vector<HealthLabel> health_;
    std::vector<HealthLabel> health_at_solve_;
    std::vector<int> assigned_;
    std::vector<Stream> streams_;
    std::vector<bool> task_active_;
    std::vector<Rng> sensor_rngs_;
    std::optional<AllocationSolution> warm_;
    long last_solve_step_ = -1;
    bool assignment_dirty_ = false;
    double slack_sum_ = 0.0;
    double detector_time_total_ = 0.0;
    std::vector<std::vector<double>> kept_nis_;
    std::vector<int> last_held_;
    RunLog log_;
};

} // namespace

RunLog run_scenario(const ScenarioConfig& cfg) {
    Simulation sim(cfg);
    return sim.run();
}

RunSummary summarize_records(const ScenarioConfig& cfg, const std::vector<StepRecord>& steps) {
    const int N = cfg.num_robots();
    const int M = cfg.num_tasks();
    RunSummary s;
    s.robots.resize(static_cast<std::size_t>(N));
    s.tasks.resize(static_cast<std::size_t>(M));
    for (int i = 0; i < N; ++i) s.robots[static_cast<std::size_t>(i)].robot = i;
    for (int m = 0; m < M; ++m) s.tasks[static_cast<std::size_t>(m)].task = m;

    for (const auto& f : cfg.faults) {
        auto& rs = s.robots.at(static_cast<std::size_t>(f.robot));
        rs.faulty = true;
        if (rs.fault_init_step < 0 || f.start_step < rs.fault_init_step)
            rs.fault_init_step = f.start_step;
    }
    long ref_step = -1;
    for (const auto& f : cfg.faults)
        if (ref_step < 0 || f.start_step < ref_step) ref_step = f.start_step;

    std::vector<std::vector<double>> kept(static_cast<std::size_t>(N));
    std::vector<int> last_held(static_cast<std::size_t>(N), -1);
    std::vector<HealthLabel> prev_label(static_cast<std::size_t>(N), HealthLabel::Healthy);
    double detector_total = 0.0;

    for (const auto& rec : steps) {
        // streams reflect the assignment entering the step; rec.assigned the
        // one leaving it, so process streams first
        for (const auto& sm : rec.streams) {
            auto& rs = s.robots.at(static_cast<std::size_t>(sm.robot));
            if (sm.task >= 0) last_held[static_cast<std::size_t>(sm.robot)] = sm.task;
            if (!sm.dropped && sm.stream_age > cfg.detector.window_w) {
                kept[static_cast<std::size_t>(sm.robot)].push_back(sm.nis_value);
            }
            if (sm.label == HealthLabel::Fault &&
                prev_label[static_cast<std::size_t>(sm.robot)] != HealthLabel::Fault &&
                rs.fault_det_step < 0) {
                rs.fault_det_step = rec.step;
            }
            prev_label[static_cast<std::size_t>(sm.robot)] = sm.label;
        }
        for (int i = 0; i < N; ++i) {
            const int m = rec.assigned[static_cast<std::size_t>(i)];
            if (m >= 0) last_held[static_cast<std::size_t>(i)] = m;
        }
        if (rec.step == ref_step || (ref_step < 0 && rec.step == 0)) {
            for (int i = 0; i < N; ++i)
                s.robots[static_cast<std::size_t>(i)].task_before =
                    last_held[static_cast<std::size_t>(i)];
        }
        if (rec.solved) {
            s.solve_count += 1;
            s.total_churn += rec.churn;
            s.max_qp_solve_time = std::max(s.max_qp_solve_time, rec.qp_solve_time);
        }
        detector_total += rec.detector_time;

        // completion shows up as the holder releasing its assignment inside
        // the completion radius
        for (int m = 0; m < M; ++m) {
            auto& ts = s.tasks[static_cast<std::size_t>(m)];
            if (ts.completed) continue;
            for (int i = 0; i < N; ++i) {
                const bool held = last_held[static_cast<std::size_t>(i)] == m;
                if (!held) continue;
                const double dist = (rec.positions.row(i) - cfg.task_goals.row(m)).norm();
                if (dist < cfg.sim.completion_radius &&
                    rec.assigned[static_cast<std::size_t>(i)] < 0) {
                    ts.completed = true;
                    ts.completion_step = rec.step;
                    ts.completed_by = i;
                    s.robots[static_cast<std::size_t>(i)].completed = true;
                }
            }
        }
    }
    for (int i = 0; i < N; ++i) {
        auto& rs = s.robots[static_cast<std::size_t>(i)];
        rs.task_after = last_held[static_cast<std::size_t>(i)];
        fill_nis_stats(rs, kept[static_cast<std::size_t>(i)]);
    }
    s.mean_detector_time =
        steps.empty() ? 0.0 : detector_total / static_cast<double>(steps.size());
    return s;
}

} // namespace fdalloc
