#include "fdalloc/metrics.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace fdalloc {

std::optional<long> detection_delay(const RunLog& log, int robot) {
    if (robot < 0 || robot >= log.cfg.num_robots())
        throw std::invalid_argument("detection_delay: robot out of range");
    const auto& rs = log.summary.robots.at(static_cast<std::size_t>(robot));
    if (!rs.faulty) throw std::invalid_argument("detection_delay: no fault injected on robot");
    if (rs.fault_det_step < 0) return std::nullopt;
    return rs.fault_det_step - rs.fault_init_step;
}

std::pair<double, double> nis_stats(const RunLog& log, int robot) {
    if (robot < 0 || robot >= log.cfg.num_robots())
        throw std::invalid_argument("nis_stats: robot out of range");
    const auto& rs = log.summary.robots.at(static_cast<std::size_t>(robot));
    if (rs.faulty) throw std::invalid_argument("nis_stats: robot had an injected fault");
    std::vector<double> kept;
    for (const auto& rec : log.steps) {
        for (const auto& sm : rec.streams) {
            if (sm.robot == robot && !sm.dropped && sm.stream_age > log.cfg.detector.window_w)
                kept.push_back(sm.nis_value);
        }
    }
    if (kept.empty()) throw std::invalid_argument("nis_stats: robot has no post-burn-in samples");
    double mean = 0.0;
    for (double v : kept) mean += v;
    mean /= static_cast<double>(kept.size());
    double var = 0.0;
    for (double v : kept) var += (v - mean) * (v - mean);
    const double sd = kept.size() > 1 ? std::sqrt(var / static_cast<double>(kept.size() - 1)) : 0.0;
    return {mean, sd};
}

double false_alarm_rate(const std::vector<RunLog>& logs) {
    long flagged = 0;
    long total = 0;
    for (const auto& log : logs) {
        if (!log.cfg.faults.empty())
            throw std::invalid_argument("false_alarm_rate: logs must be fault free");
        for (const auto& rec : log.steps) {
            for (const auto& sm : rec.streams) {
                ++total;
                if (sm.label == HealthLabel::Suspect || sm.label == HealthLabel::Fault) ++flagged;
            }
        }
    }
    return total > 0 ? static_cast<double>(flagged) / static_cast<double>(total) : 0.0;
}

std::vector<double> churn_series(const RunLog& log) {
    std::vector<double> out;
    bool first_seen = false;
    for (const auto& rec : log.steps) {
        if (!rec.solved) continue;
        if (!first_seen) {
            first_seen = true; // the initial allocation has no predecessor
            continue;
        }
        out.push_back(rec.churn);
    }
    return out;
}

double auc_trapezoid(const std::vector<RocPoint>& points) {
    if (points.size() < 2) return 0.0;
    double area = 0.0;
    for (std::size_t k = 1; k < points.size(); ++k) {
        const double dx = points[k].fpr - points[k - 1].fpr;
        area += dx * 0.5 * (points[k].tpr + points[k - 1].tpr);
    }
    return area;
}

bool run_is_accurate(const RunLog& log) {
    long ref = -1;
    for (const auto& rs : log.summary.robots) {
        if (rs.faulty && (ref < 0 || rs.fault_init_step < ref)) ref = rs.fault_init_step;
    }
    bool tp = false;
    for (const auto& rs : log.summary.robots) {
        if (rs.faulty) {
            if (rs.fault_det_step >= rs.fault_init_step) tp = true;
            if (rs.fault_det_step >= 0 && rs.fault_det_step < rs.fault_init_step) return false;
        } else if (rs.fault_det_step >= 0 && rs.fault_det_step < ref) {
            return false; // pre-fault false positive voids the run
        }
    }
    return tp;
}

namespace {

// max windowed-NIS scores per stream, pooled over runs
struct RocScores {
    std::vector<double> faulted; // post-injection max per faulted stream
    std::vector<double> healthy; // whole-run max per healthy stream
};

void collect_scores(const RunLog& log, RocScores& sc) {
    const int N = log.cfg.num_robots();
    std::vector<double> best(static_cast<std::size_t>(N),
                             -std::numeric_limits<double>::infinity());
    std::vector<bool> any(static_cast<std::size_t>(N), false);
    std::vector<long> inject(static_cast<std::size_t>(N), -1);
    for (const auto& f : log.cfg.faults) inject.at(static_cast<std::size_t>(f.robot)) = f.start_step;
    // score healthy streams over the same post-injection horizon as faulted
    // ones, so the max statistic sees comparable exposure on both sides
    long ref = 0;
    for (const auto& f : log.cfg.faults)
        if (f.start_step > ref) ref = f.start_step;

    // cap per-stream exposure so the max statistic is comparable between
    // short-lived faulted streams and long healthy ones
    constexpr int kScoreExposure = 60;
    std::vector<int> seen(static_cast<std::size_t>(N), 0);
    for (const auto& rec : log.steps) {
        if (rec.step < ref) continue;
        for (const auto& sm : rec.streams) {
            if (std::isnan(sm.windowed_nis)) continue;
            const auto i = static_cast<std::size_t>(sm.robot);
            if (inject[i] >= 0 && rec.step < inject[i]) continue;
            if (seen[i] >= kScoreExposure) continue;
            ++seen[i];
            best[i] = std::max(best[i], sm.windowed_nis);
            any[i] = true;
        }
    }
    for (int i = 0; i < N; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (!any[k]) continue;
        if (inject[k] >= 0) {
            sc.faulted.push_back(best[k]);
        } else {
            sc.healthy.push_back(best[k]);
        }
    }
}

std::vector<RocPoint> build_roc(const RocScores& sc) {
    std::vector<double> thresholds;
    thresholds.reserve(sc.faulted.size() + sc.healthy.size());
    thresholds.insert(thresholds.end(), sc.faulted.begin(), sc.faulted.end());
    thresholds.insert(thresholds.end(), sc.healthy.begin(), sc.healthy.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    std::vector<RocPoint> roc;
    auto rate_above = [](const std::vector<double>& v, double tau) {
        if (v.empty()) return 0.0;
        long n = 0;
        for (double s : v)
            if (s > tau) ++n;
        return static_cast<double>(n) / static_cast<double>(v.size());
    };
    // tau = +inf end point first (fpr 0), then decreasing thresholds
    roc.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) {
        roc.push_back({*it, rate_above(sc.healthy, *it), rate_above(sc.faulted, *it)});
    }
    roc.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});
    std::stable_sort(roc.begin(), roc.end(), [](const RocPoint& a, const RocPoint& b) {
        if (a.fpr != b.fpr) return a.fpr < b.fpr;
        return a.tpr < b.tpr;
    });
    return roc;
}

} // namespace

SweepResult roc_and_accuracy_sweep(const ScenarioConfig& base_cfg, FaultSpec::Kind kind,
                                   const std::vector<double>& magnitudes, int runs_per_magnitude,
                                   int jobs) {
    if (runs_per_magnitude < 1)
        throw std::invalid_argument("sweep: runs_per_magnitude must be >= 1");
    int fault_idx = -1;
    for (std::size_t k = 0; k < base_cfg.faults.size(); ++k) {
        if (base_cfg.faults[k].kind == kind) {
            if (fault_idx >= 0) throw std::invalid_argument("sweep: multiple faults of this kind");
            fault_idx = static_cast<int>(k);
        }
    }
    if (fault_idx < 0) throw std::invalid_argument("sweep: base config has no fault of this kind");

    struct Cell {
        bool accurate = false;
        bool detected = false;
        RocScores scores;
    };
    const std::size_t n_mag = magnitudes.size();
    const auto runs = static_cast<std::size_t>(runs_per_magnitude);
    std::vector<Cell> cells(n_mag * runs);

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t idx = begin; idx < end; ++idx) {
            const std::size_t mi = idx / runs;
            const std::size_t seed = idx % runs;
            ScenarioConfig cfg = base_cfg;
            cfg.faults[static_cast<std::size_t>(fault_idx)].magnitude = magnitudes[mi];
            cfg.seed = seed;
            const RunLog log = run_scenario(cfg);
            Cell& c = cells[idx];
            c.accurate = run_is_accurate(log);
            const auto& rs =
                log.summary.robots.at(static_cast<std::size_t>(
                    log.cfg.faults[static_cast<std::size_t>(fault_idx)].robot));
            c.detected = rs.fault_det_step >= 0;
            collect_scores(log, c.scores);
        }
    };

    const std::size_t total = cells.size();
    const int threads = std::max(1, std::min(jobs, static_cast<int>(total)));
    if (threads == 1) {
        work(0, total);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (total + static_cast<std::size_t>(threads) - 1) /
                                  static_cast<std::size_t>(threads);
        for (int t = 0; t < threads; ++t) {
            const std::size_t b = static_cast<std::size_t>(t) * chunk;
            const std::size_t e = std::min(total, b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }

    SweepResult out;
    out.kind = kind;
    for (std::size_t mi = 0; mi < n_mag; ++mi) {
        MagnitudePoint pt;
        pt.magnitude = magnitudes[mi];
        pt.n_runs = runs_per_magnitude;
        RocScores pooled;
        int acc = 0;
        for (std::size_t seed = 0; seed < runs; ++seed) {
            const Cell& c = cells[mi * runs + seed];
            if (c.accurate) ++acc;
            if (c.detected) ++pt.detected;
            pooled.faulted.insert(pooled.faulted.end(), c.scores.faulted.begin(),
                                  c.scores.faulted.end());
            pooled.healthy.insert(pooled.healthy.end(), c.scores.healthy.begin(),
                                  c.scores.healthy.end());
        }
        pt.accuracy = static_cast<double>(acc) / static_cast<double>(runs_per_magnitude);
        pt.roc = build_roc(pooled);
        pt.auc = auc_trapezoid(pt.roc);
        out.points.push_back(std::move(pt));
    }
    return out;
}

} // namespace fdalloc
