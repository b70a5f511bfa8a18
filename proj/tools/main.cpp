#include "fdalloc/csv.hpp"
#include "fdalloc/metrics.hpp"
#include "fdalloc/sim.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace fdalloc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct OverwriteGuard {
    bool force = false;
    void check(const std::vector<std::string>& paths) const {
        if (force) return;
        for (const auto& p : paths) {
            if (fs::exists(p))
                throw CLI::ValidationError("output exists (use --force to overwrite): " + p);
        }
    }
};

std::vector<double> magnitude_range(double from, double to, double step) {
    if (step <= 0.0 || to < from) throw CLI::ValidationError("bad magnitude range");
    std::vector<double> mags;
    for (double m = from; m <= to + 0.5 * step; m += step) mags.push_back(m);
    return mags;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed,
            bool force) {
    ScenarioConfig cfg = load_scenario(config_path, overrides);
    if (seed) cfg.seed = *seed;
    fs::create_directories(out_dir);
    const std::string streams = out_dir + "/streams.csv";
    const std::string steps = out_dir + "/steps.csv";
    const std::string summary = out_dir + "/summary.csv";
    const std::string manifest = out_dir + "/manifest.json";
    OverwriteGuard{force}.check({streams, steps, summary, manifest});

    const RunLog log = run_scenario(cfg);
    write_streams_csv(streams, log);
    write_steps_csv(steps, log);
    write_summary_csv(summary, log);
    write_manifest(manifest, cfg, {streams, steps, summary});

    for (const auto& rs : log.summary.robots) {
        std::printf("robot %d: faulty=%d task %d -> %d det_step=%ld completed=%d nis=%.3f/%.3f\n",
                    rs.robot, rs.faulty ? 1 : 0, rs.task_before, rs.task_after, rs.fault_det_step,
                    rs.completed ? 1 : 0, rs.nis_mean, rs.nis_std);
    }
    std::printf("tasks completed: ");
    for (const auto& ts : log.summary.tasks)
        std::printf("%d:%s ", ts.task, ts.completed ? "yes" : "no");
    std::printf("\nsolves=%ld total_churn=%.3f max_qp_ms=%.3f\n", log.summary.solve_count,
                log.summary.total_churn, 1e3 * log.summary.max_qp_solve_time);
    return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              const std::vector<std::string>& overrides, const std::string& kind_name, double from,
              double to, double step, int runs, int jobs, bool force) {
    ScenarioConfig cfg = load_scenario(config_path, overrides);
    if (runs < 1) throw CLI::ValidationError("--runs must be >= 1");
    const auto kind = fault_kind_from_string(kind_name);
    const auto mags = magnitude_range(from, to, step);

    fs::create_directories(out_dir);
    const std::string acc_path = out_dir + "/accuracy_" + kind_name + ".csv";
    const std::string roc_path = out_dir + "/roc_" + kind_name + ".csv";
    OverwriteGuard{force}.check({acc_path, roc_path});

    const SweepResult sweep = roc_and_accuracy_sweep(cfg, kind, mags, runs, jobs);
    write_sweep_csv(acc_path, sweep);
    write_roc_csv(roc_path, sweep);
    for (const auto& pt : sweep.points)
        std::printf("magnitude %.4f: accuracy %.1f%% auc %.3f (%d runs)\n", pt.magnitude,
                    100.0 * pt.accuracy, pt.auc, pt.n_runs);
    return kExitOk;
}

int cmd_tables(const std::string& configs_dir, const std::string& out_dir, int jobs, bool force) {
    fs::create_directories(out_dir);
    struct Job {
        const char* config;
        const char* tag;
        const char* kind;
        double from, to, step;
        int runs;
    };
    const Job jobs_list[] = {
        {"noise_fault.json", "noise", "noise_increase", 0.0070, 0.0130, 0.0004, 30},
        {"bias_fault.json", "bias", "velocity_slip_bias", 0.000, 0.044, 0.004, 50},
    };
    for (const auto& j : jobs_list) {
        const std::string cfg_path = configs_dir + "/" + j.config;
        ScenarioConfig cfg = load_scenario(cfg_path);
        const std::string summary = out_dir + "/" + std::string(j.tag) + "_summary.csv";
        OverwriteGuard{force}.check({summary});
        write_summary_csv(summary, run_scenario(cfg));
        std::printf("wrote %s\n", summary.c_str());

        const auto mags = magnitude_range(j.from, j.to, j.step);
        const SweepResult sweep =
            roc_and_accuracy_sweep(cfg, fault_kind_from_string(j.kind), mags, j.runs, jobs);
        const std::string acc = out_dir + "/" + std::string(j.tag) + "_accuracy.csv";
        const std::string roc = out_dir + "/" + std::string(j.tag) + "_roc.csv";
        OverwriteGuard{force}.check({acc, roc});
        write_sweep_csv(acc, sweep);
        write_roc_csv(roc, sweep);
        std::printf("wrote %s, %s\n", acc.c_str(), roc.c_str());
    }
    return kExitOk;
}

int cmd_validate(const std::string& config_path, const std::vector<std::string>& overrides) {
    load_scenario(config_path, overrides);
    std::printf("%s: ok\n", config_path.c_str());
    return kExitOk;
}

int cmd_calibrate(const std::string& config_path, const std::vector<std::string>& overrides,
                  int runs) {
    ScenarioConfig cfg = load_scenario(config_path, overrides);
    if (!cfg.faults.empty())
        throw CLI::ValidationError("calibrate requires a fault-free config");
    if (cfg.sigma_xy <= 0.0)
        std::printf("warning: sigma_xy = 0; innovations are deterministic and NIS is degenerate\n");

    std::vector<double> nis_samples;
    double lag1_num = 0.0, lag1_den = 0.0;
    for (int s = 0; s < runs; ++s) {
        cfg.seed = static_cast<std::uint64_t>(s);
        const RunLog log = run_scenario(cfg);
        std::vector<double> prev_innov(static_cast<std::size_t>(cfg.num_robots()),
                                       std::numeric_limits<double>::quiet_NaN());
        for (const auto& rec : log.steps) {
            for (const auto& sm : rec.streams) {
                if (sm.dropped || sm.stream_age <= cfg.detector.window_w) continue;
                nis_samples.push_back(sm.nis_value);
                const double e = sm.innovation_normalized;
                double& pe = prev_innov[static_cast<std::size_t>(sm.robot)];
                if (!std::isnan(pe)) {
                    lag1_num += pe * e;
                    lag1_den += pe * pe;
                }
                pe = e;
            }
        }
    }
    if (nis_samples.empty()) throw CLI::ValidationError("no post-burn-in samples; config too short");
    double mean = 0.0;
    for (double v : nis_samples) mean += v;
    mean /= static_cast<double>(nis_samples.size());
    double var = 0.0;
    for (double v : nis_samples) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(nis_samples.size() - 1));
    const double lag1 = lag1_den > 0.0 ? lag1_num / lag1_den : 0.0;
    // mean NIS < 1 means S (hence Q) is too large for the observed variability
    const double scale = mean > 0.0 ? mean : 1.0;

    std::printf("healthy NIS over %zu samples (%d runs): mean %.4f std %.4f\n", nis_samples.size(),
                runs, mean, sd);
    std::printf("innovation lag-1 autocorrelation: %.4f (|.| < 0.1 is near white)\n", lag1);
    std::printf("suggested Q scale factor (fold into sim.q0_scale): %.4f\n", scale);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"progress-based fault detection with health-aware task allocation"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", configs_dir = "configs", kind;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    bool force = false;
    double from = 0.0, to = 0.0, step = 1.0;
    int runs = 30;
    int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    auto add_common = [&](CLI::App* cmd, bool needs_out) {
        cmd->add_option("-c,--config", config_path, "scenario config (json)")->required();
        cmd->add_option("-O,--override", overrides, "dot-path override key=value");
        if (needs_out) {
            cmd->add_option("-o,--out", out_dir, "output directory");
            cmd->add_flag("--force", force, "overwrite existing outputs");
        }
    };

    auto* run = app.add_subcommand("run", "run one scenario and write csv logs");
    add_common(run, true);
    run->add_option("--seed", seed, "override the config seed");

    auto* sweep = app.add_subcommand("sweep", "fault-magnitude accuracy/ROC sweep");
    add_common(sweep, true);
    sweep->add_option("--kind", kind, "noise_increase|velocity_slip_bias")->required();
    sweep->add_option("--from", from, "first magnitude")->required();
    sweep->add_option("--to", to, "last magnitude")->required();
    sweep->add_option("--step", step, "magnitude increment")->required();
    sweep->add_option("--runs", runs, "seeds per magnitude");
    sweep->add_option("--jobs", jobs, "parallel runs");

    auto* tables = app.add_subcommand("tables", "regenerate the summary and sweep tables");
    tables->add_option("--configs", configs_dir, "directory with the shipped scenario configs");
    tables->add_option("-o,--out", out_dir, "output directory");
    tables->add_option("--jobs", jobs, "parallel runs");
    tables->add_flag("--force", force, "overwrite existing outputs");

    auto* validate = app.add_subcommand("validate", "parse and validate a config");
    add_common(validate, false);

    auto* calibrate = app.add_subcommand("calibrate", "healthy-stream NIS calibration report");
    add_common(calibrate, false);
    calibrate->add_option("--runs", runs, "number of nominal seeds");

    try {
        app.parse(argc, argv);
        if (run->parsed()) return cmd_run(config_path, out_dir, overrides, seed, force);
        if (sweep->parsed())
            return cmd_sweep(config_path, out_dir, overrides, kind, from, to, step, runs, jobs,
                             force);
        if (tables->parsed()) return cmd_tables(configs_dir, out_dir, jobs, force);
        if (validate->parsed()) return cmd_validate(config_path, overrides);
        if (calibrate->parsed()) return cmd_calibrate(config_path, overrides, runs);
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        // missing files and malformed configs are usage errors
        const std::string what = e.what();
        if (what.find("cannot open config file") != std::string::npos ||
            what.find("parse error") != std::string::npos ||
            what.find("config:") != std::string::npos)
            return kExitUsage;
        return kExitRuntime;
    }
}
