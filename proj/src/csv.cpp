#include "fdalloc/csv.hpp"

#include "fdalloc/config.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fdalloc {

namespace {

// shortest exact decimal representation; byte-stable for identical doubles
std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

} // namespace

void write_streams_csv(const std::string& path, const RunLog& log) {
    auto out = open_out(path);
    out << "step,robot,task,stream_age,true_progress,measured,dropped,nis,innovation_norm,"
           "windowed_nis,windowed_threshold,nis_trigger,stall_trigger,gated,label,confidence,"
           "r_hat,rdot_hat,trace_p,p11,p12,p22\n";
    for (const auto& rec : log.steps) {
        for (const auto& sm : rec.streams) {
            out << sm.step << ',' << sm.robot << ',' << sm.task << ',' << sm.stream_age << ','
                << num(sm.true_progress) << ',' << num(sm.measured) << ',' << (sm.dropped ? 1 : 0)
                << ',' << num(sm.nis_value) << ',' << num(sm.innovation_normalized) << ','
                << num(sm.windowed_nis) << ','
                << num(sm.windowed_threshold) << ',' << (sm.nis_trigger ? 1 : 0) << ','
                << (sm.stall_trigger ? 1 : 0) << ',' << (sm.gated ? 1 : 0) << ','
                << to_string(sm.label) << ',' << num(sm.confidence) << ',' << num(sm.r_hat) << ','
                << num(sm.rdot_hat) << ',' << num(sm.trace_p) << ',' << num(sm.p11) << ','
                << num(sm.p12) << ',' << num(sm.p22) << '\n';
        }
    }
}

void write_steps_csv(const std::string& path, const RunLog& log) {
    auto out = open_out(path);
    const int N = log.cfg.num_robots();
    out << "step,solved,churn,qp_iterations,qp_solve_time_s,detector_time_s,slack_sum";
    for (int i = 0; i < N; ++i) out << ",health_" << i;
    for (int i = 0; i < N; ++i) out << ",assigned_" << i;
    out << '\n';
    for (const auto& rec : log.steps) {
        out << rec.step << ',' << (rec.solved ? 1 : 0) << ',' << num(rec.churn) << ','
            << rec.qp_iterations << ',' << num(rec.qp_solve_time) << ','
            << num(rec.detector_time) << ',' << num(rec.slack_sum);
        for (int i = 0; i < N; ++i) out << ',' << to_string(rec.health[static_cast<std::size_t>(i)]);
        for (int i = 0; i < N; ++i) out << ',' << rec.assigned[static_cast<std::size_t>(i)];
        out << '\n';
    }
}

void write_summary_csv(const std::string& path, const RunLog& log) {
    auto out = open_out(path);
    out << "robot,faulty,task_before,task_after,fault_init_step,fault_det_step,completed,"
           "nis_mean,nis_std\n";
    for (const auto& rs : log.summary.robots) {
        out << rs.robot << ',' << (rs.faulty ? 1 : 0) << ',' << rs.task_before << ','
            << rs.task_after << ',' << rs.fault_init_step << ',' << rs.fault_det_step << ','
            << (rs.completed ? 1 : 0) << ',' << num(rs.nis_mean) << ',' << num(rs.nis_std) << '\n';
    }
}

std::vector<RobotSummary> read_summary_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty summary csv: " + path);
    std::vector<RobotSummary> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 9) throw std::runtime_error("bad summary row: " + line);
        RobotSummary rs;
        rs.robot = std::stoi(f[0]);
        rs.faulty = f[1] == "1";
        rs.task_before = std::stoi(f[2]);
        rs.task_after = std::stoi(f[3]);
        rs.fault_init_step = std::stol(f[4]);
        rs.fault_det_step = std::stol(f[5]);
        rs.completed = f[6] == "1";
        rs.nis_mean = std::strtod(f[7].c_str(), nullptr);
        rs.nis_std = std::strtod(f[8].c_str(), nullptr);
        rows.push_back(rs);
    }
    return rows;
}

void write_sweep_csv(const std::string& path, const SweepResult& sweep) {
    auto out = open_out(path);
    out << "magnitude,accuracy,n_runs,detected,auc\n";
    for (const auto& pt : sweep.points) {
        out << num(pt.magnitude) << ',' << num(pt.accuracy) << ',' << pt.n_runs << ','
            << pt.detected << ',' << num(pt.auc) << '\n';
    }
}

void write_roc_csv(const std::string& path, const SweepResult& sweep) {
    auto out = open_out(path);
    out << "magnitude,threshold,fpr,tpr\n";
    for (const auto& pt : sweep.points) {
        for (const auto& rp : pt.roc) {
            out << num(pt.magnitude) << ',' << num(rp.threshold) << ',' << num(rp.fpr) << ','
                << num(rp.tpr) << '\n';
        }
    }
}

void write_manifest(const std::string& path, const ScenarioConfig& cfg,
                    const std::vector<std::string>& outputs) {
    nlohmann::json doc;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(scenario_hash(cfg)));
    doc["tool"] = "fdalloc";
    doc["version"] = "0.1.0";
    doc["config_hash"] = hash;
    doc["seed"] = cfg.seed;
    doc["outputs"] = outputs;
    auto out = open_out(path);
    out << doc.dump(2) << '\n';
}

} // namespace fdalloc
