#include "fdalloc/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fdalloc {

using nlohmann::json;

const char* to_string(FaultSpec::Kind kind) {
    switch (kind) {
        case FaultSpec::Kind::NoiseIncrease: return "noise_increase";
        case FaultSpec::Kind::VelocitySlipBias: return "velocity_slip_bias";
        case FaultSpec::Kind::CommDropout: return "comm_dropout";
        case FaultSpec::Kind::TaskAbandonment: return "task_abandonment";
    }
    return "?";
}

FaultSpec::Kind fault_kind_from_string(const std::string& s) {
    if (s == "noise_increase") return FaultSpec::Kind::NoiseIncrease;
    if (s == "velocity_slip_bias") return FaultSpec::Kind::VelocitySlipBias;
    if (s == "comm_dropout") return FaultSpec::Kind::CommDropout;
    if (s == "task_abandonment") return FaultSpec::Kind::TaskAbandonment;
    throw std::invalid_argument("unknown fault kind: " + s);
}

namespace {

Eigen::MatrixXd parse_matrix(const json& j, const std::string& key, int expect_cols = -1) {
    if (!j.is_array() || j.empty())
        throw std::invalid_argument("config: " + key + " must be a nonempty array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.at(0).size());
    if (expect_cols >= 0 && cols != expect_cols)
        throw std::invalid_argument("config: " + key + " rows must have " +
                                    std::to_string(expect_cols) + " entries");
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != cols)
            throw std::invalid_argument("config: " + key + " has ragged rows");
        for (Eigen::Index c = 0; c < cols; ++c)
            M(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return M;
}

json matrix_to_json(const Eigen::MatrixXd& M) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        rows.push_back(row);
    }
    return rows;
}

// Apply a "a.b.2.c=value" override onto the document.
void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must look like key.path=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    json* node = &doc;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw std::invalid_argument("override has an empty path: " + assignment);

    for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
        const std::string& p = parts[k];
        if (!p.empty() && std::isdigit(static_cast<unsigned char>(p[0]))) {
            node = &node->at(static_cast<std::size_t>(std::stoul(p)));
        } else {
            node = &(*node)[p];
        }
    }
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::parse_error&) {
        parsed = value; // plain string
    }
    const std::string& leaf = parts.back();
    if (!leaf.empty() && std::isdigit(static_cast<unsigned char>(leaf[0]))) {
        node->at(static_cast<std::size_t>(std::stoul(leaf))) = parsed;
    } else {
        (*node)[leaf] = parsed;
    }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

ScenarioConfig from_json(json doc) {
    ScenarioConfig cfg;
    read_if(doc, "dt", cfg.dt);
    read_if(doc, "steps", cfg.steps);
    read_if(doc, "seed", cfg.seed);
    read_if(doc, "sigma_xy", cfg.sigma_xy);
    if (doc.contains("kf_variant")) {
        const std::string v = doc.at("kf_variant").get<std::string>();
        if (v == "cv") cfg.kf_variant = KfVariant::CV;
        else if (v == "rt") cfg.kf_variant = KfVariant::RT;
        else throw std::invalid_argument("config: kf_variant must be \"cv\" or \"rt\"");
    }
    cfg.robot_starts = parse_matrix(doc.at("robots"), "robots", 2);
    cfg.task_goals = parse_matrix(doc.at("tasks"), "tasks", 2);
    const int N = cfg.num_robots();
    const int M = cfg.num_tasks();

    cfg.team.N = N;
    cfg.team.M = M;
    cfg.team.S = doc.contains("specialization")
        ? parse_matrix(doc.at("specialization"), "specialization", M)
        : Eigen::MatrixXd::Ones(N, M);

    if (doc.contains("detector")) {
        const json& d = doc.at("detector");
        read_if(d, "alpha", cfg.detector.alpha);
        read_if(d, "window_w", cfg.detector.window_w);
        read_if(d, "beta", cfg.detector.beta);
        read_if(d, "stall_L", cfg.detector.stall_L);
        read_if(d, "gamma", cfg.detector.gamma);
        read_if(d, "K_s", cfg.detector.K_s);
        read_if(d, "K_f", cfg.detector.K_f);
        read_if(d, "K_out", cfg.detector.K_out);
        read_if(d, "eta", cfg.detector.eta);
        read_if(d, "allow_fault_recovery", cfg.detector.allow_fault_recovery);
    }
    if (doc.contains("policy")) {
        const json& p = doc.at("policy");
        read_if(p, "kappa_s", cfg.policy.kappa_s);
        read_if(p, "M_f", cfg.policy.M_f);
        read_if(p, "rho_s", cfg.policy.rho_s);
        read_if(p, "lambda", cfg.policy.lambda);
        read_if(p, "cooldown_steps", cfg.policy.cooldown_steps);
        read_if(p, "periodic_resolve_every", cfg.policy.periodic_resolve_every);
    }
    double slack_cost = 5.0;
    if (doc.contains("team")) {
        const json& t = doc.at("team");
        read_if(t, "kappa", cfg.team.kappa);
        read_if(t, "rho", cfg.team.rho);
        read_if(t, "delta_max", cfg.team.delta_max);
        read_if(t, "coverage_gain", cfg.team.coverage_gain);
        read_if(t, "barrier_relax", cfg.team.barrier_relax);
        read_if(t, "slack_cost", slack_cost);
        read_if(t, "w0_scale", cfg.w0_scale);
        if (t.contains("base_weights")) {
            cfg.team.base_weights = parse_matrix(t.at("base_weights"), "team.base_weights", M);
            cfg.w0_from_distance = false;
        }
    }
    cfg.team.base_slack_cost = Eigen::VectorXd::Constant(N, slack_cost);
    if (cfg.w0_from_distance) {
        cfg.team.base_weights.resize(N, M);
        for (int i = 0; i < N; ++i)
            for (int m = 0; m < M; ++m)
                cfg.team.base_weights(i, m) =
                    cfg.w0_scale * (cfg.robot_starts.row(i) - cfg.task_goals.row(m)).norm();
    }
    if (doc.contains("sim")) {
        const json& s = doc.at("sim");
        read_if(s, "u_max", cfg.sim.u_max);
        read_if(s, "u_floor", cfg.sim.u_floor);
        read_if(s, "completion_radius", cfg.sim.completion_radius);
        read_if(s, "l_min", cfg.sim.l_min);
        read_if(s, "adaptive_q", cfg.sim.adaptive_q);
        read_if(s, "q0_scale", cfg.sim.q0_scale);
        read_if(s, "p0_diag", cfg.sim.p0_diag);
        read_if(s, "stall_guard_progress", cfg.sim.stall_guard_progress);
    }
    if (doc.contains("gated_tasks")) {
        cfg.gated_tasks.assign(static_cast<std::size_t>(M), false);
        for (const auto& v : doc.at("gated_tasks"))
            cfg.gated_tasks.at(v.get<std::size_t>()) = true;
    }
    if (doc.contains("faults")) {
        for (const auto& f : doc.at("faults")) {
            FaultSpec fs;
            fs.kind = fault_kind_from_string(f.at("kind").get<std::string>());
            fs.robot = f.at("robot").get<int>();
            fs.start_step = f.at("start_step").get<long>();
            read_if(f, "end_step", fs.end_step);
            read_if(f, "magnitude", fs.magnitude);
            cfg.faults.push_back(fs);
        }
    }
    cfg.validate();
    return cfg;
}

} // namespace

void ScenarioConfig::validate() const {
    if (dt <= 0.0) throw std::invalid_argument("config: dt must be > 0");
    if (steps < 1) throw std::invalid_argument("config: steps must be >= 1");
    if (sigma_xy < 0.0) throw std::invalid_argument("config: sigma_xy must be >= 0");
    const int N = num_robots();
    const int M = num_tasks();
    if (N < 1 || M < 1) throw std::invalid_argument("config: need robots and tasks");
    auto in_unit = [](const Eigen::MatrixXd& P) {
        return P.minCoeff() >= 0.0 && P.maxCoeff() <= 1.0;
    };
    if (!in_unit(robot_starts))
        throw std::invalid_argument("config: robots must lie in the unit workspace [0,1]^2");
    if (!in_unit(task_goals))
        throw std::invalid_argument("config: tasks must lie in the unit workspace [0,1]^2");
    detector.validate();
    policy.validate();
    team.validate();
    if (sim.u_max <= 0.0 || sim.u_floor < 0.0 || sim.u_floor > sim.u_max)
        throw std::invalid_argument("config: require 0 <= u_floor <= u_max, u_max > 0");
    if (sim.completion_radius <= 0.0 || sim.l_min <= 0.0)
        throw std::invalid_argument("config: completion_radius and l_min must be > 0");
    if (!gated_tasks.empty() && static_cast<int>(gated_tasks.size()) != M)
        throw std::invalid_argument("config: gated_tasks size mismatch");
    for (std::size_t k = 0; k < faults.size(); ++k) {
        const FaultSpec& f = faults[k];
        const std::string at = "config: faults." + std::to_string(k);
        if (f.robot < 0 || f.robot >= N) throw std::invalid_argument(at + ": robot out of range");
        if (f.start_step < 0) throw std::invalid_argument(at + ": start_step must be >= 0");
        if (f.end_step >= 0 && f.start_step >= f.end_step)
            throw std::invalid_argument(at + ": start_step must precede end_step");
        if (f.magnitude < 0.0) throw std::invalid_argument(at + ": magnitude must be >= 0");
    }
}

ScenarioConfig parse_scenario(const std::string& json_text,
                              const std::vector<std::string>& overrides) {
    json doc = json::parse(json_text); // throws with line/column on bad syntax
    for (const auto& o : overrides) apply_override(doc, o);
    return from_json(std::move(doc));
}

ScenarioConfig load_scenario(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_scenario(buf.str(), overrides);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

std::string scenario_to_json(const ScenarioConfig& cfg) {
    json doc;
    doc["dt"] = cfg.dt;
    doc["steps"] = cfg.steps;
    doc["seed"] = cfg.seed;
    doc["sigma_xy"] = cfg.sigma_xy;
    doc["kf_variant"] = cfg.kf_variant == KfVariant::CV ? "cv" : "rt";
    doc["robots"] = matrix_to_json(cfg.robot_starts);
    doc["tasks"] = matrix_to_json(cfg.task_goals);
    doc["specialization"] = matrix_to_json(cfg.team.S);
    doc["detector"] = {{"alpha", cfg.detector.alpha},
                       {"window_w", cfg.detector.window_w},
                       {"beta", cfg.detector.beta},
                       {"stall_L", cfg.detector.stall_L},
                       {"gamma", cfg.detector.gamma},
                       {"K_s", cfg.detector.K_s},
                       {"K_f", cfg.detector.K_f},
                       {"K_out", cfg.detector.K_out},
                       {"eta", cfg.detector.eta},
                       {"allow_fault_recovery", cfg.detector.allow_fault_recovery}};
    doc["policy"] = {{"kappa_s", cfg.policy.kappa_s},
                     {"M_f", cfg.policy.M_f},
                     {"rho_s", cfg.policy.rho_s},
                     {"lambda", cfg.policy.lambda},
                     {"cooldown_steps", cfg.policy.cooldown_steps},
                     {"periodic_resolve_every", cfg.policy.periodic_resolve_every}};
    doc["team"] = {{"kappa", cfg.team.kappa},
                   {"rho", cfg.team.rho},
                   {"delta_max", cfg.team.delta_max},
                   {"coverage_gain", cfg.team.coverage_gain},
                   {"barrier_relax", cfg.team.barrier_relax},
                   {"slack_cost", cfg.team.base_slack_cost.size() > 0
                                      ? cfg.team.base_slack_cost(0)
                                      : 5.0},
                   {"w0_scale", cfg.w0_scale}};
    if (!cfg.w0_from_distance) doc["team"]["base_weights"] = matrix_to_json(cfg.team.base_weights);
    doc["sim"] = {{"u_max", cfg.sim.u_max},
                  {"u_floor", cfg.sim.u_floor},
                  {"completion_radius", cfg.sim.completion_radius},
                  {"l_min", cfg.sim.l_min},
                  {"adaptive_q", cfg.sim.adaptive_q},
                  {"q0_scale", cfg.sim.q0_scale},
                  {"p0_diag", cfg.sim.p0_diag},
                  {"stall_guard_progress", cfg.sim.stall_guard_progress}};
    if (!cfg.gated_tasks.empty()) {
        json gt = json::array();
        for (std::size_t m = 0; m < cfg.gated_tasks.size(); ++m)
            if (cfg.gated_tasks[m]) gt.push_back(m);
        doc["gated_tasks"] = gt;
    }
    json faults = json::array();
    for (const auto& f : cfg.faults) {
        faults.push_back({{"kind", to_string(f.kind)},
                          {"robot", f.robot},
                          {"start_step", f.start_step},
                          {"end_step", f.end_step},
                          {"magnitude", f.magnitude}});
    }
    doc["faults"] = faults;
    return doc.dump(2);
}

std::uint64_t scenario_hash(const ScenarioConfig& cfg) {
    const std::string s = scenario_to_json(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace fdalloc
