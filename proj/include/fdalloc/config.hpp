#pragma once

#include "fdalloc/allocator.hpp"
#include "fdalloc/detector.hpp"
#include "fdalloc/kalman.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fdalloc {

struct FaultSpec {
    enum class Kind { NoiseIncrease, VelocitySlipBias, CommDropout, TaskAbandonment };
    Kind kind = Kind::NoiseIncrease;
    int robot = 0;
    long start_step = 0;
    long end_step = -1; // -1 = open ended
    double magnitude = 0.0;

    bool active_at(long step) const {
        return step >= start_step && (end_step < 0 || step < end_step);
    }
};

const char* to_string(FaultSpec::Kind kind);
FaultSpec::Kind fault_kind_from_string(const std::string& s);

/// Execution-layer knobs that sit outside the allocator QP.
struct SimParams {
    double u_max = 0.08;            // speed box [m/s]
    double u_floor = 0.05;          // minimum approach speed [m/s]
    double completion_radius = 0.02;
    double l_min = 0.1;             // covariance-scaling distance floor
    bool adaptive_q = false;
    double q0_scale = 1.0;          // calibration factor folded into Q0
    double p0_diag = 1e-4;          // initial covariance diag
    double stall_guard_progress = 0.97; // suppress the stall gate near done
};

struct ScenarioConfig {
    double dt = 0.1;
    long steps = 200;
    std::uint64_t seed = 0;
    double sigma_xy = 0.007;
    KfVariant kf_variant = KfVariant::CV;
    Eigen::MatrixXd robot_starts; // N x 2
    Eigen::MatrixXd task_goals;   // M x 2
    DetectorConfig detector;
    HealthPolicy policy;
    TeamSpec team; // S, weights, gains; N/M must match the position tables
    SimParams sim;
    std::vector<FaultSpec> faults;
    std::vector<bool> gated_tasks; // empty = every task hard-gated
    double w0_scale = 1.0;         // base weights = w0_scale * initial distance
    bool w0_from_distance = true;  // otherwise team.base_weights is used as-is

    int num_robots() const { return static_cast<int>(robot_starts.rows()); }
    int num_tasks() const { return static_cast<int>(task_goals.rows()); }

    /// Cross-field validation; throws std::invalid_argument with the offending key.
    void validate() const;
};

/// Parse a scenario from a JSON file. `overrides` are dot-path assignments
/// ("detector.alpha=0.01", "faults.0.magnitude=0.02") applied after the file
/// is read and before validation.
ScenarioConfig load_scenario(const std::string& path,
                             const std::vector<std::string>& overrides = {});

/// Parse from an in-memory JSON string (used by tests and sweeps).
ScenarioConfig parse_scenario(const std::string& json_text,
                              const std::vector<std::string>& overrides = {});

/// Canonical re-serialization, used for the run manifest's config hash.
std::string scenario_to_json(const ScenarioConfig& cfg);

/// FNV-1a hash of the canonical serialization.
std::uint64_t scenario_hash(const ScenarioConfig& cfg);

} // namespace fdalloc
