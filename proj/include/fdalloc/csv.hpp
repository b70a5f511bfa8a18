#pragma once

#include "fdalloc/metrics.hpp"
#include "fdalloc/sim.hpp"

#include <string>
#include <vector>

namespace fdalloc {

/// One row per step per stream:
/// step,robot,task,stream_age,true_progress,measured,dropped,nis,windowed_nis,
/// windowed_threshold,nis_trigger,stall_trigger,gated,label,confidence,r_hat,
/// rdot_hat,trace_p
void write_streams_csv(const std::string& path, const RunLog& log);

/// One row per step:
/// step,solved,churn,qp_iterations,qp_solve_time_s,detector_time_s,slack_sum,
/// then health_<i> and assigned_<i> per robot.
void write_steps_csv(const std::string& path, const RunLog& log);

/// Table-style per-robot summary:
/// robot,faulty,task_before,task_after,fault_init_step,fault_det_step,
/// completed,nis_mean,nis_std
void write_summary_csv(const std::string& path, const RunLog& log);

/// Round-trip reader for the summary schema above.
std::vector<RobotSummary> read_summary_csv(const std::string& path);

/// magnitude,accuracy,n_runs,detected,auc
void write_sweep_csv(const std::string& path, const SweepResult& sweep);

/// magnitude,threshold,fpr,tpr
void write_roc_csv(const std::string& path, const SweepResult& sweep);

/// Machine-readable run provenance: config hash, seed, tool version, outputs.
void write_manifest(const std::string& path, const ScenarioConfig& cfg,
                    const std::vector<std::string>& outputs);

} // namespace fdalloc
