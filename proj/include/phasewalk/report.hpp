#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "phasewalk/sim.hpp"
#include "phasewalk/sweep.hpp"

namespace phasewalk {

/// Every CSV starts with this comment line, then a header row.
inline constexpr const char* kCsvSchemaLine = "# schema=1";

/// Shortest round-trippable text at 9 significant digits.
std::string format_number(double v);

/// Per-tick log, one row per control tick. Columns:
/// time, com_x, com_y, com_vx, com_vy, dcm_x, dcm_y, dcm_ref_x, dcm_ref_y,
/// dcm_err_x, dcm_err_y, zmp_ref_x, zmp_ref_y, zmp_ff_x, zmp_ff_y,
/// zmp_ctrl_x, zmp_ctrl_y, zmp_des_x, zmp_des_y, phase_index, phase_type,
/// time_in_phase, t_new, swing_target_x, swing_target_y, disturbance_active,
/// sqp_iterations, nmpc_ok
void write_log_csv(std::ostream& out, const SimLog& log);
/// time, kind, phase_index, value_x, value_y
void write_events_csv(std::ostream& out, const SimLog& log);
/// mode, method, direction_deg, timing, push_time, max_force, max_impulse,
/// trials, capped, error
void write_sweep_csv(std::ostream& out, SweepMode mode, const std::vector<SweepResult>& results);
/// time, then |dcm_err| per method; empty after a run stopped on a fall.
void write_ablation_csv(std::ostream& out, const std::vector<AblationRun>& runs);
/// method, verdict, fall_time, settle_time, max_dcm_error
void write_ablation_summary_csv(std::ostream& out, const std::vector<AblationRun>& runs);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotPanel {
  std::string title;
  std::vector<PlotSeries> series;
};

/// Stacked line panels sharing the x axis. Series without points, and panels
/// left without any series, are omitted.
std::string svg_panels(const std::string& title, const std::vector<PlotPanel>& panels);

/// DCM error, ZMP modulation and optimized phase duration over time.
std::string svg_walk(const std::string& title, const SimLog& log);
/// |dcm_err| traces of an ablation.
std::string svg_ablation(const std::string& title, const std::vector<AblationRun>& runs);
/// Polar plot of max impulse over push direction, one closed polygon per method.
std::string svg_polar(const std::string& title, const std::vector<SweepResult>& results);
/// Max impulse over push timing, one line per method.
std::string svg_timing(const std::string& title, const std::vector<SweepResult>& results);

}  // namespace phasewalk
