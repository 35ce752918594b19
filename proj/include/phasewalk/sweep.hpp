#pragma once

#include <limits>
#include <string>
#include <vector>

#include "phasewalk/scenario.hpp"
#include "phasewalk/sim.hpp"

namespace phasewalk {

/// One push configuration whose largest recoverable magnitude is searched.
struct SweepCell {
  AblationMethod method = AblationMethod::M1;
  double direction = 90.0;  // degrees
  double push_time = 1.2;
  double timing = 0.0;      // offset within the step cycle, timing sweeps only
};

struct SweepResult {
  SweepCell cell;
  double max_force = 0.0;  // largest force that still recovered, 0 when none did
  double max_impulse = 0.0;
  int trials = 0;
  /// True when the search stopped at max_force without a fall.
  bool capped = false;
  /// Non-empty when the cell could not be evaluated; the sweep carries on.
  std::string error;
};

/// Expands a sweep spec into its cells, method-major.
std::vector<SweepCell> sweep_cells(const SweepSpec& spec);

/// Raises the push magnitude in fixed steps until the robot falls. The
/// undisturbed run up to the push is simulated once and copied per trial.
SweepResult max_recoverable(const SimConfig& base, const SweepCell& cell, const SweepSpec& spec);

/// Evaluates every cell on `threads` workers. Results are in cell order and do
/// not depend on the thread count.
std::vector<SweepResult> run_sweep(const SimConfig& base, const SweepSpec& spec, int threads);

/// Thread count from PHASEWALK_THREADS when set, else `fallback`, at least 1.
int resolve_threads(int fallback);

struct AblationRun {
  AblationMethod method = AblationMethod::M1;
  SimLog log;
  /// First time after the push from which the DCM error stays below the
  /// threshold; infinity when it never settles or the run fell.
  double settle_time = std::numeric_limits<double>::infinity();
  double max_dcm_error = 0.0;
};

/// First time at or after `from` from which |dcm_err| stays below `threshold`.
double settle_time(const SimLog& log, double from, double threshold = 0.005);

/// Runs the same scenario under each method, sharing nothing but the config.
std::vector<AblationRun> run_ablation(const SimConfig& base, const std::vector<AblationMethod>& methods,
                                      int threads = 1, double settle_threshold = 0.005);

}  // namespace phasewalk
