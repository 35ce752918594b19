#include "phasewalk/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>

namespace phasewalk {

std::vector<SweepCell> sweep_cells(const SweepSpec& spec) {
  std::vector<SweepCell> cells;
  for (AblationMethod m : spec.methods) {
    switch (spec.mode) {
      case SweepMode::Direction:
        for (double d : spec.directions) cells.push_back({m, d, spec.push_time, spec.push_time - spec.cycle_start});
        break;
      case SweepMode::Timing:
        for (double t : spec.timings) cells.push_back({m, spec.direction, spec.cycle_start + t, t});
        break;
      case SweepMode::Magnitude:
      case SweepMode::Ablation:
        cells.push_back({m, spec.direction, spec.push_time, spec.push_time - spec.cycle_start});
        break;
    }
  }
  return cells;
}

SweepResult max_recoverable(const SimConfig& base, const SweepCell& cell, const SweepSpec& spec) {
  SimConfig cfg = base;
  cfg.nmpc = ablation_config(cell.method, base.nmpc);
  cfg.disturbances.clear();
  cfg.stop_on_fall = true;
  cfg.duration = cell.push_time + spec.force_duration + spec.settle_window;

  SweepResult r;
  r.cell = cell;
  Simulator prefix(cfg);
  prefix.run_until(cell.push_time);
  if (prefix.log().fell) return r;

  const Vec2 dir = push_direction(cell.direction);
  for (int k = 1;; ++k) {
    const double force = k * spec.force_step;
    if (force > spec.max_force + 1e-9) {
      r.capped = true;
      break;
    }
    Simulator trial = prefix;
    trial.config().disturbances = {{force * dir, cell.push_time, spec.force_duration}};
    trial.run();
    ++r.trials;
    if (trial.log().fell) break;
    r.max_force = force;
  }
  r.max_impulse = r.max_force * spec.force_duration;
  return r;
}

int resolve_threads(int fallback) {
  if (const char* env = std::getenv("PHASEWALK_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1, fallback);
}

std::vector<SweepResult> run_sweep(const SimConfig& base, const SweepSpec& spec, int threads) {
  const std::vector<SweepCell> cells = sweep_cells(spec);
  std::vector<SweepResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = max_recoverable(base, cells[i], spec);
      } catch (const std::exception& e) {
        results[i].cell = cells[i];
        results[i].error = e.what();
      }
    }
  };
  const int n = std::clamp(threads, 1, static_cast<int>(std::max<std::size_t>(1, cells.size())));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  return results;
}

double settle_time(const SimLog& log, double from, double threshold) {
  if (log.fell) return std::numeric_limits<double>::infinity();
  double settled = from;
  bool any = false;
  for (const SimLogRow& r : log.rows) {
    if (r.time < from - 1e-12) continue;
    any = true;
    if (r.dcm_err.norm() >= threshold) settled = std::numeric_limits<double>::infinity();
    else if (!std::isfinite(settled)) settled = r.time;
  }
  return any ? settled : std::numeric_limits<double>::infinity();
}

std::vector<AblationRun> run_ablation(const SimConfig& base, const std::vector<AblationMethod>& methods, int threads,
                                      double settle_threshold) {
  double push = 0.0;
  if (!base.disturbances.empty()) {
    push = std::min_element(base.disturbances.begin(), base.disturbances.end(),
                            [](const Disturbance& a, const Disturbance& b) { return a.start_time < b.start_time; })
               ->start_time;
  }
  std::vector<AblationRun> runs(methods.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < methods.size(); i = next++) {
      SimConfig cfg = base;
      cfg.nmpc = ablation_config(methods[i], base.nmpc);
      AblationRun& r = runs[i];
      r.method = methods[i];
      r.log = run_scenario(cfg);
      r.settle_time = settle_time(r.log, push, settle_threshold);
      for (const SimLogRow& row : r.log.rows) {
        if (row.time >= push) r.max_dcm_error = std::max(r.max_dcm_error, row.dcm_err.norm());
      }
    }
  };
  const int n = std::clamp(threads, 1, static_cast<int>(std::max<std::size_t>(1, methods.size())));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  return runs;
}

}  // namespace phasewalk
