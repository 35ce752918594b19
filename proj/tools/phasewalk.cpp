#include <CLI11.hpp>
#include <fmt/format.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "phasewalk/report.hpp"
#include "phasewalk/scenario.hpp"
#include "phasewalk/sweep.hpp"

using namespace phasewalk;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitFall = 3;

struct Options {
  std::string config;
  bool plot = false;
  std::string out = ".";
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string mode;
};

template <class Writer>
void write_file(const fs::path& path, Writer&& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  w(f);
}

void write_text(const fs::path& path, const std::string& s) {
  write_file(path, [&](std::ostream& o) { o << s; });
}

int cmd_walk(const Scenario& sc, const Options& opt) {
  const SimConfig cfg = sc.resolved();
  Simulator sim(cfg);
  const SimLog& log = sim.run();
  const fs::path dir(opt.out);
  write_file(dir / (sc.name + "_log.csv"), [&](std::ostream& o) { write_log_csv(o, log); });
  write_file(dir / (sc.name + "_events.csv"), [&](std::ostream& o) { write_events_csv(o, log); });
  if (opt.plot) write_text(dir / (sc.name + ".svg"), svg_walk(sc.name, log));

  double sq = 0.0, zmax = 0.0;
  int iters = 0;
  for (const SimLogRow& r : log.rows) {
    sq += r.dcm_err.squaredNorm();
    zmax = std::max(zmax, r.zmp_ctrl.norm());
    iters = std::max(iters, r.sqp_iterations);
  }
  const double rms = log.rows.empty() ? 0.0 : std::sqrt(sq / log.rows.size());
  const Vec2 com = log.rows.empty() ? Vec2::Zero() : log.rows.back().com;
  fmt::print("{}: {} ticks, {}, dcm error rms {:.3g} m, max |z_ctrl| {:.3g} m, max SQP iterations {}, "
             "final CoM ({:.3f}, {:.3f})\n",
             sc.name, log.rows.size(), log.fell ? fmt::format("FELL at {:.2f} s", log.fall_time) : "no fall", rms,
             zmax, iters, com.x(), com.y());
  return log.fell ? kExitFall : kExitOk;
}

int cmd_sweep(Scenario sc, const Options& opt) {
  if (!opt.mode.empty()) {
    const auto mode = parse_sweep_mode(opt.mode);
    if (!mode) throw ConfigError(0, "unknown sweep mode '" + opt.mode + "'");
    sc.sweep.mode = *mode;
    sc.sweep.validate(sc.sim.gait.ssp_duration + sc.sim.gait.dsp_duration);
  }
  const int threads = resolve_threads(opt.threads);
  const std::vector<SweepResult> results = run_sweep(sc.sim, sc.sweep, threads);
  const fs::path dir(opt.out);
  write_file(dir / "sweep.csv", [&](std::ostream& o) { write_sweep_csv(o, sc.sweep.mode, results); });
  if (opt.plot) {
    const std::string svg = sc.sweep.mode == SweepMode::Timing ? svg_timing(sc.name, results)
                                                               : svg_polar(sc.name, results);
    write_text(dir / (sc.name + ".svg"), svg);
  }
  fmt::print("{} sweep '{}' on {} thread(s)\n", to_string(sc.sweep.mode), sc.name, threads);
  for (const SweepResult& r : results) {
    fmt::print("  {} dir {:6.1f} deg  t {:4.2f} s  max force {:6.0f} N  impulse {:6.1f} Ns{}{}\n",
               to_string(r.cell.method), r.cell.direction, r.cell.push_time, r.max_force, r.max_impulse,
               r.capped ? "  (cap reached)" : "", r.error.empty() ? "" : "  error: " + r.error);
  }
  return kExitOk;
}

int cmd_ablation(const Scenario& sc, const Options& opt) {
  const std::vector<AblationMethod> methods{AblationMethod::M1, AblationMethod::M2, AblationMethod::M3,
                                            AblationMethod::M4};
  const std::vector<AblationRun> runs = run_ablation(sc.sim, methods, resolve_threads(opt.threads));
  const fs::path dir(opt.out);
  write_file(dir / (sc.name + "_ablation.csv"), [&](std::ostream& o) { write_ablation_csv(o, runs); });
  write_file(dir / (sc.name + "_summary.csv"), [&](std::ostream& o) { write_ablation_summary_csv(o, runs); });
  if (opt.plot) write_text(dir / (sc.name + ".svg"), svg_ablation(sc.name, runs));
  double impulse = 0.0;
  for (const Disturbance& d : sc.sim.disturbances) impulse += d.impulse();
  fmt::print("ablation '{}', total impulse {:.1f} Ns\n", sc.name, impulse);
  for (const AblationRun& r : runs) {
    fmt::print("  {}  {:9}  max |dcm err| {:.3f} m  settled {}\n", to_string(r.method),
               r.log.fell ? "fell" : "recovered", r.max_dcm_error,
               std::isfinite(r.settle_time) ? fmt::format("{:.2f} s", r.settle_time) : "never");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase-based DCM walking controller: scenarios, ablations and push-recovery sweeps"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", opt.config, "Scenario file")->required();
    sub->add_flag("--plot", opt.plot, "Also write an SVG plot");
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_option("--threads", opt.threads, "Worker threads (PHASEWALK_THREADS overrides)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  };
  CLI::App* walk = app.add_subcommand("walk", "Run one scenario and write its log");
  CLI::App* sweep = app.add_subcommand("sweep", "Maximum recoverable impulse over a direction or timing grid");
  CLI::App* ablation = app.add_subcommand("ablation", "Run methods M1-M4 on the same push");
  add_common(walk);
  add_common(sweep);
  add_common(ablation);
  sweep->add_option("--mode", opt.mode, "direction, timing, magnitude or ablation (overrides the file)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    Scenario sc = load_scenario(opt.config);
    fs::create_directories(opt.out);
    if (walk->parsed()) return cmd_walk(sc, opt);
    if (sweep->parsed()) return cmd_sweep(std::move(sc), opt);
    return cmd_ablation(sc, opt);
  } catch (const ConfigError& e) {
    std::cerr << opt.config << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
