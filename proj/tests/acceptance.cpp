// Acceptance suite: one [PASS]/[FAIL] line per criterion, nonzero exit on any
// failure. Sweep workers follow PHASEWALK_THREADS, else the hardware count.

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "phasewalk/nmpc.hpp"
#include "phasewalk/qp_solver.hpp"
#include "phasewalk/scenario.hpp"
#include "phasewalk/sim.hpp"
#include "phasewalk/sweep.hpp"

using namespace phasewalk;

namespace {

const LipmParams kParams;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string config_path(const char* file) { return std::string(PHASEWALK_CONFIG_DIR) + "/" + file; }

int worker_count() {
  return resolve_threads(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
}

const std::vector<AblationMethod> kMethods{AblationMethod::M1, AblationMethod::M2, AblationMethod::M3,
                                           AblationMethod::M4};

GaitSchedule walking(double step_length, int n_steps) {
  FootstepCommand cmd;
  cmd.step_length = step_length;
  cmd.n_steps = n_steps;
  return build_schedule(cmd.start_stance, plan_footsteps(cmd));
}

// Random phase context in the shape the controller builds.
PhaseContext random_phase(oracle::Rng& rng) {
  PhaseContext c;
  c.type = rng.integer(0, 1) == 0 ? PhaseType::SSP : PhaseType::DSP;
  c.nominal_duration = rng.uniform(0.2, 0.8);
  c.duration = c.nominal_duration + rng.uniform(-0.1, 0.1);
  c.time = rng.uniform(0.0, 0.9 * c.duration);
  c.zmp_start = rng.vec(-0.3, 0.3);
  c.zmp_end = rng.vec(-0.3, 0.3);
  c.dcm_ref = rng.vec(-0.3, 0.3);
  c.delta_lower = std::max(-0.2, c.time + 0.02 - c.duration);
  c.delta_upper = 0.2;
  c.step_lower = Vec2::Constant(-0.3);
  c.step_upper = Vec2::Constant(0.3);
  return c;
}

DecisionBlock random_block(oracle::Rng& rng, const PhaseContext& c) {
  DecisionBlock b;
  b.zmp_start_ctrl = rng.vec(-0.07, 0.07);
  b.zmp_end_ctrl = rng.vec(-0.07, 0.07);
  b.step_ctrl = rng.vec(-0.3, 0.3);
  b.dcm_offset_err = rng.vec(-0.1, 0.1);
  b.duration_delta = rng.uniform(c.delta_lower, c.delta_upper);
  return b;
}

Verdict dcm_propagation() {
  const auto t0 = std::chrono::steady_clock::now();
  oracle::Rng rng(101);
  const double b = kParams.time_constant();
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double T = rng.uniform(0.1, 1.0);
    const double t = rng.uniform(0.0, T);
    const ZmpSegment seg(rng.vec(-0.3, 0.3), rng.vec(-0.3, 0.3), T);
    const Vec2 xi_t = rng.vec(-0.4, 0.4);
    const Vec2 closed = propagate_dcm(seg, xi_t, t, kParams);
    const Vec2 ref = oracle::rk4_dcm(oracle::LinearZmp{seg.start(), seg.end(), T}, xi_t, t, T, b, 5e-4);
    worst = std::max(worst, (closed - ref).norm() / std::max(1e-3, ref.norm()));
  }
  const double elapsed = seconds_since(t0);
  return {worst <= 1e-8 && elapsed < 1.0,
          fmt::format("max relative error {:.2e} over 1000 cases, {:.3f} s", worst, elapsed)};
}

// Terminal DCM error integrated numerically from xi_ref + err at t.
Vec2 rk4_residual(const PhaseContext& c, const DecisionBlock& v, const Vec2& xi_err) {
  const double b = kParams.time_constant();
  const double tn = c.duration + v.duration_delta;
  const oracle::LinearZmp ref_new{c.zmp_start, c.zmp_end, tn};
  const oracle::LinearZmp ctrl{v.zmp_start_ctrl, v.zmp_end_ctrl, tn};
  const oracle::LinearZmp ref_old{c.zmp_start, c.zmp_end, c.duration};
  auto actual_zmp = [&](double s) -> Vec2 { return ref_new(s) + ctrl(s); };
  const Vec2 actual = oracle::rk4_dcm(actual_zmp, Vec2(c.dcm_ref + xi_err), c.time, tn, b, 1e-4);
  const Vec2 nominal = oracle::rk4_dcm(ref_old, c.dcm_ref, c.time, c.duration, b, 1e-4);
  return v.step_ctrl + v.dcm_offset_err - (actual - nominal);
}

// Context built by the controller's own path from a real schedule.
PhasePreviewContext schedule_context(oracle::Rng& rng) {
  GaitSchedule s = walking(rng.uniform(-0.1, 0.3), 10);
  const int skip = rng.integer(0, 5);
  for (int i = 0; i < skip; ++i) s.advance();
  for (std::size_t i = 0; i < 3; ++i) s.ahead(i).duration += rng.uniform(-0.08, 0.08);
  RobotState state;
  state.time_in_phase = rng.uniform(0.0, 0.95 * s.current().duration);
  state.com = s.current().zmp_start + rng.vec(-0.05, 0.05);
  state.com_vel = rng.vec(-0.3, 0.3);
  const ReferenceTrajectory refs = preview_com(s, state, 160, {}, kParams);
  return build_context(state, s, refs, NmpcConfig{}, kParams);
}

Verdict residual_correctness() {
  oracle::Rng rng(202);
  double zero_worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const PhasePreviewContext ctx = schedule_context(rng);
    for (const PhaseContext& c : ctx.phases) {
      zero_worst = std::max(zero_worst, residual(c, DecisionBlock{}, Vec2::Zero(), kParams).norm());
    }
  }
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const PhaseContext c = random_phase(rng);
    const DecisionBlock v = random_block(rng, c);
    const Vec2 err = rng.vec(-0.1, 0.1);
    const Vec2 ref = rk4_residual(c, v, err);
    worst = std::max(worst, (residual(c, v, err, kParams) - ref).norm() / std::max(1.0, ref.norm()));
  }
  return {zero_worst <= 1e-12 && worst <= 1e-8,
          fmt::format("zero block max |F| {:.2e} over 200 schedule contexts, max error vs integration {:.2e} "
                      "over 1000 cases",
                      zero_worst, worst)};
}

Verdict jacobian() {
  oracle::Rng rng(303);
  double worst = 0.0;
  int at_bounds = 0;
  for (int k = 0; k < 1000; ++k) {
    const PhaseContext c = random_phase(rng);
    DecisionBlock v = random_block(rng, c);
    if (k % 3 == 1) v.duration_delta = c.delta_lower;
    if (k % 3 == 2) v.duration_delta = c.delta_upper;
    at_bounds += k % 3 != 0;
    const Vec2 err = rng.vec(-0.1, 0.1);
    const ResidualJacobian j = residual_jacobian(c, v, err, kParams);
    Eigen::VectorXd x(13);
    x << v.to_vector(), err, Vec2::Zero();
    auto f = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
      return residual(c, DecisionBlock::from_vector(y.head(9)), y.segment<2>(9) + y.segment<2>(11), kParams);
    };
    const Eigen::MatrixXd fd = oracle::central_jacobian(f, x, 1e-6);
    Eigen::MatrixXd ours(2, 13);
    ours << j.block, j.coupling;
    worst = std::max(worst, (ours - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff()));
  }
  return {worst <= 1e-5,
          fmt::format("max relative deviation {:.2e} over 1000 contexts ({} with the duration at a bound)", worst,
                      at_bounds)};
}

Verdict sqp_behaviour() {
  Scenario sc = load_scenario(config_path("in_place.ini"));
  SimConfig cfg = sc.resolved();
  cfg.duration = 10.0;
  cfg.disturbances.clear();
  Simulator sim(cfg);
  int solves = 0, bad = 0, max_iters = 0;
  double max_step = 0.0;
  sim.set_solve_hook([&](const PhasePreviewContext&, const NmpcSolution& s) {
    ++solves;
    max_iters = std::max(max_iters, s.iterations);
    max_step = std::max(max_step, s.step_norm);
    if (!s.ok || s.iterations > 20 || !(s.step_norm < 1e-6)) ++bad;
  });
  const SimLog& log = sim.run();
  const double mean_ms = solves > 0 ? 1e3 * sim.solve_seconds() / solves : 0.0;
  return {!log.fell && solves > 0 && bad == 0 && mean_ms < 10.0,
          fmt::format("{} ticks, {} outside limits, max iterations {}, max |dv| {:.1e}, mean solve {:.3f} ms", solves,
                      bad, max_iters, max_step, mean_ms)};
}

struct InvariantStats {
  long ticks = 0;
  double continuity = 0.0;
  double dsp_step = 0.0;
  double box = 0.0;  // largest bound violation
  long past_end = 0;
};

void check_invariants(const PhasePreviewContext& ctx, const NmpcSolution& sol, const NmpcConfig& cfg,
                      InvariantStats& st) {
  ++st.ticks;
  for (std::size_t i = 0; i < sol.blocks.size(); ++i) {
    const DecisionBlock& b = sol.blocks[i];
    const PhaseContext& p = ctx.phases[i];
    auto over = [&](const Vec2& v, const Vec2& lo, const Vec2& hi) {
      st.box = std::max({st.box, (lo - v).maxCoeff(), (v - hi).maxCoeff()});
    };
    over(b.zmp_start_ctrl, cfg.zmp_ctrl_lower, cfg.zmp_ctrl_upper);
    over(b.zmp_end_ctrl, cfg.zmp_ctrl_lower, cfg.zmp_ctrl_upper);
    if (p.type == PhaseType::SSP) over(b.step_ctrl, p.step_lower, p.step_upper);
    else st.dsp_step = std::max(st.dsp_step, b.step_ctrl.cwiseAbs().maxCoeff());
    st.box = std::max({st.box, p.delta_lower - b.duration_delta, b.duration_delta - p.delta_upper});
    if (i + 1 < sol.blocks.size()) {
      st.continuity = std::max(st.continuity, (b.zmp_end_ctrl - sol.blocks[i + 1].zmp_start_ctrl).cwiseAbs().maxCoeff());
    }
  }
  if (ctx.zmp_ctrl_start) {
    st.continuity = std::max(st.continuity, (sol.blocks[0].zmp_start_ctrl - *ctx.zmp_ctrl_start).cwiseAbs().maxCoeff());
  }
  if (!(ctx.phases[0].duration + sol.blocks[0].duration_delta > ctx.phases[0].time)) ++st.past_end;
}

Verdict structural_invariants() {
  std::vector<std::pair<std::string, SimConfig>> runs;
  for (const char* file : {"in_place.ini", "forward_2m.ini", "direction_sweep.ini", "timing_sweep.ini"}) {
    const Scenario sc = load_scenario(config_path(file));
    runs.emplace_back(sc.name, sc.resolved());
  }
  const Scenario abl = load_scenario(config_path("ablation.ini"));
  for (AblationMethod m : kMethods) {
    SimConfig cfg = abl.sim;
    cfg.nmpc = ablation_config(m, abl.sim.nmpc);
    runs.emplace_back(fmt::format("{}/{}", abl.name, to_string(m)), cfg);
  }
  InvariantStats st;
  for (auto& [name, cfg] : runs) {
    Simulator sim(cfg);
    const NmpcConfig nmpc = cfg.nmpc;
    sim.set_solve_hook([&](const PhasePreviewContext& ctx, const NmpcSolution& s) {
      if (s.ok) check_invariants(ctx, s, nmpc, st);
    });
    sim.run();
  }
  const bool pass = st.ticks > 0 && st.continuity <= 1e-12 && st.dsp_step <= 1e-9 && st.box <= 1e-9 &&
                    st.past_end == 0;
  return {pass, fmt::format("{} runs, {} solved ticks: continuity {:.1e}, DSP step {:.1e}, worst bound excess "
                            "{:.1e}, active phase ending in the past {}",
                            runs.size(), st.ticks, st.continuity, st.dsp_step, std::max(0.0, st.box), st.past_end)};
}

struct NominalStats {
  bool fell = false;
  double rms = 0.0;
  double zmax = 0.0;
};

NominalStats nominal_30s() {
  SimConfig cfg = load_scenario(config_path("in_place.ini")).resolved();
  cfg.duration = 30.0;
  cfg.disturbances.clear();
  const SimLog log = run_scenario(cfg);
  NominalStats st{log.fell};
  double sq = 0.0;
  int n = 0;
  for (const SimLogRow& r : log.rows) {
    st.zmax = std::max(st.zmax, r.zmp_ctrl.norm());
    if (r.time < 1.0) continue;  // transient
    sq += r.dcm_err.squaredNorm();
    ++n;
  }
  st.rms = n > 0 ? std::sqrt(sq / n) : 0.0;
  return st;
}

Verdict nominal_regression(bool write_golden) {
  const NominalStats st = nominal_30s();
  const std::string golden = std::string(PHASEWALK_GOLDEN_DIR) + "/nominal_30s.txt";
  bool golden_ok = true;
  std::string note;
  if (write_golden) {
    std::ofstream(golden) << fmt::format("{:.9g} {:.9g}\n", st.rms, st.zmax);
    note = ", golden file written";
  } else if (std::ifstream in(golden); in) {
    double rms = 0.0, zmax = 0.0;
    in >> rms >> zmax;
    // Loose enough for another compiler, tight enough to catch a behaviour change.
    golden_ok = std::abs(st.rms - rms) <= 1e-3 * rms + 1e-7 && std::abs(st.zmax - zmax) <= 1e-3 * zmax + 1e-7;
    note = fmt::format(", golden rms {:.4e} {}", rms, golden_ok ? "matches" : "DIFFERS");
  } else {
    golden_ok = false;
    note = ", golden file missing";
  }
  return {!st.fell && st.rms <= 2e-3 && st.zmax <= 1e-3 && golden_ok,
          fmt::format("{}, DCM error rms {:.2e} m after 1 s, max |z_ctrl| {:.2e} m{}", st.fell ? "fell" : "no fall",
                      st.rms, st.zmax, note)};
}

// The 10 N search gives each method's largest recoverable force. Every grid
// force above what M3 and M4 survive and within what M1 and M2 survive is a
// candidate I*; each is re-run to check the verdicts and the settle order.
Verdict ablation_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario abl = load_scenario(config_path("ablation.ini"));
  SweepSpec spec;
  spec.mode = SweepMode::Ablation;
  spec.direction = 90.0;
  spec.push_time = 1.2;
  spec.force_duration = 0.2;
  spec.force_step = 10.0;
  spec.methods = kMethods;
  const std::vector<SweepResult> search = run_sweep(abl.sim, spec, worker_count());
  const double variants = std::max(search[2].max_force, search[3].max_force);
  const double full = std::min(search[0].max_force, search[1].max_force);

  auto fmt_settle = [](double t) { return std::isfinite(t) ? fmt::format("{:.2f}", t) : std::string("never"); };
  std::string found;
  for (const SweepResult& r : search) found += fmt::format("{} {:.0f} N, ", to_string(r.cell.method), r.max_force);
  std::string tried;
  double chosen = 0.0;
  for (double force = variants + spec.force_step; force <= full + 1e-9; force += spec.force_step) {
    SimConfig cfg = abl.sim;
    cfg.duration = spec.push_time + spec.force_duration + spec.settle_window;
    cfg.disturbances = {Disturbance{force * push_direction(spec.direction), spec.push_time, spec.force_duration}};
    const std::vector<AblationRun> runs = run_ablation(cfg, kMethods, worker_count());
    const bool verdicts = !runs[0].log.fell && !runs[1].log.fell && runs[2].log.fell && runs[3].log.fell;
    const bool faster = runs[0].settle_time < runs[1].settle_time;
    tried += fmt::format(" {:.0f} N{} M1 {} / M2 {};", force, verdicts ? "" : " (verdicts differ)",
                         fmt_settle(runs[0].settle_time), fmt_settle(runs[1].settle_time));
    if (verdicts && faster && chosen == 0.0) chosen = force;
  }
  const double elapsed = seconds_since(t0);
  return {chosen > 0.0 && elapsed < 120.0,
          fmt::format("max recoverable {}I* {}, settle times (s):{} {:.1f} s",
                      found, chosen > 0.0 ? fmt::format("= {:.0f} N", chosen) : std::string("not found"), tried,
                      elapsed)};
}

double force_of(const std::vector<SweepResult>& rs, AblationMethod m, const std::function<bool(const SweepCell&)>& pick) {
  double best = 0.0;
  for (const SweepResult& r : rs) {
    if (r.cell.method == m && pick(r.cell)) best = std::max(best, r.max_force);
  }
  return best;
}

Verdict direction_sweep() {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario sc = load_scenario(config_path("direction_sweep.ini"));
  SweepSpec spec = sc.sweep;
  spec.mode = SweepMode::Direction;
  spec.methods = kMethods;
  const int threads = worker_count();
  const std::vector<SweepResult> rs = run_sweep(sc.sim, spec, threads);
  bool errors = false;
  for (const SweepResult& r : rs) errors = errors || !r.error.empty();
  auto in = [](double lo, double hi) {
    return [lo, hi](const SweepCell& c) { return c.direction >= lo - 1e-9 && c.direction <= hi + 1e-9; };
  };
  const double front = force_of(rs, AblationMethod::M1, in(60, 120));
  const double back = force_of(rs, AblationMethod::M1, in(240, 300));
  int dominated = 0, cells = 0;
  for (double d : spec.directions) {
    const double m1 = force_of(rs, AblationMethod::M1, in(d, d));
    for (AblationMethod m : {AblationMethod::M2, AblationMethod::M3, AblationMethod::M4}) {
      ++cells;
      dominated += m1 >= force_of(rs, m, in(d, d));
    }
  }
  const double elapsed = seconds_since(t0);
  return {!errors && front > back && dominated == cells,
          fmt::format("M1 best {:.0f} N in 60-120 deg vs {:.0f} N in 240-300 deg, M1 >= variant in {}/{} "
                      "direction cells, {:.1f} s on {} worker(s)",
                      front, back, dominated, cells, elapsed, threads)};
}

Verdict timing_sweep() {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario sc = load_scenario(config_path("timing_sweep.ini"));
  SweepSpec spec = sc.sweep;
  spec.mode = SweepMode::Timing;
  spec.methods = {AblationMethod::M1, AblationMethod::M2};
  const std::vector<SweepResult> rs = run_sweep(sc.sim, spec, worker_count());
  const double ssp = sc.sim.gait.ssp_duration;
  int ge = 0, strict_dsp = 0;
  std::string table;
  for (double t : spec.timings) {
    auto at = [t](const SweepCell& c) { return std::abs(c.timing - t) < 1e-9; };
    const double m1 = force_of(rs, AblationMethod::M1, at);
    const double m2 = force_of(rs, AblationMethod::M2, at);
    ge += m1 >= m2;
    if (t >= ssp - 1e-9 && m1 > m2) ++strict_dsp;
    table += fmt::format(" {:.1f}:{:.0f}/{:.0f}", t, m1, m2);
  }
  const double elapsed = seconds_since(t0);
  return {ge == static_cast<int>(spec.timings.size()) && strict_dsp > 0,
          fmt::format("M1 >= M2 in {}/{} cells, strictly better in {} DSP cell(s), M1/M2 N:{}, {:.1f} s", ge,
                      spec.timings.size(), strict_dsp, table, elapsed)};
}

Verdict preview_generator() {
  double worst_rms = 0.0, worst_rebuild = 0.0;
  for (double step : {0.0, 0.2}) {
    GaitSchedule s = walking(step, 20);
    ReferenceGenerator gen{PreviewGenerator(kParams)};
    gen.preroll(s, 1.0, 0.3);
    double sq = 0.0;
    long tick = 0;
    const int n = 1000;
    for (int k = 0; k < n; ++k) {
      const ReferenceTrajectory& tr = gen.plan(s, tick * 0.01);
      for (std::size_t j = 0; j < tr.size(); ++j) {
        const Vec2 rebuilt = tr.com[j] + kParams.time_constant() * tr.com_vel[j];
        worst_rebuild = std::max(worst_rebuild, (rebuilt - tr.dcm[j]).norm());
      }
      // Implied ZMP written out from the emitted CoM and acceleration.
      const Vec2 implied = tr.com[0] - kParams.height_ratio() * tr.com_acc[0];
      sq += (implied - tr.zmp[0]).squaredNorm();
      gen.advance(1);
      if (++tick * 0.01 >= s.current().duration - 1e-9) {
        s.advance();
        tick = 0;
      }
    }
    worst_rms = std::max(worst_rms, std::sqrt(sq / n));
  }
  return {worst_rms <= 5e-3 && worst_rebuild <= 1e-10,
          fmt::format("implied ZMP rms {:.2e} m (worst of in-place and 0.2 m steps), DCM reconstruction {:.1e}",
                      worst_rms, worst_rebuild)};
}

Verdict qp_solver() {
  oracle::Rng rng(1111);
  int optimal = 0, agree = 0, infeasible_ok = 0, mismatched = 0;
  double worst_kkt = 0.0, worst_x = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = rng.integer(1, 6);
    const int me = rng.integer(0, std::min(2, n - 1));
    const int mi = rng.integer(0, 6);
    Eigen::MatrixXd m = Eigen::MatrixXd::NullaryExpr(n, n, [&]() { return rng.uniform(-1, 1); });
    QpProblem p;
    p.hessian = m * m.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
    p.gradient = Eigen::VectorXd::NullaryExpr(n, [&]() { return rng.uniform(-2, 2); });
    p.eq_matrix = Eigen::MatrixXd::NullaryExpr(me, n, [&]() { return rng.uniform(-1, 1); });
    p.eq_rhs = Eigen::VectorXd::NullaryExpr(me, [&]() { return rng.uniform(-0.5, 0.5); });
    p.ineq_matrix = Eigen::MatrixXd::NullaryExpr(mi, n, [&]() { return rng.uniform(-1, 1); });
    p.lower.resize(mi);
    p.upper.resize(mi);
    for (int j = 0; j < mi; ++j) {
      const int kind = rng.integer(0, 3);
      const double a = rng.uniform(-1.0, 0.2);
      p.lower(j) = kind == 1 ? -1e20 : a;
      p.upper(j) = kind == 2 ? 1e20 : a + rng.uniform(0.05, 1.5);
    }
    const auto expected = oracle::brute_force_qp(p.hessian, p.gradient, p.eq_matrix, p.eq_rhs, p.ineq_matrix,
                                                 p.lower, p.upper);
    const QpSolution s = solve_qp(p);
    if (s.status == QpStatus::Optimal) {
      ++optimal;
      worst_kkt = std::max(worst_kkt, oracle::kkt_violation(p.hessian, p.gradient, p.eq_matrix, p.eq_rhs,
                                                            p.ineq_matrix, p.lower, p.upper, s.x, s.eq_multipliers,
                                                            s.ineq_multipliers));
    }
    if (!expected) {
      if (s.status == QpStatus::Infeasible) ++infeasible_ok;
      else ++mismatched;
      continue;
    }
    if (s.status != QpStatus::Optimal) {
      ++mismatched;
      continue;
    }
    const double dx = (s.x - *expected).lpNorm<Eigen::Infinity>();
    worst_x = std::max(worst_x, dx);
    if (dx <= 1e-8) ++agree;
    else ++mismatched;
  }
  return {mismatched == 0 && worst_kkt <= 1e-9,
          fmt::format("500 problems: {} optimal agree with enumeration (max |dx| {:.1e}), {} infeasible agree, {} "
                      "disagree, max KKT residual {:.1e}",
                      agree, worst_x, infeasible_ok, mismatched, worst_kkt)};
}

}  // namespace

int main(int argc, char** argv) {
  // Arguments: optional --write-golden, then criterion numbers to run (all by default).
  bool write_golden = false;
  std::vector<std::size_t> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--write-golden") == 0) write_golden = true;
    else only.push_back(static_cast<std::size_t>(std::atoi(argv[i])));
  }
  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {"closed-form DCM propagation", dcm_propagation},
      {"residual correctness", residual_correctness},
      {"residual Jacobian", jacobian},
      {"SQP convergence and timing", sqp_behaviour},
      {"structural solution invariants", structural_invariants},
      {"nominal closed-loop regression", [&] { return nominal_regression(write_golden); }},
      {"ablation ordering", ablation_ordering},
      {"direction sweep", direction_sweep},
      {"timing sweep", timing_sweep},
      {"preview generator", preview_generator},
      {"QP solver", qp_solver},
  };
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && std::find(only.begin(), only.end(), i + 1) == only.end()) continue;
    ++ran;
    Verdict v;
    try {
      v = criteria[i].run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    fmt::print("[{}] {:2} {}: {}\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, v.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
