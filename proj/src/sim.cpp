#include "phasewalk/sim.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace phasewalk {

SwingTrajectory SwingTrajectory::plan(const Sample& start, const Vec2& target, double t0, double t1) {
  if (!(t1 > t0)) throw std::invalid_argument("SwingTrajectory: end time must exceed start time");
  const double T = t1 - t0;
  // Remaining three coefficients from p(T) = target, p'(T) = p''(T) = 0.
  Eigen::Matrix3d m;
  m << std::pow(T, 3), std::pow(T, 4), std::pow(T, 5),  //
      3 * T * T, 4 * std::pow(T, 3), 5 * std::pow(T, 4),  //
      6 * T, 12 * T * T, 20 * std::pow(T, 3);
  const Eigen::PartialPivLU<Eigen::Matrix3d> lu(m);
  SwingTrajectory s;
  s.t0_ = t0;
  s.t1_ = t1;
  for (int a = 0; a < 2; ++a) {
    const double p0 = start.pos(a), v0 = start.vel(a), a0 = start.acc(a);
    const Eigen::Vector3d rhs(target(a) - p0 - v0 * T - 0.5 * a0 * T * T, -v0 - a0 * T, -a0);
    const Eigen::Vector3d hi = lu.solve(rhs);
    s.coeffs_.col(a) << p0, v0, 0.5 * a0, hi;
  }
  return s;
}

SwingTrajectory SwingTrajectory::hold(const Vec2& pos, double t) {
  SwingTrajectory s;
  s.coeffs_.row(0) = pos.transpose();
  s.t0_ = s.t1_ = t;
  return s;
}

SwingTrajectory::Sample SwingTrajectory::at(double t) const {
  const double u = std::clamp(t, t0_, t1_) - t0_;
  Sample out;
  for (int a = 0; a < 2; ++a) {
    const auto c = coeffs_.col(a);
    out.pos(a) = c(0) + u * (c(1) + u * (c(2) + u * (c(3) + u * (c(4) + u * c(5)))));
    out.vel(a) = c(1) + u * (2 * c(2) + u * (3 * c(3) + u * (4 * c(4) + u * 5 * c(5))));
    out.acc(a) = 2 * c(2) + u * (6 * c(3) + u * (12 * c(4) + u * 20 * c(5)));
  }
  if (t > t1_) {
    out.vel.setZero();
    out.acc.setZero();
  }
  return out;
}

double swing_height(double s, double height) {
  s = std::clamp(s, 0.0, 1.0);
  return 16.0 * s * s * (1.0 - s) * (1.0 - s) * height;
}

int SimConfig::substeps() const {
  if (!(physics_dt > 0) || !(control_period > 0)) throw std::invalid_argument("SimConfig: time steps must be positive");
  const double ratio = control_period / physics_dt;
  const long n = std::lround(ratio);
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * ratio) {
    throw std::invalid_argument("SimConfig: control_period must be an integer multiple of physics_dt");
  }
  return static_cast<int>(n);
}

void SimConfig::validate() const {
  substeps();
  if (!(duration > 0)) throw std::invalid_argument("SimConfig: duration must be positive");
  if (!(fall.dcm_error > 0) || fall.sustain < 0 || !(fall.com_radius > 0)) {
    throw std::invalid_argument("SimConfig: bad fall thresholds");
  }
  if (!(gait.ssp_duration > 0) || !(gait.dsp_duration > 0)) throw std::invalid_argument("SimConfig: bad phase durations");
  if (gait.preroll_hold < 0 || gait.preroll_shift < 0) throw std::invalid_argument("SimConfig: bad pre-roll");
  if (gait.preview_horizon < 1) throw std::invalid_argument("SimConfig: preview horizon must be positive");
  for (const Disturbance& d : disturbances) {
    if (!(d.duration > 0)) throw std::invalid_argument("SimConfig: disturbance duration must be positive");
  }
  nmpc.validate();
}

const char* to_string(SimEventKind kind) {
  switch (kind) {
    case SimEventKind::Transition: return "transition";
    case SimEventKind::Footstep: return "footstep";
    case SimEventKind::Fall: return "fall";
    case SimEventKind::NmpcFailure: return "nmpc_failure";
  }
  return "transition";
}

RobotState physics_step(const RobotState& state, const Vec2& zmp_des, const Vec2& ext_force, const LipmParams& params,
                        double dt) {
  if (!(dt > 0)) throw std::invalid_argument("physics_step: dt must be positive");
  RobotState next = state;
  next.com_vel += dt * (lipm_accel(state, zmp_des, params) + ext_force / params.mass());
  next.com += dt * next.com_vel;
  return next;
}

Vec2 support_center(const PhaseSpec& phase) {
  return phase.type == PhaseType::SSP ? phase.support_foot : Vec2(0.5 * (phase.support_foot + phase.landing_foot));
}

bool FallDetector::update(const Vec2& dcm_err, const Vec2& com, const Vec2& support, double dt) {
  if (fallen_) return true;
  above_ = dcm_err.norm() > thr_.dcm_error ? above_ + dt : 0.0;
  // Small slack so that a sustain window made of whole ticks is reached exactly.
  if (above_ >= thr_.sustain - 1e-9 && above_ > 0.0) fallen_ = true;
  if ((com - support).norm() > thr_.com_radius) fallen_ = true;
  return fallen_;
}

namespace {

GaitSchedule initial_schedule(const SimConfig& cfg) {
  cfg.validate();
  return build_schedule(cfg.gait.command.start_stance, plan_footsteps(cfg.gait.command), cfg.gait.ssp_duration,
                        cfg.gait.dsp_duration);
}

}  // namespace

Simulator::Simulator(SimConfig cfg)
    : cfg_(std::move(cfg)),
      schedule_(initial_schedule(cfg_)),
      reference_(PreviewGenerator(cfg_.model, cfg_.control_period, cfg_.gait.preview_horizon, cfg_.gait.preview_weights)),
      solver_(cfg_.model),
      fall_(cfg_.fall) {
  schedule_.ensure_remaining(static_cast<std::size_t>(cfg_.nmpc.n_phases) + 1);
  reference_.preroll(schedule_, cfg_.gait.preroll_hold, cfg_.gait.preroll_shift);
  plant_.com = reference_.state().pos;
  plant_.com_vel = reference_.state().vel;
  const PhaseSpec& p = schedule_.current();
  swing_target_ = p.landing_foot;
  swing_ = SwingTrajectory::hold(p.type == PhaseType::SSP ? p.swing_start : p.landing_foot, 0.0);
}

bool Simulator::finished() const {
  const long total = std::lround(cfg_.duration / cfg_.control_period);
  return tick_ >= total || (log_.fell && cfg_.stop_on_fall);
}

Vec2 Simulator::dcm_error() const { return dcm_of(plant_, cfg_.model) - reference_.dcm(); }

Vec2 Simulator::swing_position() const {
  return swing_.at(static_cast<double>(phase_tick_) * cfg_.control_period).pos;
}

Vec2 Simulator::external_force(long substep) const {
  const double t = static_cast<double>(substep) * cfg_.physics_dt;
  Vec2 f = Vec2::Zero();
  for (const Disturbance& d : cfg_.disturbances) {
    if (d.active_at(t)) f += d.force;
  }
  return f;
}

void Simulator::shift_reference_dcm(const Vec2& shift) {
  // Velocity only: position and acceleration, hence the realized ZMP, stay continuous.
  ComState s = reference_.state();
  s.vel += shift / cfg_.model.time_constant();
  reference_.reset(s);
}

Vec2 Simulator::desired_zmp(const PhaseSpec& phase, const Vec2& feedforward, const Vec2& ctrl) const {
  // Support region: the foot box around the stance foot, or around both feet
  // in double support.
  Vec2 lo = phase.support_foot;
  Vec2 hi = phase.support_foot;
  if (phase.type == PhaseType::DSP) {
    lo = lo.cwiseMin(phase.landing_foot);
    hi = hi.cwiseMax(phase.landing_foot);
  }
  return (feedforward + ctrl).cwiseMax(lo + cfg_.nmpc.zmp_ctrl_lower).cwiseMin(hi + cfg_.nmpc.zmp_ctrl_upper);
}

void Simulator::transition() {
  const PhaseSpec done = schedule_.current();
  const std::size_t index = schedule_.current_index();
  const ComState& ref = reference_.state();
  const Vec2 realized = ref.pos - cfg_.model.height_ratio() * ref.acc;
  log_.events.push_back(
      {time(), SimEventKind::Transition, index, desired_zmp(done, realized, applied_.zmp_end_ctrl)});
  if (done.type == PhaseType::SSP) {
    // The reference follows the adjusted foothold: its DCM moves with the
    // landing so the remaining error is the offset error alone.
    shift_reference_dcm(swing_target_ - done.landing_foot);
    schedule_.commit_landing(swing_target_);
    log_.events.push_back({time(), SimEventKind::Footstep, index, swing_target_});
  }
  schedule_.advance();
  phase_tick_ = 0;
  pin_start_ = applied_.zmp_end_ctrl;
  if (warm_) warm_ = shift_solution(*warm_);
  const PhaseSpec& next = schedule_.current();
  swing_target_ = next.landing_foot;
  swing_ = SwingTrajectory::hold(next.type == PhaseType::SSP ? next.swing_start : next.landing_foot, 0.0);
}

bool Simulator::step() {
  if (finished()) return false;
  const double period = cfg_.control_period;
  if (phase_tick_ > 0 && static_cast<double>(phase_tick_) * period >= schedule_.current().duration - 1e-9) {
    transition();
  }
  schedule_.ensure_remaining(static_cast<std::size_t>(cfg_.nmpc.n_phases) + 1);
  const double tau = static_cast<double>(phase_tick_) * period;
  const RobotState now{plant_.com, plant_.com_vel, tau};

  const ReferenceTrajectory& refs = reference_.plan(schedule_, tau);
  PhasePreviewContext ctx = build_context(now, schedule_, refs, cfg_.nmpc, cfg_.model);
  ctx.zmp_ctrl_start = pin_start_;
  pin_start_.reset();

  const auto t0 = std::chrono::steady_clock::now();
  const NmpcSolution sol = solver_.solve(ctx, cfg_.nmpc, warm_ ? &*warm_ : nullptr);
  solve_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (hook_) hook_(ctx, sol);

  PhaseSpec& phase = schedule_.current();
  double t_new = phase.duration;
  if (sol.ok) {
    applied_ = sol.blocks.front();
    t_new = phase.duration + applied_.duration_delta;
    warm_ = sol;
  } else {
    // Hold the previous controls and the current timing for this tick.
    applied_.duration_delta = 0.0;
    log_.events.push_back({time(), SimEventKind::NmpcFailure, schedule_.current_index(), Vec2::Zero()});
  }
  if (t_new != phase.duration) {
    // Keep the reference DCM end point of the phase fixed under the new
    // duration and replan the reference from the re-anchored state.
    const ZmpSegment seg = phase.ref_zmp();
    const Vec2 xi_ref = refs.dcm.front();
    const Vec2 xi_end = propagate_dcm(seg, xi_ref, tau, cfg_.model);
    const ZmpSegment stretched = seg.with_duration(t_new);
    const Vec2 xi_new = z_beta(stretched, tau, cfg_.model) +
                        std::exp(-(t_new - tau) / cfg_.model.time_constant()) * (xi_end - z_alpha(stretched, cfg_.model));
    phase.duration = t_new;
    shift_reference_dcm(xi_new - xi_ref);
    reference_.plan(schedule_, tau);
  }

  if (phase.type == PhaseType::SSP) {
    swing_target_ = phase.landing_foot + applied_.step_ctrl;
    const SwingTrajectory::Sample cur = swing_.at(tau);
    swing_ = t_new - tau > 1e-3 ? SwingTrajectory::plan(cur, swing_target_, tau, t_new)
                                : SwingTrajectory::hold(swing_target_, tau);
  }

  // The reference CoM's own ZMP is fed forward so that preview tracking error
  // does not show up as DCM error. The sum is clamped to the support region.
  const double s = std::min(tau, t_new);
  const ReferenceTrajectory& plan = reference_.trajectory();
  const ZmpSegment seg = phase.ref_zmp();
  const Vec2 zmp_ff = plan.implied_zmp(0, cfg_.model);
  const Vec2 zmp_ref = zmp_interp(seg, s);
  const Vec2 zmp_ctrl = applied_.zmp_start_ctrl + (s / t_new) * (applied_.zmp_end_ctrl - applied_.zmp_start_ctrl);
  const Vec2 zmp_des = desired_zmp(phase, zmp_ff, zmp_ctrl);

  SimLogRow row;
  row.time = time();
  row.com = plant_.com;
  row.com_vel = plant_.com_vel;
  row.dcm = dcm_of(now, cfg_.model);
  row.dcm_ref = row.dcm - ctx.dcm_err;
  row.dcm_err = ctx.dcm_err;
  row.zmp_ref = zmp_ref;
  row.zmp_ff = zmp_ff;
  row.zmp_ctrl = zmp_ctrl;
  row.zmp_des = zmp_des;
  row.phase_index = schedule_.current_index();
  row.phase_type = phase.type;
  row.time_in_phase = tau;
  row.duration = t_new;
  row.swing_target = swing_target_;
  row.sqp_iterations = sol.iterations;
  row.nmpc_ok = sol.ok;

  const int n = cfg_.substeps();
  const long first = tick_ * n;
  for (int k = 0; k < n; ++k) {
    const Vec2 force = external_force(first + k);
    if (force.squaredNorm() > 0.0) row.disturbance_active = true;
    // Reference parts follow their trajectories within the tick; the control
    // part is held.
    const double u = (k + 0.5) / n;
    const Vec2 ff = zmp_ff + u * (plan.implied_zmp(1, cfg_.model) - zmp_ff);
    plant_ = physics_step(plant_, desired_zmp(phase, ff, zmp_ctrl), force, cfg_.model, cfg_.physics_dt);
  }
  log_.rows.push_back(row);
  reference_.advance(1);
  ++tick_;
  ++phase_tick_;

  if (fall_.update(dcm_error(), plant_.com, support_center(schedule_.current()), period) && !log_.fell) {
    log_.fell = true;
    log_.fall_time = time();
    log_.events.push_back({time(), SimEventKind::Fall, schedule_.current_index(), plant_.com});
  }
  return true;
}

void Simulator::run_until(double t) {
  while (time() < t - 1e-9 && step()) {
  }
}

const SimLog& Simulator::run() {
  while (step()) {
  }
  return log_;
}

SimLog run_scenario(const SimConfig& cfg) {
  Simulator sim(cfg);
  return sim.run();
}

}  // namespace phasewalk
