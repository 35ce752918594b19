#include "phasewalk/gait_plan.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace phasewalk {

const char* to_string(PhaseType type) { return type == PhaseType::SSP ? "SSP" : "DSP"; }

const char* to_string(SwingSide side) {
  switch (side) {
    case SwingSide::Left: return "left";
    case SwingSide::Right: return "right";
    case SwingSide::None: return "none";
  }
  return "none";
}

namespace {

SwingSide opposite(SwingSide s) {
  if (s == SwingSide::Left) return SwingSide::Right;
  if (s == SwingSide::Right) return SwingSide::Left;
  return SwingSide::None;
}

PhaseSpec make_ssp(const Vec2& support, const Vec2& swing_start, const Vec2& landing, SwingSide side, double T) {
  PhaseSpec p;
  p.type = PhaseType::SSP;
  p.nominal_duration = p.duration = T;
  p.support_foot = support;
  p.landing_foot = landing;
  p.swing_start = swing_start;
  p.zmp_start = p.zmp_end = support;
  p.swing_side = side;
  return p;
}

PhaseSpec make_dsp(const PhaseSpec& ssp, double T) {
  PhaseSpec p;
  p.type = PhaseType::DSP;
  p.nominal_duration = p.duration = T;
  p.support_foot = ssp.support_foot;
  p.landing_foot = ssp.landing_foot;
  p.swing_start = ssp.landing_foot;
  p.zmp_start = ssp.support_foot;
  p.zmp_end = ssp.landing_foot;
  p.swing_side = SwingSide::None;
  return p;
}

}  // namespace

std::vector<Footstep> plan_footsteps(const FootstepCommand& c) {
  if (!(c.step_width > 0.0)) throw std::invalid_argument("plan_footsteps: step width must be positive");
  if (c.n_steps < 1) throw std::invalid_argument("plan_footsteps: need at least one step");
  if (c.first_swing == SwingSide::None) throw std::invalid_argument("plan_footsteps: first swing side");
  const Vec2 center = 0.5 * (c.start_stance.left + c.start_stance.right);
  std::vector<Footstep> steps;
  SwingSide side = c.first_swing;
  for (int k = 1; k <= c.n_steps; ++k) {
    Footstep f;
    f.side = side;
    const double y = side == SwingSide::Left ? 0.5 * c.step_width : -0.5 * c.step_width;
    f.position = center + Vec2(k * c.step_length, y);
    steps.push_back(f);
    side = opposite(side);
  }
  return steps;
}

GaitSchedule::GaitSchedule(std::vector<PhaseSpec> phases) : phases_(std::move(phases)) {
  if (phases_.empty()) throw std::invalid_argument("GaitSchedule: no phases");
}

void GaitSchedule::ensure_remaining(std::size_t count) {
  while (remaining() < count) {
    // Last phase is a DSP from S to L: step in place with the foot at S.
    const PhaseSpec& last = phases_.back();
    const PhaseSpec* prev_ssp = nullptr;
    for (auto it = phases_.rbegin(); it != phases_.rend(); ++it) {
      if (it->type == PhaseType::SSP) {
        prev_ssp = &*it;
        break;
      }
    }
    const SwingSide side = prev_ssp ? opposite(prev_ssp->swing_side) : SwingSide::Right;
    const double t_ssp = prev_ssp ? prev_ssp->nominal_duration : 0.6;
    const double t_dsp = last.type == PhaseType::DSP ? last.nominal_duration : 0.3;
    const PhaseSpec ssp = make_ssp(last.landing_foot, last.support_foot, last.support_foot, side, t_ssp);
    phases_.push_back(ssp);
    phases_.push_back(make_dsp(ssp, t_dsp));
  }
}

void GaitSchedule::advance() {
  ensure_remaining(2);
  ++current_;
}

void GaitSchedule::commit_landing(const Vec2& landing) {
  PhaseSpec& cur = current();
  if (cur.type != PhaseType::SSP) throw std::logic_error("commit_landing: active phase is not SSP");
  const Vec2 delta = landing - cur.landing_foot;
  cur.landing_foot = landing;
  for (std::size_t i = current_ + 1; i < phases_.size(); ++i) {
    PhaseSpec& p = phases_[i];
    if (i == current_ + 1) {
      p.landing_foot += delta;
      p.swing_start += delta;
      continue;
    }
    p.support_foot += delta;
    p.landing_foot += delta;
    // The SSP right after the DSP lifts the current support foot, which stays put.
    if (i > current_ + 2) p.swing_start += delta;
  }
  rebuild_zmp_from(current_);
}

void GaitSchedule::rebuild_zmp_from(std::size_t index) {
  for (std::size_t i = index; i < phases_.size(); ++i) {
    PhaseSpec& p = phases_[i];
    p.zmp_start = p.support_foot;
    p.zmp_end = p.type == PhaseType::SSP ? p.support_foot : p.landing_foot;
  }
}

GaitSchedule build_schedule(const Stance& stance, const std::vector<Footstep>& footsteps, double t_ssp,
                            double t_dsp) {
  if (footsteps.empty()) throw std::invalid_argument("build_schedule: empty footstep list");
  if (!(t_ssp > 0.0) || !(t_dsp > 0.0)) throw std::invalid_argument("build_schedule: durations must be positive");
  Vec2 left = stance.left;
  Vec2 right = stance.right;
  std::vector<PhaseSpec> phases;
  for (const Footstep& f : footsteps) {
    if (f.side == SwingSide::None) throw std::invalid_argument("build_schedule: footstep without side");
    Vec2& swing = f.side == SwingSide::Left ? left : right;
    const Vec2& support = f.side == SwingSide::Left ? right : left;
    const PhaseSpec ssp = make_ssp(support, swing, f.position, f.side, t_ssp);
    phases.push_back(ssp);
    phases.push_back(make_dsp(ssp, t_dsp));
    swing = f.position;
  }
  return GaitSchedule(std::move(phases));
}

Vec2 reference_zmp_at(const GaitSchedule& schedule, double time_in_phase, double ahead) {
  const auto& phases = schedule.phases();
  double s = time_in_phase + ahead;
  for (std::size_t i = schedule.current_index(); i < phases.size(); ++i) {
    const PhaseSpec& p = phases[i];
    if (s <= p.duration) {
      const double r = std::clamp(s / p.duration, 0.0, 1.0);
      return p.zmp_start + r * (p.zmp_end - p.zmp_start);
    }
    s -= p.duration;
  }
  return phases.back().zmp_end;
}

Vec2 ReferenceTrajectory::dcm_at(double ahead) const {
  if (dcm.empty()) throw std::logic_error("ReferenceTrajectory: empty");
  const double u = ahead / sample_period;
  if (u <= 0.0) return dcm.front();
  const auto k = static_cast<std::size_t>(std::floor(u));
  if (k + 1 >= dcm.size()) return dcm.back();
  const double r = u - static_cast<double>(k);
  return (1.0 - r) * dcm[k] + r * dcm[k + 1];
}

Vec2 ReferenceTrajectory::implied_zmp(std::size_t k, const LipmParams& params) const {
  return com.at(k) - params.height_ratio() * com_acc.at(k);
}

PreviewGenerator::PreviewGenerator(const LipmParams& params, double sample_period, int horizon,
                                   PreviewWeights weights)
    : params_(params), dt_(sample_period), horizon_(horizon), weights_(weights) {
  if (!(sample_period > 0.0) || horizon < 1) throw std::invalid_argument("PreviewGenerator: bad discretization");
  if (!(weights.jerk_weight > 0.0) || !(weights.zmp_weight > 0.0)) {
    throw std::invalid_argument("PreviewGenerator: weights must be positive");
  }
  const int n = horizon;
  const double T = dt_;
  const double h = params_.height_ratio();
  Eigen::Matrix3d a;
  a << 1, T, T * T / 2, 0, 1, T, 0, 0, 1;
  const Eigen::Vector3d b(T * T * T / 6, T * T / 2, T);
  const Eigen::RowVector3d c(1.0, 0.0, -h);

  px_.resize(n, 3);
  Eigen::Matrix3d ak = Eigen::Matrix3d::Identity();
  // Impulse response of z to a unit jerk applied k steps earlier.
  Eigen::VectorXd response(n);
  for (int k = 0; k < n; ++k) {
    response(k) = c * ak * b;
    ak = a * ak;
    px_.row(k) = c * ak;
  }
  Eigen::MatrixXd pu = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) pu(i, j) = response(i - j);
  }
  Eigen::MatrixXd normal = pu.transpose() * pu;
  normal.diagonal().array() += weights_.jerk_weight / weights_.zmp_weight;
  Eigen::LLT<Eigen::MatrixXd> llt(normal);
  if (llt.info() != Eigen::Success) throw std::runtime_error("PreviewGenerator: normal equations not positive definite");
  gain_ = llt.solve(pu.transpose());
}

Eigen::VectorXd PreviewGenerator::solve_axis(const Eigen::Vector3d& x0, const Eigen::VectorXd& zmp_ref) const {
  if (zmp_ref.size() != horizon_) throw std::invalid_argument("PreviewGenerator: reference length");
  return -gain_ * (px_ * x0 - zmp_ref);
}

ComState PreviewGenerator::step(const ComState& s, const Vec2& jerk) const {
  const double T = dt_;
  ComState n;
  n.pos = s.pos + T * s.vel + 0.5 * T * T * s.acc + T * T * T / 6.0 * jerk;
  n.vel = s.vel + T * s.acc + 0.5 * T * T * jerk;
  n.acc = s.acc + T * jerk;
  return n;
}

ReferenceTrajectory PreviewGenerator::generate(const GaitSchedule& schedule, double time_in_phase,
                                               const ComState& initial) const {
  const int n = horizon_;
  ReferenceTrajectory tr;
  tr.sample_period = dt_;
  tr.zmp.reserve(n + 1);
  for (int k = 0; k <= n; ++k) tr.zmp.push_back(reference_zmp_at(schedule, time_in_phase, k * dt_));
  Eigen::VectorXd rx(n), ry(n);
  for (int k = 0; k < n; ++k) {
    rx(k) = tr.zmp[k + 1].x();
    ry(k) = tr.zmp[k + 1].y();
  }
  const Eigen::VectorXd ux = solve_axis({initial.pos.x(), initial.vel.x(), initial.acc.x()}, rx);
  const Eigen::VectorXd uy = solve_axis({initial.pos.y(), initial.vel.y(), initial.acc.y()}, ry);
  const double b = params_.time_constant();
  ComState s = initial;
  for (int k = 0; k <= n; ++k) {
    tr.com.push_back(s.pos);
    tr.com_vel.push_back(s.vel);
    tr.com_acc.push_back(s.acc);
    tr.dcm.push_back(s.pos + b * s.vel);
    if (k < n) s = step(s, Vec2(ux(k), uy(k)));
  }
  tr.dcm_offsets = reference_dcm_offset(schedule, time_in_phase, tr);
  return tr;
}

ReferenceTrajectory preview_com(const GaitSchedule& schedule, const RobotState& initial, int horizon,
                                PreviewWeights weights, const LipmParams& params, double sample_period) {
  const PreviewGenerator gen(params, sample_period, horizon, weights);
  ComState s;
  s.pos = initial.com;
  s.vel = initial.com_vel;
  return gen.generate(schedule, initial.time_in_phase, s);
}

std::vector<Vec2> reference_dcm_offset(const GaitSchedule& schedule, double time_in_phase,
                                       const ReferenceTrajectory& traj) {
  std::vector<Vec2> out;
  const double horizon = traj.sample_period * static_cast<double>(traj.size() - 1);
  double end = -time_in_phase;
  for (std::size_t i = schedule.current_index(); i < schedule.phases().size(); ++i) {
    const PhaseSpec& p = schedule.phases()[i];
    end += p.duration;
    if (end > horizon + 1e-12) break;
    out.push_back(traj.dcm_at(end) - p.landing_foot);
  }
  return out;
}

void ReferenceGenerator::preroll(const GaitSchedule& schedule, double hold, double shift) {
  const PhaseSpec& first = schedule.current();
  const Vec2 mid = first.type == PhaseType::SSP ? 0.5 * (first.support_foot + first.swing_start) : first.zmp_start;
  std::vector<PhaseSpec> phases;
  PhaseSpec p;
  p.type = PhaseType::DSP;
  p.support_foot = p.landing_foot = p.swing_start = mid;
  p.zmp_start = p.zmp_end = mid;
  p.nominal_duration = p.duration = hold;
  if (hold > 0.0) phases.push_back(p);
  p.zmp_end = first.zmp_start;
  p.nominal_duration = p.duration = shift;
  if (shift > 0.0) phases.push_back(p);
  const std::size_t lead = phases.size();
  for (std::size_t i = schedule.current_index(); i < schedule.phases().size(); ++i) phases.push_back(schedule.phases()[i]);
  GaitSchedule tmp(std::move(phases));

  state_ = ComState{};
  state_.pos = mid;
  const double dt = preview_.sample_period();
  for (std::size_t i = 0; i < lead; ++i) {
    const long ticks = std::lround(tmp.current().duration / dt);
    for (long k = 0; k < ticks; ++k) {
      plan(tmp, static_cast<double>(k) * dt);
      advance(1);
    }
    tmp.advance();
  }
}

const ReferenceTrajectory& ReferenceGenerator::plan(const GaitSchedule& schedule, double time_in_phase) {
  traj_ = preview_.generate(schedule, time_in_phase, state_);
  return traj_;
}

void ReferenceGenerator::advance(int samples) {
  if (samples < 0 || samples >= static_cast<int>(traj_.size())) throw std::logic_error("ReferenceGenerator: advance beyond plan");
  const auto k = static_cast<std::size_t>(samples);
  state_ = ComState{traj_.com[k], traj_.com_vel[k], traj_.com_acc[k]};
}

}  // namespace phasewalk
