#include "phasewalk/nmpc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace phasewalk {

namespace {

constexpr int kZ0 = 0;
constexpr int kZT = 2;
constexpr int kF = 4;
constexpr int kB = 6;
constexpr int kDT = 8;

// Terms of the DCM error constraint shared by the residual and its Jacobian.
struct Terms {
  double b, t, T, Tn, E, En;
  Vec2 dc, dr;  // control and reference ZMP increments
  Vec2 zbc;     // Z_beta of the control ZMP over Tn
};

Terms terms(const PhaseContext& ctx, const DecisionBlock& v, const LipmParams& params) {
  Terms k;
  k.b = params.time_constant();
  k.t = ctx.time;
  k.T = ctx.duration;
  k.Tn = ctx.duration + v.duration_delta;
  if (!(k.Tn > k.t)) throw std::domain_error("nmpc residual: optimized duration does not exceed elapsed time");
  if (!(k.T > k.t)) throw std::domain_error("nmpc residual: elapsed time beyond scheduled duration");
  k.E = std::exp((k.T - k.t) / k.b);
  k.En = std::exp((k.Tn - k.t) / k.b);
  k.dc = v.zmp_end_ctrl - v.zmp_start_ctrl;
  k.dr = ctx.zmp_end - ctx.zmp_start;
  k.zbc = v.zmp_start_ctrl + (k.t + k.b) / k.Tn * k.dc;
  return k;
}

int num_vars(const NmpcConfig& cfg) { return DecisionBlock::kSize * cfg.n_phases; }

std::vector<DecisionBlock> unpack(const Eigen::VectorXd& v) {
  std::vector<DecisionBlock> out;
  for (int i = 0; i < v.size() / DecisionBlock::kSize; ++i) {
    out.push_back(DecisionBlock::from_vector(v.segment(DecisionBlock::kSize * i, DecisionBlock::kSize)));
  }
  return out;
}

Eigen::VectorXd pack(const std::vector<DecisionBlock>& blocks) {
  Eigen::VectorXd v(DecisionBlock::kSize * static_cast<int>(blocks.size()));
  for (std::size_t i = 0; i < blocks.size(); ++i) v.segment<DecisionBlock::kSize>(DecisionBlock::kSize * static_cast<int>(i)) = blocks[i].to_vector();
  return v;
}

// Variable boxes; b_err is free.
void variable_bounds(const PhasePreviewContext& ctx, const NmpcConfig& cfg, Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
  const int n = DecisionBlock::kSize * static_cast<int>(ctx.phases.size());
  lo = Eigen::VectorXd::Constant(n, -1e20);
  hi = Eigen::VectorXd::Constant(n, 1e20);
  for (std::size_t i = 0; i < ctx.phases.size(); ++i) {
    const int o = DecisionBlock::kSize * static_cast<int>(i);
    const PhaseContext& p = ctx.phases[i];
    lo.segment<2>(o + kZ0) = cfg.zmp_ctrl_lower;
    hi.segment<2>(o + kZ0) = cfg.zmp_ctrl_upper;
    lo.segment<2>(o + kZT) = cfg.zmp_ctrl_lower;
    hi.segment<2>(o + kZT) = cfg.zmp_ctrl_upper;
    lo.segment<2>(o + kF) = p.step_lower;
    hi.segment<2>(o + kF) = p.step_upper;
    lo(o + kDT) = p.delta_lower;
    hi(o + kDT) = p.delta_upper;
  }
  if (ctx.zmp_ctrl_start && !ctx.phases.empty()) {
    const Vec2 z = ctx.zmp_ctrl_start->cwiseMax(cfg.zmp_ctrl_lower).cwiseMin(cfg.zmp_ctrl_upper);
    lo.segment<2>(kZ0) = z;
    hi.segment<2>(kZ0) = z;
  }
}

Eigen::VectorXd continuity(const std::vector<DecisionBlock>& v) {
  Eigen::VectorXd c(2 * std::max<int>(0, static_cast<int>(v.size()) - 1));
  for (std::size_t i = 0; i + 1 < v.size(); ++i) c.segment<2>(2 * static_cast<int>(i)) = v[i].zmp_end_ctrl - v[i + 1].zmp_start_ctrl;
  return c;
}

}  // namespace

DecisionBlock::Vector DecisionBlock::to_vector() const {
  Vector v;
  v << zmp_start_ctrl, zmp_end_ctrl, step_ctrl, dcm_offset_err, duration_delta;
  return v;
}

DecisionBlock DecisionBlock::from_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != kSize) throw std::invalid_argument("DecisionBlock: expected 9 entries");
  DecisionBlock b;
  b.zmp_start_ctrl = v.segment<2>(kZ0);
  b.zmp_end_ctrl = v.segment<2>(kZT);
  b.step_ctrl = v.segment<2>(kF);
  b.dcm_offset_err = v.segment<2>(kB);
  b.duration_delta = v(kDT);
  return b;
}

void NmpcConfig::validate() const {
  auto fail = [](const char* what) { throw std::invalid_argument(std::string("NmpcConfig: ") + what); };
  if (n_phases < 1) fail("n_phases must be at least 1");
  if (!(weights.zmp > 0) || !(weights.step > 0) || !(weights.dcm_offset > 0) || !(weights.duration > 0)) {
    fail("weights must be positive");
  }
  if ((zmp_ctrl_lower.array() > zmp_ctrl_upper.array()).any()) fail("zmp_ctrl bounds out of order");
  if ((step_ctrl_lower.array() > step_ctrl_upper.array()).any()) fail("step_ctrl bounds out of order");
  if ((zmp_ctrl_lower.array() > 0).any() || (zmp_ctrl_upper.array() < 0).any()) fail("zmp_ctrl box must contain 0");
  if ((step_ctrl_lower.array() > 0).any() || (step_ctrl_upper.array() < 0).any()) fail("step_ctrl box must contain 0");
  if (ssp_delta_lower > 0 || ssp_delta_upper < 0) fail("ssp duration range must contain 0");
  if (dsp_delta_lower > 0 || dsp_delta_upper < 0) fail("dsp duration range must contain 0");
  if (!(dsp_min_duration > 0)) fail("dsp_min_duration must be positive");
  if (lateral_clearance < 0) fail("lateral_clearance must be non-negative");
  if (!(min_remaining > 0)) fail("min_remaining must be positive");
  if (max_sqp_iters < 1) fail("max_sqp_iters must be at least 1");
  if (!(sqp_tolerance > 0)) fail("sqp_tolerance must be positive");
}

std::string_view to_string(AblationMethod m) {
  switch (m) {
    case AblationMethod::M1: return "M1";
    case AblationMethod::M2: return "M2";
    case AblationMethod::M3: return "M3";
    case AblationMethod::M4: return "M4";
  }
  return "M1";
}

std::optional<AblationMethod> parse_ablation_method(std::string_view s) {
  if (s == "M1" || s == "m1") return AblationMethod::M1;
  if (s == "M2" || s == "m2") return AblationMethod::M2;
  if (s == "M3" || s == "m3") return AblationMethod::M3;
  if (s == "M4" || s == "m4") return AblationMethod::M4;
  return std::nullopt;
}

NmpcConfig ablation_config(AblationMethod method, NmpcConfig base) {
  switch (method) {
    case AblationMethod::M4:
      base.step_ctrl_lower.setZero();
      base.step_ctrl_upper.setZero();
      [[fallthrough]];
    case AblationMethod::M3:
      base.ssp_delta_lower = base.ssp_delta_upper = 0.0;
      [[fallthrough]];
    case AblationMethod::M2:
      base.dsp_delta_lower = base.dsp_delta_upper = 0.0;
      [[fallthrough]];
    case AblationMethod::M1:
      break;
  }
  return base;
}

PhasePreviewContext build_context(const RobotState& state, const GaitSchedule& schedule,
                                  const ReferenceTrajectory& refs, const NmpcConfig& cfg, const LipmParams& params) {
  if (schedule.remaining() < static_cast<std::size_t>(cfg.n_phases)) {
    throw std::invalid_argument("build_context: schedule does not expose enough phases");
  }
  PhasePreviewContext ctx;
  ctx.dcm_err = dcm_of(state, params) - refs.dcm.at(0);
  double start = 0.0;  // start of phase i relative to now
  for (int i = 0; i < cfg.n_phases; ++i) {
    const PhaseSpec& p = schedule.ahead(static_cast<std::size_t>(i));
    PhaseContext c;
    c.type = p.type;
    c.duration = p.duration;
    c.nominal_duration = p.nominal_duration;
    c.zmp_start = p.zmp_start;
    c.zmp_end = p.zmp_end;
    c.time = i == 0 ? state.time_in_phase : 0.0;
    c.dcm_ref = i == 0 ? refs.dcm.at(0) : refs.dcm_at(start);
    start += i == 0 ? p.duration - state.time_in_phase : p.duration;

    double t_lo = 0.0, t_hi = 0.0;
    if (p.type == PhaseType::SSP) {
      t_lo = p.nominal_duration + cfg.ssp_delta_lower;
      t_hi = p.nominal_duration + cfg.ssp_delta_upper;
    } else {
      t_lo = std::max(cfg.dsp_min_duration, p.nominal_duration + cfg.dsp_delta_lower);
      t_hi = p.nominal_duration + cfg.dsp_delta_upper;
      t_lo = std::min(t_lo, t_hi);
    }
    t_lo = std::max(t_lo, cfg.min_remaining);
    t_hi = std::max(t_hi, t_lo);
    c.delta_lower = t_lo - p.duration;
    c.delta_upper = t_hi - p.duration;
    if (i == 0) {
      // Keep at least min_remaining ahead, but never force a lengthening.
      c.delta_lower = std::max(c.delta_lower, std::min(c.time + cfg.min_remaining, p.duration) - p.duration);
    }
    c.delta_lower = std::min(c.delta_lower, c.delta_upper);

    if (p.type == PhaseType::SSP) {
      c.step_lower = cfg.step_ctrl_lower;
      c.step_upper = cfg.step_ctrl_upper;
      const double gap = p.landing_foot.y() - p.support_foot.y();
      if (gap >= 0.0) {
        // Landing on the left of the support foot.
        c.step_lower.y() = std::max(c.step_lower.y(), cfg.lateral_clearance - gap);
      } else {
        c.step_upper.y() = std::min(c.step_upper.y(), -cfg.lateral_clearance - gap);
      }
      if (c.step_lower.y() > c.step_upper.y()) c.step_lower.y() = c.step_upper.y();
    }
    ctx.phases.push_back(c);
  }
  return ctx;
}

Vec2 residual(const PhaseContext& ctx, const DecisionBlock& v, const Vec2& xi_err_in, const LipmParams& params) {
  const Terms k = terms(ctx, v, params);
  const Vec2& z0r = ctx.zmp_start;
  const Vec2& zTr = ctx.zmp_end;
  const Vec2 za_c = v.zmp_end_ctrl + k.b / k.Tn * k.dc;
  const Vec2 za_r_new = zTr + k.b / k.Tn * k.dr;
  const Vec2 za_r = zTr + k.b / k.T * k.dr;
  const Vec2 zb_r_new = z0r + (k.t + k.b) / k.Tn * k.dr;
  const Vec2 zb_r = z0r + (k.t + k.b) / k.T * k.dr;
  return v.step_ctrl + v.dcm_offset_err - za_c - za_r_new + za_r - k.En * (xi_err_in - k.zbc) -
         (k.En - k.E) * ctx.dcm_ref + k.En * zb_r_new - k.E * zb_r;
}

ResidualJacobian residual_jacobian(const PhaseContext& ctx, const DecisionBlock& v, const Vec2& xi_err_in,
                                   const LipmParams& params) {
  const Terms k = terms(ctx, v, params);
  const double s = (k.t + k.b) / k.Tn;
  const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
  ResidualJacobian j;
  j.block.setZero();
  j.block.block<2, 2>(0, kZ0) = (k.b / k.Tn + k.En * (1.0 - s)) * I;
  j.block.block<2, 2>(0, kZT) = (-(1.0 + k.b / k.Tn) + k.En * s) * I;
  j.block.block<2, 2>(0, kF) = I;
  j.block.block<2, 2>(0, kB) = I;
  const double tn2 = k.Tn * k.Tn;
  const Vec2 zb_r_new = ctx.zmp_start + s * k.dr;
  j.block.col(kDT) = k.b / tn2 * (k.dc + k.dr) - k.En / k.b * (xi_err_in - k.zbc) -
                     k.En * (k.t + k.b) / tn2 * (k.dc + k.dr) - k.En / k.b * ctx.dcm_ref + k.En / k.b * zb_r_new;
  j.coupling.setZero();
  j.coupling.block<2, 2>(0, 0) = -k.En * I;
  j.coupling.block<2, 2>(0, 2) = -k.En * I;
  return j;
}

double nmpc_cost(const PhasePreviewContext& ctx, const std::vector<DecisionBlock>& v, const NmpcConfig& cfg) {
  const NmpcWeights& w = cfg.weights;
  double c = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const DecisionBlock& b = v[i];
    const PhaseContext& p = ctx.phases[i];
    const double dt = b.duration_delta + p.duration - p.nominal_duration;
    c += w.zmp * (b.zmp_start_ctrl.squaredNorm() + b.zmp_end_ctrl.squaredNorm()) + w.step * b.step_ctrl.squaredNorm() +
         w.dcm_offset * b.dcm_offset_err.squaredNorm() + w.duration * dt * dt;
  }
  return c;
}

Eigen::VectorXd stacked_residual(const PhasePreviewContext& ctx, const std::vector<DecisionBlock>& v,
                                 const LipmParams& params) {
  Eigen::VectorXd f(2 * static_cast<int>(v.size()));
  Vec2 xi_in = ctx.dcm_err;
  for (std::size_t i = 0; i < v.size(); ++i) {
    f.segment<2>(2 * static_cast<int>(i)) = residual(ctx.phases[i], v[i], xi_in, params);
    xi_in = v[i].step_ctrl + v[i].dcm_offset_err;
  }
  return f;
}

QpProblem assemble_subproblem(const PhasePreviewContext& ctx, const std::vector<DecisionBlock>& v,
                              const NmpcConfig& cfg, const LipmParams& params) {
  const int nc = static_cast<int>(v.size());
  if (nc != static_cast<int>(ctx.phases.size())) throw std::invalid_argument("assemble_subproblem: block count");
  const int n = DecisionBlock::kSize * nc;
  const Eigen::VectorXd x = pack(v);
  const NmpcWeights& w = cfg.weights;

  QpProblem qp;
  Eigen::VectorXd diag(n);
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < nc; ++i) {
    const int o = DecisionBlock::kSize * i;
    diag.segment<4>(o).setConstant(w.zmp);
    diag.segment<2>(o + kF).setConstant(w.step);
    diag.segment<2>(o + kB).setConstant(w.dcm_offset);
    diag(o + kDT) = w.duration;
    const PhaseContext& p = ctx.phases[static_cast<std::size_t>(i)];
    lin(o + kDT) = 2.0 * w.duration * (p.duration - p.nominal_duration);
  }
  qp.hessian = (2.0 * diag).asDiagonal();
  qp.gradient = 2.0 * diag.cwiseProduct(x) + lin;

  const int n_cont = 2 * (nc - 1);
  qp.eq_matrix = Eigen::MatrixXd::Zero(2 * nc + n_cont, n);
  qp.eq_rhs.resize(2 * nc + n_cont);
  Vec2 xi_in = ctx.dcm_err;
  for (int i = 0; i < nc; ++i) {
    const auto& p = ctx.phases[static_cast<std::size_t>(i)];
    const auto& b = v[static_cast<std::size_t>(i)];
    const ResidualJacobian jac = residual_jacobian(p, b, xi_in, params);
    qp.eq_matrix.block<2, DecisionBlock::kSize>(2 * i, DecisionBlock::kSize * i) = jac.block;
    if (i > 0) qp.eq_matrix.block<2, 4>(2 * i, DecisionBlock::kSize * (i - 1) + kF) = jac.coupling;
    qp.eq_rhs.segment<2>(2 * i) = -residual(p, b, xi_in, params);
    xi_in = b.step_ctrl + b.dcm_offset_err;
  }
  const Eigen::VectorXd cont = continuity(v);
  for (int i = 0; i + 1 < nc; ++i) {
    for (int a = 0; a < 2; ++a) {
      const int r = 2 * nc + 2 * i + a;
      qp.eq_matrix(r, DecisionBlock::kSize * i + kZT + a) = 1.0;
      qp.eq_matrix(r, DecisionBlock::kSize * (i + 1) + kZ0 + a) = -1.0;
      qp.eq_rhs(r) = -cont(2 * i + a);
    }
  }

  Eigen::VectorXd lo, hi;
  variable_bounds(ctx, cfg, lo, hi);
  std::vector<int> rows;
  for (int j = 0; j < n; ++j) {
    if (std::abs(lo(j)) < kQpInfinity || std::abs(hi(j)) < kQpInfinity) rows.push_back(j);
  }
  const int m = static_cast<int>(rows.size());
  qp.ineq_matrix = Eigen::MatrixXd::Zero(m, n);
  qp.lower.resize(m);
  qp.upper.resize(m);
  for (int r = 0; r < m; ++r) {
    const int j = rows[static_cast<std::size_t>(r)];
    qp.ineq_matrix(r, j) = 1.0;
    qp.lower(r) = std::abs(lo(j)) < kQpInfinity ? lo(j) - x(j) : -1e20;
    qp.upper(r) = std::abs(hi(j)) < kQpInfinity ? hi(j) - x(j) : 1e20;
    // Bounds that coincide must stay an exact equality after the shift.
    if (lo(j) == hi(j)) qp.upper(r) = qp.lower(r);
  }
  return qp;
}

NmpcSolution shift_solution(const NmpcSolution& sol) {
  NmpcSolution out = sol;
  if (!out.blocks.empty()) {
    out.blocks.erase(out.blocks.begin());
    out.blocks.push_back(sol.blocks.back());
  }
  out.active.entries.clear();
  return out;
}

NmpcSolution NmpcSolver::solve(const PhasePreviewContext& ctx, const NmpcConfig& cfg, const NmpcSolution* warm) {
  cfg.validate();
  const int nc = static_cast<int>(ctx.phases.size());
  if (nc != cfg.n_phases) throw std::invalid_argument("NmpcSolver: context/config phase count mismatch");
  const int n = num_vars(cfg);

  Eigen::VectorXd lo, hi;
  variable_bounds(ctx, cfg, lo, hi);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  QpWarmStart qp_warm;
  if (warm != nullptr && static_cast<int>(warm->blocks.size()) == nc) {
    x = pack(warm->blocks);
    qp_warm.active = warm->active;
  }
  // Project the warm start onto the boxes and the ZMP continuity rows.
  x = x.cwiseMax(lo).cwiseMin(hi);
  for (int i = 0; i + 1 < nc; ++i) {
    x.segment<2>(DecisionBlock::kSize * (i + 1) + kZ0) = x.segment<2>(DecisionBlock::kSize * i + kZT);
  }

  NmpcSolution sol;
  double penalty = 0.0;
  auto merit = [&](const Eigen::VectorXd& xv, double mu) {
    const auto blocks = unpack(xv);
    return nmpc_cost(ctx, blocks, cfg) + mu * (stacked_residual(ctx, blocks, params_).lpNorm<1>() +
                                               continuity(blocks).lpNorm<1>());
  };

  for (int it = 1; it <= cfg.max_sqp_iters; ++it) {
    const auto blocks = unpack(x);
    const QpProblem qp = assemble_subproblem(ctx, blocks, cfg, params_);
    const QpSolution qs = qp_.solve(qp, qp_warm.active.entries.empty() ? nullptr : &qp_warm);
    sol.iterations = it;
    sol.qp_pivots += qs.pivots;
    sol.qp_status = qs.status;
    if (qs.status != QpStatus::Optimal) {
      sol.ok = false;
      break;
    }
    qp_warm.active = qs.active;
    sol.active = qs.active;
    const Eigen::VectorXd& dx = qs.x;
    sol.step_norm = dx.norm();
    if (sol.step_norm < cfg.sqp_tolerance) {
      x = (x + dx).cwiseMax(lo).cwiseMin(hi);
      break;
    }
    if (qs.eq_multipliers.size() > 0) penalty = std::max(penalty, 1.1 * qs.eq_multipliers.cwiseAbs().maxCoeff());
    const double phi0 = merit(x, penalty);
    const double infeas = stacked_residual(ctx, blocks, params_).lpNorm<1>() + continuity(blocks).lpNorm<1>();
    const double slope = qp.gradient.dot(dx) - penalty * infeas;
    double beta = 1.0;
    for (;;) {
      const Eigen::VectorXd trial = x + beta * dx;
      if (merit(trial, penalty) <= phi0 + 1e-4 * beta * slope || beta <= 1.0 / 64.0) break;
      beta *= 0.5;
    }
    // The clamp only removes rounding noise on fixed variables.
    x = (x + beta * dx).cwiseMax(lo).cwiseMin(hi);
  }
  sol.blocks = unpack(x);
  sol.converged = sol.ok && sol.step_norm < cfg.sqp_tolerance;
  const Eigen::VectorXd f = stacked_residual(ctx, sol.blocks, params_);
  const Eigen::VectorXd c = continuity(sol.blocks);
  sol.constraint_residual = std::max(f.size() ? f.cwiseAbs().maxCoeff() : 0.0, c.size() ? c.cwiseAbs().maxCoeff() : 0.0);
  return sol;
}

NmpcSolution NmpcSolver::solve(const RobotState& state, const GaitSchedule& schedule, const ReferenceTrajectory& refs,
                               const NmpcConfig& cfg, const NmpcSolution* warm) {
  return solve(build_context(state, schedule, refs, cfg, params_), cfg, warm);
}

}  // namespace phasewalk
