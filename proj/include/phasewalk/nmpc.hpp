#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string_view>
#include <vector>

#include "phasewalk/gait_plan.hpp"
#include "phasewalk/lipm.hpp"
#include "phasewalk/qp_solver.hpp"

namespace phasewalk {

/// Per-phase decision variables, serialized as [z0, zT, f, b_err, dT].
struct DecisionBlock {
  static constexpr int kSize = 9;
  using Vector = Eigen::Matrix<double, kSize, 1>;

  Vec2 zmp_start_ctrl = Vec2::Zero();
  Vec2 zmp_end_ctrl = Vec2::Zero();
  Vec2 step_ctrl = Vec2::Zero();
  Vec2 dcm_offset_err = Vec2::Zero();
  double duration_delta = 0.0;

  Vector to_vector() const;
  static DecisionBlock from_vector(const Eigen::Ref<const Eigen::VectorXd>& v);
};

struct NmpcWeights {
  double zmp = 1.0;
  double step = 0.01;
  double dcm_offset = 500.0;
  double duration = 100.0;
};

struct NmpcConfig {
  int n_phases = 3;
  NmpcWeights weights;
  /// Box on both ZMP control endpoints, per axis.
  Vec2 zmp_ctrl_lower{-0.07, -0.07};
  Vec2 zmp_ctrl_upper{0.10, 0.07};
  /// Reachable box for SSP step adjustment, per axis.
  Vec2 step_ctrl_lower{-0.30, -0.30};
  Vec2 step_ctrl_upper{0.30, 0.30};
  /// Minimum lateral distance between the adjusted landing and the support foot.
  double lateral_clearance = 0.16;
  /// Allowed scheduled duration, relative to the nominal one.
  double ssp_delta_lower = -0.3;
  double ssp_delta_upper = 0.2;
  double dsp_delta_lower = -0.2;
  double dsp_delta_upper = 0.2;
  double dsp_min_duration = 0.10;
  /// The active phase keeps at least this much time left when it can.
  double min_remaining = 0.02;
  int max_sqp_iters = 20;
  double sqp_tolerance = 1e-6;

  /// Throws std::invalid_argument when weights or bounds are malformed.
  void validate() const;
};

enum class AblationMethod { M1, M2, M3, M4 };

std::string_view to_string(AblationMethod m);
std::optional<AblationMethod> parse_ablation_method(std::string_view s);

/// M1 full; M2 fixed DSP duration; M3 fixed SSP and DSP durations; M4 also
/// without step adjustment.
NmpcConfig ablation_config(AblationMethod method, NmpcConfig base = {});

/// Everything the DCM error constraint needs for one previewed phase.
struct PhaseContext {
  PhaseType type = PhaseType::SSP;
  double duration = 0.0;          // T, the currently scheduled duration
  double nominal_duration = 0.0;  // planned duration the cost pulls back to
  Vec2 zmp_start = Vec2::Zero();  // reference ZMP endpoints over T
  Vec2 zmp_end = Vec2::Zero();
  Vec2 dcm_ref = Vec2::Zero();  // reference DCM at local time `time`
  double time = 0.0;            // elapsed time t (0 for previewed phases)

  double delta_lower = 0.0;
  double delta_upper = 0.0;
  Vec2 step_lower = Vec2::Zero();
  Vec2 step_upper = Vec2::Zero();
};

struct PhasePreviewContext {
  std::vector<PhaseContext> phases;
  Vec2 dcm_err = Vec2::Zero();  // measured minus reference DCM, phase 1
  /// Pins the first block's start ZMP control, used on the tick right after a
  /// phase transition so the desired ZMP stays continuous.
  std::optional<Vec2> zmp_ctrl_start;
};

/// Builds the context for the active phase and the following n_phases - 1.
/// The schedule must already expose enough phases.
PhasePreviewContext build_context(const RobotState& state, const GaitSchedule& schedule,
                                  const ReferenceTrajectory& refs, const NmpcConfig& cfg, const LipmParams& params);

/// Nonlinear DCM error constraint F of one phase.
/// Throws std::domain_error when T + dT <= t.
Vec2 residual(const PhaseContext& ctx, const DecisionBlock& block, const Vec2& xi_err_in, const LipmParams& params);

struct ResidualJacobian {
  Eigen::Matrix<double, 2, DecisionBlock::kSize> block;
  /// With respect to the previous block's [f, b_err].
  Eigen::Matrix<double, 2, 4> coupling;
};

ResidualJacobian residual_jacobian(const PhaseContext& ctx, const DecisionBlock& block, const Vec2& xi_err_in,
                                   const LipmParams& params);

/// Cost sum_i v_i' W v_i with the duration term measured from the nominal
/// duration.
double nmpc_cost(const PhasePreviewContext& ctx, const std::vector<DecisionBlock>& v, const NmpcConfig& cfg);

/// Stacked F_i for all phases, with the error chained through f + b_err.
Eigen::VectorXd stacked_residual(const PhasePreviewContext& ctx, const std::vector<DecisionBlock>& v,
                                 const LipmParams& params);

/// Linearized subproblem in the step dv around v.
QpProblem assemble_subproblem(const PhasePreviewContext& ctx, const std::vector<DecisionBlock>& v,
                              const NmpcConfig& cfg, const LipmParams& params);

struct NmpcSolution {
  std::vector<DecisionBlock> blocks;
  int iterations = 0;
  double step_norm = 0.0;
  bool converged = false;
  double constraint_residual = 0.0;
  /// False when a subproblem failed; blocks then hold the last iterate.
  bool ok = true;
  QpStatus qp_status = QpStatus::Optimal;
  int qp_pivots = 0;
  QpActiveSet active;
};

/// Drops the first block and duplicates the last, for a phase transition.
NmpcSolution shift_solution(const NmpcSolution& sol);

/// SQP with an L1 merit line search. One instance per thread.
class NmpcSolver {
 public:
  explicit NmpcSolver(LipmParams params = {}) : params_(params) {}

  NmpcSolution solve(const PhasePreviewContext& ctx, const NmpcConfig& cfg,
                     const NmpcSolution* warm = nullptr);

  NmpcSolution solve(const RobotState& state, const GaitSchedule& schedule, const ReferenceTrajectory& refs,
                     const NmpcConfig& cfg, const NmpcSolution* warm = nullptr);

  const LipmParams& params() const { return params_; }

 private:
  LipmParams params_;
  QpSolver qp_;
};

}  // namespace phasewalk
