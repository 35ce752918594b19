#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "phasewalk/lipm.hpp"

namespace phasewalk {

enum class PhaseType { SSP, DSP };
enum class SwingSide { Left, Right, None };

const char* to_string(PhaseType type);
const char* to_string(SwingSide side);

/// One support phase. `duration` is the currently scheduled duration and
/// starts out equal to `nominal_duration`; the controller may rewrite it
/// for the active phase.
struct PhaseSpec {
  PhaseType type = PhaseType::SSP;
  double nominal_duration = 0.0;
  double duration = 0.0;
  Vec2 support_foot = Vec2::Zero();  // f0
  Vec2 landing_foot = Vec2::Zero();  // fT
  Vec2 swing_start = Vec2::Zero();   // lift-off position of the swing foot (SSP)
  Vec2 zmp_start = Vec2::Zero();
  Vec2 zmp_end = Vec2::Zero();
  SwingSide swing_side = SwingSide::None;

  /// Reference ZMP over the scheduled duration.
  ZmpSegment ref_zmp() const { return {zmp_start, zmp_end, duration}; }
};

struct Stance {
  Vec2 left{0.0, 0.1};
  Vec2 right{0.0, -0.1};
};

struct Footstep {
  Vec2 position = Vec2::Zero();
  SwingSide side = SwingSide::Right;
};

struct FootstepCommand {
  double step_length = 0.0;
  double step_width = 0.2;
  int n_steps = 1;
  Stance start_stance;
  SwingSide first_swing = SwingSide::Right;
};

/// Landing positions alternate sides and advance by step_length in x,
/// centred on the start stance. Throws std::invalid_argument on bad input.
std::vector<Footstep> plan_footsteps(const FootstepCommand& command);

class GaitSchedule {
 public:
  GaitSchedule() = default;
  explicit GaitSchedule(std::vector<PhaseSpec> phases);

  const std::vector<PhaseSpec>& phases() const { return phases_; }
  std::size_t current_index() const { return current_; }
  const PhaseSpec& current() const { return phases_.at(current_); }
  PhaseSpec& current() { return phases_.at(current_); }
  /// Phase `offset` positions after the active one.
  const PhaseSpec& ahead(std::size_t offset) const { return phases_.at(current_ + offset); }
  PhaseSpec& ahead(std::size_t offset) { return phases_.at(current_ + offset); }
  std::size_t remaining() const { return phases_.size() - current_; }

  /// Appends in-place step cycles until at least `count` phases remain.
  void ensure_remaining(std::size_t count);

  /// Moves to the next phase, padding first if this would run off the end.
  void advance();

  /// Replaces the active SSP's landing by `landing` and shifts every later
  /// footstep by the same offset (relative replanning).
  void commit_landing(const Vec2& landing);

 private:
  void rebuild_zmp_from(std::size_t index);

  std::vector<PhaseSpec> phases_;
  std::size_t current_ = 0;
};

/// Alternating SSP/DSP schedule: SSP keeps the ZMP on the support foot, DSP
/// moves it linearly to the landed foot. Throws on empty input or
/// non-positive durations.
GaitSchedule build_schedule(const Stance& stance, const std::vector<Footstep>& footsteps, double t_ssp = 0.6,
                            double t_dsp = 0.3);

/// Reference ZMP `ahead` seconds after the active phase's local time
/// `time_in_phase`, held at the final value past the schedule end.
Vec2 reference_zmp_at(const GaitSchedule& schedule, double time_in_phase, double ahead);

struct PreviewWeights {
  double jerk_weight = 1e-6;
  double zmp_weight = 1.0;
};

/// CoM position, velocity and acceleration.
struct ComState {
  Vec2 pos = Vec2::Zero();
  Vec2 vel = Vec2::Zero();
  Vec2 acc = Vec2::Zero();
};

/// Samples k = 0..N at k * sample_period from now.
struct ReferenceTrajectory {
  double sample_period = 0.01;
  std::vector<Vec2> zmp;
  std::vector<Vec2> com;
  std::vector<Vec2> com_vel;
  std::vector<Vec2> com_acc;
  std::vector<Vec2> dcm;
  /// b_T^ref per phase from the active one on, for phases whose end lies
  /// inside the horizon.
  std::vector<Vec2> dcm_offsets;

  std::size_t size() const { return com.size(); }
  /// Linear interpolation of the DCM series, clamped to the horizon.
  Vec2 dcm_at(double ahead) const;
  /// z = c - b^2 c'' at sample k.
  Vec2 implied_zmp(std::size_t k, const LipmParams& params) const;
};

/// Condensed jerk-minimizing preview over a discrete triple integrator.
class PreviewGenerator {
 public:
  PreviewGenerator(const LipmParams& params, double sample_period = 0.01, int horizon = 160,
                   PreviewWeights weights = {});

  double sample_period() const { return dt_; }
  int horizon() const { return horizon_; }

  /// Optimal jerk sequence for one axis given the reference at steps 1..N.
  Eigen::VectorXd solve_axis(const Eigen::Vector3d& x0, const Eigen::VectorXd& zmp_ref) const;

  /// Full trajectory from `initial` tracking the schedule's reference ZMP.
  ReferenceTrajectory generate(const GaitSchedule& schedule, double time_in_phase, const ComState& initial) const;

  /// State after one sample under constant jerk.
  ComState step(const ComState& s, const Vec2& jerk) const;

  const LipmParams& params() const { return params_; }

 private:
  LipmParams params_;
  double dt_;
  int horizon_;
  PreviewWeights weights_;
  Eigen::MatrixXd px_;    // N x 3
  Eigen::MatrixXd gain_;  // (Pu'Pu + r I)^-1 Pu', N x N
};

/// Generates a trajectory from a RobotState (zero initial acceleration),
/// using `initial.time_in_phase` as the position in the active phase.
ReferenceTrajectory preview_com(const GaitSchedule& schedule, const RobotState& initial, int horizon,
                                PreviewWeights weights, const LipmParams& params, double sample_period = 0.01);

/// b_T^ref = xi^ref(phase end) - f_T for every phase ending within the
/// trajectory horizon, starting with the active phase.
std::vector<Vec2> reference_dcm_offset(const GaitSchedule& schedule, double time_in_phase,
                                       const ReferenceTrajectory& traj);

/// Receding-horizon pattern generator with its own CoM state. It is advanced
/// by the first planned jerk sample on every control tick.
class ReferenceGenerator {
 public:
  explicit ReferenceGenerator(const PreviewGenerator& preview) : preview_(preview) {}

  /// Starts from rest at the stance midpoint, holds for `hold` seconds and
  /// shifts the reference ZMP onto the first support foot over `shift`
  /// seconds, so that the state at the schedule start is on the walking orbit.
  void preroll(const GaitSchedule& schedule, double hold, double shift);

  void reset(const ComState& state) { state_ = state; }
  const ComState& state() const { return state_; }

  /// Plans from the current state and stores the result.
  const ReferenceTrajectory& plan(const GaitSchedule& schedule, double time_in_phase);
  const ReferenceTrajectory& trajectory() const { return traj_; }

  /// Applies the first `samples` jerks of the last plan.
  void advance(int samples = 1);

  Vec2 dcm() const { return state_.pos + preview_.params().time_constant() * state_.vel; }

 private:
  PreviewGenerator preview_;
  ComState state_;
  ReferenceTrajectory traj_;
};

}  // namespace phasewalk
