#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <vector>

#include "phasewalk/gait_plan.hpp"
#include "phasewalk/lipm.hpp"
#include "phasewalk/nmpc.hpp"

namespace phasewalk {

/// Constant horizontal force on the CoM over [start_time, start_time + duration).
struct Disturbance {
  Vec2 force = Vec2::Zero();
  double start_time = 0.0;
  double duration = 0.2;

  double impulse() const { return force.norm() * duration; }
  bool active_at(double t) const { return t >= start_time && t < start_time + duration; }
};

/// Quintic per axis, with zero terminal velocity and acceleration.
class SwingTrajectory {
 public:
  struct Sample {
    Vec2 pos = Vec2::Zero();
    Vec2 vel = Vec2::Zero();
    Vec2 acc = Vec2::Zero();
  };

  SwingTrajectory() = default;
  /// Throws std::invalid_argument when t1 <= t0.
  static SwingTrajectory plan(const Sample& start, const Vec2& target, double t0, double t1);
  /// Stationary at `pos`.
  static SwingTrajectory hold(const Vec2& pos, double t);

  /// Clamped to [t0, t1]: before t0 the start state, after t1 the target at rest.
  Sample at(double t) const;
  double start_time() const { return t0_; }
  double end_time() const { return t1_; }
  Vec2 target() const { return at(t1_).pos; }

 private:
  Eigen::Matrix<double, 6, 2> coeffs_ = Eigen::Matrix<double, 6, 2>::Zero();
  double t0_ = 0.0;
  double t1_ = 0.0;
};

/// Logging-only lift profile 16 s^2 (1 - s)^2 h, peaking at h mid-swing.
double swing_height(double s, double height);

struct FallThresholds {
  double dcm_error = 0.5;  // m
  double sustain = 0.2;    // s above dcm_error before declaring a fall
  double com_radius = 1.0; // m from the support center
};

struct GaitConfig {
  FootstepCommand command;
  double ssp_duration = 0.6;
  double dsp_duration = 0.3;
  double preroll_hold = 1.0;
  double preroll_shift = 0.3;
  int preview_horizon = 160;
  PreviewWeights preview_weights;
};

struct SimConfig {
  double physics_dt = 0.0005;
  double control_period = 0.01;
  double duration = 10.0;
  bool stop_on_fall = true;
  double swing_height = 0.05;
  FallThresholds fall;
  LipmParams model;
  GaitConfig gait;
  NmpcConfig nmpc;
  std::vector<Disturbance> disturbances;

  /// Physics substeps per control tick. Throws when not an integer ratio.
  int substeps() const;
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

struct SimLogRow {
  double time = 0.0;
  Vec2 com = Vec2::Zero();
  Vec2 com_vel = Vec2::Zero();
  Vec2 dcm = Vec2::Zero();
  Vec2 dcm_ref = Vec2::Zero();
  Vec2 dcm_err = Vec2::Zero();
  Vec2 zmp_ref = Vec2::Zero();  // piecewise-linear footstep ZMP
  Vec2 zmp_ff = Vec2::Zero();   // realized by the reference CoM
  Vec2 zmp_ctrl = Vec2::Zero();
  Vec2 zmp_des = Vec2::Zero();
  std::size_t phase_index = 0;
  PhaseType phase_type = PhaseType::SSP;
  double time_in_phase = 0.0;
  double duration = 0.0;  // T_new of the active phase
  Vec2 swing_target = Vec2::Zero();
  bool disturbance_active = false;
  int sqp_iterations = 0;
  bool nmpc_ok = true;

  bool operator==(const SimLogRow&) const = default;
};

enum class SimEventKind { Transition, Footstep, Fall, NmpcFailure };
const char* to_string(SimEventKind kind);

struct SimEvent {
  double time = 0.0;
  SimEventKind kind = SimEventKind::Transition;
  std::size_t phase_index = 0;
  /// Transition: desired ZMP of the finished phase at its end.
  /// Footstep: committed landing position.
  Vec2 value = Vec2::Zero();

  bool operator==(const SimEvent&) const = default;
};

struct SimLog {
  std::vector<SimLogRow> rows;
  std::vector<SimEvent> events;
  bool fell = false;
  double fall_time = -1.0;

  bool operator==(const SimLog&) const = default;
};

/// One semi-implicit Euler step of c'' = (c - z) / b^2 + F / m.
RobotState physics_step(const RobotState& state, const Vec2& zmp_des, const Vec2& ext_force, const LipmParams& params,
                        double dt);

/// Support center: the stance foot in SSP, the midpoint of both feet in DSP.
Vec2 support_center(const PhaseSpec& phase);

/// Stateful fall predicate evaluated once per control tick.
class FallDetector {
 public:
  explicit FallDetector(FallThresholds thresholds = {}) : thr_(thresholds) {}
  bool update(const Vec2& dcm_err, const Vec2& com, const Vec2& support, double dt);
  bool fallen() const { return fallen_; }

 private:
  FallThresholds thr_;
  double above_ = 0.0;
  bool fallen_ = false;
};

/// Closed-loop world: reference generator, NMPC, phase machine and plant.
/// Copying a simulator snapshots the whole world.
class Simulator {
 public:
  using SolveHook = std::function<void(const PhasePreviewContext&, const NmpcSolution&)>;

  explicit Simulator(SimConfig cfg);

  /// One control tick with its physics substeps. Returns false once finished.
  bool step();
  /// Steps until `time` is reached or the run finishes.
  void run_until(double time);
  const SimLog& run();

  bool finished() const;
  double time() const { return static_cast<double>(tick_) * cfg_.control_period; }
  const RobotState& state() const { return plant_; }
  const GaitSchedule& schedule() const { return schedule_; }
  const SimLog& log() const { return log_; }
  SimConfig& config() { return cfg_; }
  const SimConfig& config() const { return cfg_; }
  Vec2 dcm_error() const;
  Vec2 swing_position() const;

  /// Called after every NMPC solve, for instrumentation.
  void set_solve_hook(SolveHook hook) { hook_ = std::move(hook); }
  /// Wall-clock seconds spent in NMPC solves so far.
  double solve_seconds() const { return solve_seconds_; }

 private:
  void transition();
  void shift_reference_dcm(const Vec2& shift);
  Vec2 desired_zmp(const PhaseSpec& phase, const Vec2& feedforward, const Vec2& ctrl) const;
  Vec2 external_force(long substep) const;

  SimConfig cfg_;
  GaitSchedule schedule_;
  ReferenceGenerator reference_;
  NmpcSolver solver_;
  FallDetector fall_;
  RobotState plant_;
  SimLog log_;
  SolveHook hook_;

  long tick_ = 0;
  long phase_tick_ = 0;
  DecisionBlock applied_;
  std::optional<NmpcSolution> warm_;
  std::optional<Vec2> pin_start_;
  SwingTrajectory swing_;
  Vec2 swing_target_ = Vec2::Zero();
  double solve_seconds_ = 0.0;
};

SimLog run_scenario(const SimConfig& cfg);

}  // namespace phasewalk
