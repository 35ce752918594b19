#pragma once

#include <Eigen/Dense>

namespace phasewalk {

/// Horizontal-plane vector: x forward, y lateral (left positive).
using Vec2 = Eigen::Vector2d;

bool is_finite(const Vec2& v);

/// Point-mass linear inverted pendulum parameters.
///
/// The time constant is derived and kept in sync by the constructor and
/// setters; invalid combinations throw std::invalid_argument.
class LipmParams {
 public:
  LipmParams() : LipmParams(0.75, 0.0, 9.81, 100.0) {}
  LipmParams(double com_height, double zmp_height, double gravity, double mass);

  double com_height() const { return com_height_; }
  double zmp_height() const { return zmp_height_; }
  double gravity() const { return gravity_; }
  double mass() const { return mass_; }

  /// b = sqrt((c_z - z_z) / g)
  double time_constant() const { return time_constant_; }
  /// b^2, the factor mapping CoM acceleration to ZMP offset.
  double height_ratio() const { return time_constant_ * time_constant_; }

  void set_com_height(double v);
  void set_zmp_height(double v);
  void set_gravity(double v);
  void set_mass(double v);

 private:
  void validate_and_update();

  double com_height_;
  double zmp_height_;
  double gravity_;
  double mass_;
  double time_constant_ = 0.0;
};

struct RobotState {
  Vec2 com = Vec2::Zero();
  Vec2 com_vel = Vec2::Zero();
  double time_in_phase = 0.0;
};

/// Linear ZMP trajectory over one phase.
class ZmpSegment {
 public:
  static constexpr double kMinDuration = 1e-4;

  ZmpSegment(const Vec2& start, const Vec2& end, double duration);

  const Vec2& start() const { return start_; }
  const Vec2& end() const { return end_; }
  double duration() const { return duration_; }

  /// Same endpoints stretched or compressed over a different duration.
  ZmpSegment with_duration(double duration) const { return {start_, end_, duration}; }

 private:
  Vec2 start_;
  Vec2 end_;
  double duration_;
};

struct DcmOffset {
  Vec2 value = Vec2::Zero();
};

Vec2 lipm_accel(const RobotState& state, const Vec2& zmp, const LipmParams& params);

Vec2 dcm_of(const RobotState& state, const LipmParams& params);
Vec2 com_vel_from_dcm(const Vec2& dcm, const Vec2& com, const LipmParams& params);

/// Throws std::out_of_range unless 0 <= t <= duration.
Vec2 zmp_interp(const ZmpSegment& seg, double t);

/// Particular-solution DCM at the segment end: z_T + b/T (z_T - z_0).
Vec2 z_alpha(const ZmpSegment& seg, const LipmParams& params);
/// Particular-solution DCM at time t: z_0 + (t + b)/T (z_T - z_0).
Vec2 z_beta(const ZmpSegment& seg, double t, const LipmParams& params);

/// Closed-form DCM at the end of `seg` given the DCM at phase time t.
Vec2 propagate_dcm(const ZmpSegment& seg, const Vec2& xi_t, double t, const LipmParams& params);

DcmOffset dcm_offset(const Vec2& xi_end, const Vec2& step_location);

}  // namespace phasewalk
