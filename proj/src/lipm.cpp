#include "phasewalk/lipm.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace phasewalk {

bool is_finite(const Vec2& v) { return std::isfinite(v.x()) && std::isfinite(v.y()); }

LipmParams::LipmParams(double com_height, double zmp_height, double gravity, double mass)
    : com_height_(com_height), zmp_height_(zmp_height), gravity_(gravity), mass_(mass) {
  validate_and_update();
}

void LipmParams::set_com_height(double v) {
  com_height_ = v;
  validate_and_update();
}
void LipmParams::set_zmp_height(double v) {
  zmp_height_ = v;
  validate_and_update();
}
void LipmParams::set_gravity(double v) {
  gravity_ = v;
  validate_and_update();
}
void LipmParams::set_mass(double v) {
  mass_ = v;
  validate_and_update();
}

void LipmParams::validate_and_update() {
  if (!(zmp_height_ >= 0.0) || !(com_height_ > zmp_height_)) {
    throw std::invalid_argument("LipmParams: require com_height > zmp_height >= 0");
  }
  if (!(gravity_ > 0.0)) throw std::invalid_argument("LipmParams: gravity must be positive");
  if (!(mass_ > 0.0)) throw std::invalid_argument("LipmParams: mass must be positive");
  time_constant_ = std::sqrt((com_height_ - zmp_height_) / gravity_);
}

ZmpSegment::ZmpSegment(const Vec2& start, const Vec2& end, double duration)
    : start_(start), end_(end), duration_(duration) {
  if (!(duration > kMinDuration)) {
    throw std::invalid_argument("ZmpSegment: duration must exceed 1e-4 s, got " +
                                std::to_string(duration));
  }
}

Vec2 lipm_accel(const RobotState& state, const Vec2& zmp, const LipmParams& params) {
  return (params.gravity() / (params.com_height() - params.zmp_height())) * (state.com - zmp);
}

Vec2 dcm_of(const RobotState& state, const LipmParams& params) {
  return state.com + params.time_constant() * state.com_vel;
}

Vec2 com_vel_from_dcm(const Vec2& dcm, const Vec2& com, const LipmParams& params) {
  return (dcm - com) / params.time_constant();
}

Vec2 zmp_interp(const ZmpSegment& seg, double t) {
  const double T = seg.duration();
  if (!(t >= 0.0 && t <= T)) {
    throw std::out_of_range("zmp_interp: t outside [0, T]");
  }
  const double s = t / T;
  return (1.0 - s) * seg.start() + s * seg.end();
}

Vec2 z_alpha(const ZmpSegment& seg, const LipmParams& params) {
  const double b = params.time_constant();
  return seg.end() + (b / seg.duration()) * (seg.end() - seg.start());
}

Vec2 z_beta(const ZmpSegment& seg, double t, const LipmParams& params) {
  const double b = params.time_constant();
  return seg.start() + ((t + b) / seg.duration()) * (seg.end() - seg.start());
}

Vec2 propagate_dcm(const ZmpSegment& seg, const Vec2& xi_t, double t, const LipmParams& params) {
  const double b = params.time_constant();
  const double growth = std::exp((seg.duration() - t) / b);
  return z_alpha(seg, params) + growth * (xi_t - z_beta(seg, t, params));
}

DcmOffset dcm_offset(const Vec2& xi_end, const Vec2& step_location) {
  return DcmOffset{xi_end - step_location};
}

}  // namespace phasewalk
