#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "phasewalk/gait_plan.hpp"

using namespace phasewalk;

namespace {

const LipmParams kParams;

GaitSchedule walking(double step_length, int n_steps) {
  FootstepCommand cmd;
  cmd.step_length = step_length;
  cmd.n_steps = n_steps;
  return build_schedule(cmd.start_stance, plan_footsteps(cmd));
}

// Advances a receding generator through the schedule by whole samples,
// moving the schedule forward at phase ends. Returns the time in phase.
double run_generator(ReferenceGenerator& gen, GaitSchedule& schedule, int samples, double dt, double t0 = 0.0) {
  long tick = std::lround(t0 / dt);
  for (int k = 0; k < samples; ++k) {
    gen.plan(schedule, tick * dt);
    gen.advance(1);
    ++tick;
    if (tick * dt >= schedule.current().duration - 1e-9) {
      schedule.advance();
      tick = 0;
    }
  }
  return tick * dt;
}

}  // namespace

TEST(PlanFootsteps, InPlace) {
  FootstepCommand cmd;
  cmd.step_length = 0.0;
  cmd.n_steps = 4;
  const auto steps = plan_footsteps(cmd);
  ASSERT_EQ(steps.size(), 4u);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    EXPECT_EQ(steps[i].position.x(), 0.0);
    EXPECT_NEAR(std::abs(steps[i].position.y()), 0.1, 1e-15);
    if (i > 0) EXPECT_NEAR(steps[i].position.y(), -steps[i - 1].position.y(), 1e-15);
  }
}

TEST(PlanFootsteps, ForwardArithmetic) {
  FootstepCommand cmd;
  cmd.step_length = 0.3;
  cmd.n_steps = 2;
  const auto steps = plan_footsteps(cmd);
  ASSERT_EQ(steps.size(), 2u);
  EXPECT_NEAR((steps[0].position - Vec2(0.3, -0.1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((steps[1].position - Vec2(0.6, 0.1)).norm(), 0.0, 1e-15);
  cmd.n_steps = 1;
  EXPECT_EQ(plan_footsteps(cmd).size(), 1u);
}

TEST(PlanFootsteps, RejectsBadInput) {
  FootstepCommand cmd;
  cmd.step_width = 0.0;
  EXPECT_THROW(plan_footsteps(cmd), std::invalid_argument);
  cmd.step_width = 0.2;
  cmd.n_steps = 0;
  EXPECT_THROW(plan_footsteps(cmd), std::invalid_argument);
}

TEST(BuildSchedule, Structure) {
  const GaitSchedule s = walking(0.3, 2);
  ASSERT_EQ(s.phases().size(), 4u);
  const PhaseType expected[] = {PhaseType::SSP, PhaseType::DSP, PhaseType::SSP, PhaseType::DSP};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(s.phases()[i].type, expected[i]);
    EXPECT_EQ(s.phases()[i].nominal_duration, expected[i] == PhaseType::SSP ? 0.6 : 0.3);
  }
  const auto& dsp = s.phases()[1];
  EXPECT_EQ(dsp.zmp_start, s.phases()[0].support_foot);
  EXPECT_EQ(dsp.zmp_end, s.phases()[2].support_foot);
  EXPECT_EQ(dsp.support_foot, s.phases()[0].support_foot);
  EXPECT_EQ(dsp.landing_foot, s.phases()[0].landing_foot);
  EXPECT_EQ(s.phases()[0].zmp_start, s.phases()[0].zmp_end);
  EXPECT_THROW(build_schedule(Stance{}, {}), std::invalid_argument);
  EXPECT_THROW(build_schedule(Stance{}, plan_footsteps({}), 0.0, 0.3), std::invalid_argument);
}

TEST(BuildSchedule, AlternationAndContinuityForRandomPlans) {
  oracle::Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    FootstepCommand cmd;
    cmd.step_length = rng.uniform(-0.3, 0.4);
    cmd.step_width = rng.uniform(0.1, 0.4);
    cmd.n_steps = rng.integer(1, 12);
    cmd.first_swing = rng.integer(0, 1) ? SwingSide::Left : SwingSide::Right;
    cmd.start_stance.left = rng.vec(-1, 1);
    cmd.start_stance.right = cmd.start_stance.left - Vec2(0, cmd.step_width);
    GaitSchedule s = build_schedule(cmd.start_stance, plan_footsteps(cmd), rng.uniform(0.3, 1.0),
                                    rng.uniform(0.1, 0.5));
    s.ensure_remaining(s.phases().size() + 5);
    const auto& ph = s.phases();
    for (std::size_t i = 0; i < ph.size(); ++i) {
      EXPECT_EQ(ph[i].type, i % 2 == 0 ? PhaseType::SSP : PhaseType::DSP);
      EXPECT_GT(ph[i].nominal_duration, 0.0);
      if (i + 1 < ph.size()) EXPECT_EQ(ph[i].zmp_end, ph[i + 1].zmp_start);
      if (ph[i].type == PhaseType::SSP) {
        EXPECT_EQ(ph[i].zmp_start, ph[i].support_foot);
        EXPECT_EQ(ph[i].zmp_end, ph[i].support_foot);
        EXPECT_NE(ph[i].swing_side, SwingSide::None);
        if (i >= 2) EXPECT_NE(ph[i].swing_side, ph[i - 2].swing_side);
      }
    }
  }
}

TEST(GaitSchedule, PaddingStepsInPlace) {
  GaitSchedule s = walking(0.3, 2);
  s.ensure_remaining(8);
  ASSERT_EQ(s.phases().size(), 8u);
  const auto& last_step = s.phases()[2];
  const auto& pad = s.phases()[4];
  EXPECT_EQ(pad.type, PhaseType::SSP);
  EXPECT_EQ(pad.support_foot, last_step.landing_foot);
  EXPECT_EQ(pad.landing_foot, last_step.support_foot);
  EXPECT_NE(pad.swing_side, last_step.swing_side);
}

TEST(GaitSchedule, CommitShiftsLaterFootsteps) {
  GaitSchedule s = walking(0.0, 4);
  const GaitSchedule before = s;
  const Vec2 delta(0.08, -0.02);
  s.commit_landing(before.current().landing_foot + delta);
  EXPECT_EQ(s.phases()[0].support_foot, before.phases()[0].support_foot);
  EXPECT_EQ(s.phases()[1].support_foot, before.phases()[1].support_foot);
  EXPECT_EQ(s.phases()[1].zmp_end, before.phases()[1].zmp_end + delta);
  EXPECT_EQ(s.phases()[2].support_foot, before.phases()[2].support_foot + delta);
  EXPECT_EQ(s.phases()[2].swing_start, before.phases()[2].swing_start);
  EXPECT_EQ(s.phases()[2].landing_foot, before.phases()[2].landing_foot + delta);
  EXPECT_EQ(s.phases()[4].swing_start, before.phases()[4].swing_start + delta);
  for (std::size_t i = 0; i + 1 < s.phases().size(); ++i) EXPECT_EQ(s.phases()[i].zmp_end, s.phases()[i + 1].zmp_start);
}

TEST(PreviewCom, EquilibriumStaysPut) {
  PhaseSpec p;
  p.type = PhaseType::SSP;
  p.nominal_duration = p.duration = 5.0;
  p.support_foot = p.landing_foot = p.zmp_start = p.zmp_end = Vec2(0.1, -0.05);
  const GaitSchedule s({p});
  RobotState init;
  init.com = p.support_foot;
  const ReferenceTrajectory tr = preview_com(s, init, 160, {}, kParams);
  for (std::size_t k = 0; k < tr.size(); ++k) EXPECT_LE((tr.com[k] - p.support_foot).norm(), 1e-6);
}

TEST(PreviewCom, AnticipatesZmpStep) {
  PhaseSpec a;
  a.type = PhaseType::SSP;
  a.nominal_duration = a.duration = 0.8;
  a.support_foot = a.landing_foot = a.zmp_start = a.zmp_end = Vec2::Zero();
  PhaseSpec b = a;
  b.nominal_duration = b.duration = 2.0;
  b.support_foot = b.landing_foot = b.zmp_start = b.zmp_end = Vec2(0.1, 0.0);
  const GaitSchedule s({a, b});
  const ReferenceTrajectory tr = preview_com(s, RobotState{}, 160, {}, kParams);
  // Velocity toward the new ZMP well before the step at 0.8 s.
  EXPECT_GT(tr.com_vel[70].x(), 0.0);
  EXPECT_GT(tr.com[79].x(), 0.0);
}

TEST(PreviewCom, TracksInPlaceWalkingAndReconstructsDcm) {
  GaitSchedule s = walking(0.0, 20);
  const PreviewGenerator preview(kParams);
  ReferenceGenerator gen(preview);
  gen.preroll(s, 1.0, 0.3);
  double sq = 0.0;
  int count = 0;
  long tick = 0;
  for (int k = 0; k < 1000; ++k) {
    const ReferenceTrajectory& tr = gen.plan(s, tick * 0.01);
    for (std::size_t j = 0; j < tr.size(); ++j) {
      const Vec2 rebuilt = tr.com[j] + kParams.time_constant() * tr.com_vel[j];
      ASSERT_LE((rebuilt - tr.dcm[j]).norm(), 1e-10);
    }
    sq += (tr.implied_zmp(0, kParams) - tr.zmp[0]).squaredNorm();
    ++count;
    gen.advance(1);
    if (++tick * 0.01 >= s.current().duration - 1e-9) {
      s.advance();
      tick = 0;
    }
  }
  EXPECT_LE(std::sqrt(sq / count), 5e-3);
}

TEST(PreviewCom, RecedingHorizonConsistency) {
  // Restarting one sample later from the planned state reproduces the next
  // 0.3 s of the plan. Further out, the finite horizon dominates the gap.
  GaitSchedule s = walking(0.0, 20);
  const PreviewGenerator preview(kParams);
  ReferenceGenerator gen(preview);
  gen.preroll(s, 1.0, 0.3);
  double t = run_generator(gen, s, 200, 0.01);
  double worst = 0.0;
  for (int k = 0; k < 90; ++k) {
    const ReferenceTrajectory first = gen.plan(s, t);
    GaitSchedule s2 = s;
    double t2 = t + 0.01;
    if (t2 >= s2.current().duration - 1e-9) {
      t2 = 0.0;
      s2.advance();
    }
    const ComState next{first.com[1], first.com_vel[1], first.com_acc[1]};
    const ReferenceTrajectory second = preview.generate(s2, t2, next);
    for (std::size_t j = 0; j <= 30; ++j) worst = std::max(worst, (second.com[j] - first.com[1 + j]).norm());
    t = run_generator(gen, s, 1, 0.01, t);
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(ReferenceDcmOffset, QuietStandingIsZero) {
  PhaseSpec p;
  p.type = PhaseType::SSP;
  p.nominal_duration = p.duration = 0.6;
  PhaseSpec d = p;
  d.type = PhaseType::DSP;
  d.nominal_duration = d.duration = 0.3;
  const GaitSchedule s({p, d, p, d});
  const ReferenceTrajectory tr = preview_com(s, RobotState{}, 160, {}, kParams);
  const auto offs = reference_dcm_offset(s, 0.0, tr);
  ASSERT_GE(offs.size(), 3u);
  for (const Vec2& o : offs) EXPECT_LE(o.norm(), 1e-12);
}

TEST(ReferenceDcmOffset, InPlaceSymmetricBetweenSides) {
  GaitSchedule s = walking(0.0, 40);
  const PreviewGenerator preview(kParams);
  ReferenceGenerator gen(preview);
  gen.preroll(s, 1.0, 0.3);
  // Settle onto the periodic orbit, then compare consecutive SSP starts.
  double t = run_generator(gen, s, 900, 0.01);
  ASSERT_EQ(s.current().type, PhaseType::SSP);
  const Vec2 a = gen.plan(s, t).dcm_offsets.at(0);
  t = run_generator(gen, s, 90, 0.01, t);
  ASSERT_EQ(s.current().type, PhaseType::SSP);
  const Vec2 b = gen.plan(s, t).dcm_offsets.at(0);
  EXPECT_LE(std::abs(a.y() + b.y()), 1e-6);
  EXPECT_LE(std::abs(a.x() - b.x()), 1e-6);
  EXPECT_GT(std::abs(a.y()), 0.01);
}

TEST(ReferenceDcmOffset, ForwardWalkingMatchesPeriodicOrbit) {
  // Periodic DCM of the ideal LIPM under the same reference ZMP: with d the
  // offset at SSP start, xi_T,ssp - f0 = d e^(Ts/b) and one cycle later the
  // offset repeats after a stride L, giving a linear equation for d.
  const double b = kParams.time_constant();
  const double ts = 0.6, td = 0.3, L = 0.3;
  const double es = std::exp(ts / b), ed = std::exp(td / b);
  const double d = (L + b * L / td - ed * b * L / td - L) / (1.0 - ed * es);
  const double ssp_end = d * es - L;       // xi_T - f_T at the SSP end
  const double dsp_end = d;                // xi_T - f_T at the DSP end
  GaitSchedule s = walking(L, 40);
  const PreviewGenerator preview(kParams);
  ReferenceGenerator gen(preview);
  gen.preroll(s, 1.0, 0.3);
  const double t = run_generator(gen, s, 900, 0.01);
  ASSERT_EQ(s.current().type, PhaseType::SSP);
  const auto offs = gen.plan(s, t).dcm_offsets;
  ASSERT_GE(offs.size(), 2u);
  EXPECT_LT(offs[0].x(), 0.0);
  EXPECT_GT(offs[1].x(), 0.0);
  EXPECT_NEAR(offs[0].x(), ssp_end, 5e-3);
  EXPECT_NEAR(offs[1].x(), dsp_end, 5e-3);
}
