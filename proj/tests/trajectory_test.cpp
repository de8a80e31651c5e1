#include "jplan/trajectory.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace jplan {
namespace {

constexpr double kTight = 1e-9;

CubicSegment rest_to_rest_unit() {
  return CubicSegment({Vec2(-2, 0), Vec2(3, 0), Vec2(0, 0), Vec2(0, 0)}, 0.0, 1.0);
}

// Composite Simpson quadrature of |u(t)|^2, independent of the closed form.
double quadrature_energy(const CubicSegment& seg, int intervals = 1000) {
  const double a = seg.t_start();
  const double h = seg.duration() / intervals;
  auto f = [&](double t) { return (6.0 * seg.c1() * t + 2.0 * seg.c2()).squaredNorm(); };
  double sum = f(a) + f(seg.t_end());
  for (int k = 1; k < intervals; ++k) sum += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
  return sum * h / 3.0;
}

Vec2 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng)};
}

TEST(EvalSegment, ConstantSegmentIsAtRest) {
  const CubicSegment seg({Vec2::Zero(), Vec2::Zero(), Vec2::Zero(), Vec2(1, 2)}, 0.0, 1.0);
  const auto e = eval_segment(seg, 0.7);
  EXPECT_EQ(e.p, Vec2(1, 2));
  EXPECT_EQ(e.v, Vec2::Zero());
  EXPECT_EQ(e.u, Vec2::Zero());
}

TEST(EvalSegment, RestToRestMidpointAndEnd) {
  const auto seg = rest_to_rest_unit();
  EXPECT_NEAR(eval_segment(seg, 0.5).p.x(), 0.5, kTight);
  const auto end = eval_segment(seg, 1.0);
  EXPECT_NEAR(end.p.x(), 1.0, kTight);
  EXPECT_NEAR(end.v.norm(), 0.0, kTight);
  EXPECT_NEAR(end.u.x(), -6.0, kTight);
  EXPECT_NEAR(end.u.y(), 0.0, kTight);
}

TEST(EvalSegment, OutsideIntervalThrows) {
  const auto seg = rest_to_rest_unit();
  try {
    eval_segment(seg, 1.0 + 1e-12);
    FAIL() << "expected out_of_range";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::out_of_range);
  }
  EXPECT_THROW(eval_segment(seg, -0.1), Error);
}

TEST(CubicSegmentType, RejectsEmptyIntervalAndNonFinite) {
  EXPECT_THROW(CubicSegment({Vec2::Zero(), Vec2::Zero(), Vec2::Zero(), Vec2::Zero()}, 1.0, 1.0), Error);
  EXPECT_THROW(CubicSegment({Vec2(NAN, 0), Vec2::Zero(), Vec2::Zero(), Vec2::Zero()}, 0.0, 1.0), Error);
}

TEST(SolveBoundary, StationarySolution) {
  const auto x = KinematicState::at_rest(3, 4);
  const auto seg = solve_boundary(x, x, 2.0, 7.5);
  EXPECT_NEAR(seg.c1().norm(), 0.0, kTight);
  EXPECT_NEAR(seg.c2().norm(), 0.0, kTight);
  EXPECT_NEAR(seg.c3().norm(), 0.0, kTight);
  EXPECT_NEAR((seg.c4() - Vec2(3, 4)).norm(), 0.0, kTight);
}

TEST(SolveBoundary, UnitRestToRestCoefficients) {
  const auto seg = solve_boundary(KinematicState::at_rest(0, 0), KinematicState::at_rest(1, 0), 0.0, 1.0);
  EXPECT_NEAR((seg.c1() - Vec2(-2, 0)).norm(), 0.0, kTight);
  EXPECT_NEAR((seg.c2() - Vec2(3, 0)).norm(), 0.0, kTight);
  EXPECT_NEAR(seg.c3().norm(), 0.0, kTight);
  EXPECT_NEAR(seg.c4().norm(), 0.0, kTight);
}

TEST(SolveBoundary, MidpointIsHalfDisplacement) {
  const Vec2 start(-1.5, 2.0);
  const Vec2 d(4.0, -3.0);
  const auto seg = solve_boundary({start, Vec2::Zero()}, {start + d, Vec2::Zero()}, 1.0, 6.0);
  EXPECT_NEAR((eval_segment(seg, 3.5).p - (start + 0.5 * d)).norm(), 0.0, kTight);
}

TEST(SolveBoundary, DegenerateHorizons) {
  const auto x = KinematicState::at_rest(0, 0);
  try {
    solve_boundary(x, x, 1.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate_horizon);
  }
  try {
    solve_boundary(x, x, 1.0, 1.0 + 5e-10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::conditioning);
  }
}

TEST(SolveBoundary, RandomBoundaryConditionsAreMet) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ut(-5.0, 5.0);
  std::uniform_real_distribution<double> uh(0.5, 12.0);
  for (int trial = 0; trial < 200; ++trial) {
    const KinematicState x0{random_vec(rng, 20), random_vec(rng, 3)};
    const KinematicState xf{random_vec(rng, 20), random_vec(rng, 3)};
    const double t0 = ut(rng);
    const double tf = t0 + uh(rng);
    const auto seg = solve_boundary(x0, xf, t0, tf);
    const auto a = eval_segment(seg, t0);
    const auto b = eval_segment(seg, tf);
    const double worst = std::max({(a.p - x0.p).lpNorm<Eigen::Infinity>(), (a.v - x0.v).lpNorm<Eigen::Infinity>(),
                                   (b.p - xf.p).lpNorm<Eigen::Infinity>(), (b.v - xf.v).lpNorm<Eigen::Infinity>()});
    EXPECT_LT(worst, 1e-9) << "trial " << trial;
  }
}

TEST(SolveBoundary, TimeTranslationInvariance) {
  const KinematicState x0{Vec2(1, -2), Vec2(0.5, 0.25)};
  const KinematicState xf{Vec2(7, 3), Vec2(-1, 0)};
  const double shift = 4.25;
  const auto base = solve_boundary(x0, xf, 0.0, 6.0);
  const auto moved = solve_boundary(x0, xf, shift, 6.0 + shift);
  for (double t = 0.0; t <= 6.0; t += 0.125)
    EXPECT_NEAR((eval_segment(moved, t + shift).p - eval_segment(base, t).p).norm(), 0.0, 1e-9);
}

TEST(SegmentEnergy, ZeroControl) {
  const CubicSegment seg({Vec2::Zero(), Vec2::Zero(), Vec2(1, 1), Vec2(5, 5)}, 0.0, 3.0);
  EXPECT_EQ(segment_energy(seg), 0.0);
}

TEST(SegmentEnergy, UnitRestToRestIsTwelve) {
  // integral of (6 - 12 t)^2 on [0, 1] = 36 - 72 + 48
  EXPECT_NEAR(segment_energy(rest_to_rest_unit()), 12.0, 12.0 * 1e-12);
}

TEST(SegmentEnergy, ScalesWithSquaredDisplacement) {
  const Vec2 d(3.0, -4.0);
  const auto seg = solve_boundary({Vec2(1, 1), Vec2::Zero()}, {Vec2(1, 1) + d, Vec2::Zero()}, 0.0, 1.0);
  EXPECT_NEAR(segment_energy(seg), 12.0 * d.squaredNorm(), 1e-9 * 12.0 * d.squaredNorm());
  EXPECT_NEAR(segment_energy(seg), quadrature_energy(seg), 1e-8 * segment_energy(seg));
}

TEST(SegmentEnergy, ClosedFormMatchesQuadratureOnRandomSegments) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ut(-10.0, 10.0);
  std::uniform_real_distribution<double> uh(0.1, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double a = ut(rng);
    const CubicSegment seg({random_vec(rng, 2), random_vec(rng, 2), random_vec(rng, 2), random_vec(rng, 2)}, a,
                           a + uh(rng));
    const double closed = segment_energy(seg);
    EXPECT_GE(closed, 0.0);
    EXPECT_NEAR(closed, quadrature_energy(seg), 1e-8 * std::max(closed, 1e-12)) << "trial " << trial;
  }
}

TEST(SegmentEnergy, ZeroOnlyWithoutCubicAndQuadraticTerms) {
  const CubicSegment only_quadratic({Vec2::Zero(), Vec2(1e-3, 0), Vec2(4, 4), Vec2::Zero()}, -1.0, 1.0);
  EXPECT_GT(segment_energy(only_quadratic), 0.0);
  const CubicSegment only_cubic({Vec2(0, 1e-3), Vec2::Zero(), Vec2::Zero(), Vec2::Zero()}, -1.0, 1.0);
  EXPECT_GT(segment_energy(only_cubic), 0.0);
}

TEST(TrajectoryEnergy, SingletonAndSplit) {
  const auto whole = solve_boundary(KinematicState::at_rest(0, 0), KinematicState::at_rest(2, 1), 0.0, 4.0);
  const PiecewiseTrajectory single({whole});
  EXPECT_EQ(trajectory_energy(single), segment_energy(whole));
  const PiecewiseTrajectory split({CubicSegment(whole.coefficients(), 0.0, 2.0), CubicSegment(whole.coefficients(), 2.0, 4.0)});
  EXPECT_NEAR(trajectory_energy(split), trajectory_energy(single), 1e-12);
}

TEST(PiecewiseTrajectoryType, RequiresContiguousSegments) {
  const auto seg = rest_to_rest_unit();
  EXPECT_THROW(PiecewiseTrajectory({}), Error);
  EXPECT_THROW(PiecewiseTrajectory({seg, CubicSegment(seg.coefficients(), 1.5, 2.0)}), Error);
}

TEST(EvalTrajectory, BoundariesAndJunction) {
  const KinematicState x0 = KinematicState::at_rest(0, 0);
  const KinematicState xf = KinematicState::at_rest(6, 2);
  const auto whole = solve_boundary(x0, xf, 0.0, 3.0);
  const PiecewiseTrajectory traj({CubicSegment(whole.coefficients(), 0.0, 1.2), CubicSegment(whole.coefficients(), 1.2, 3.0)});

  const auto first = eval_trajectory(traj, 0.0);
  EXPECT_EQ(first.p, eval_segment(traj.segments().front(), 0.0).p);

  const auto left = eval_segment(traj.segments()[0], 1.2);
  const auto right = eval_segment(traj.segments()[1], 1.2);
  EXPECT_NEAR((left.p - right.p).norm(), 0.0, kTight);
  EXPECT_NEAR((left.v - right.v).norm(), 0.0, kTight);
  EXPECT_EQ(traj.locate(1.2), 1u);

  const auto last = eval_trajectory(traj, 3.0);
  EXPECT_NEAR((last.p - xf.p).norm(), 0.0, kTight);
  EXPECT_NEAR((last.v - xf.v).norm(), 0.0, kTight);

  EXPECT_THROW(eval_trajectory(traj, 3.0001), Error);
  EXPECT_THROW(eval_trajectory(traj, -0.0001), Error);
}

TEST(EvalTrajectory, JunctionInstantResolvesToLaterSegment) {
  // Deliberately discontinuous so the two segments are distinguishable.
  const PiecewiseTrajectory traj({CubicSegment({Vec2::Zero(), Vec2::Zero(), Vec2::Zero(), Vec2(1, 0)}, 0.0, 1.0),
                                  CubicSegment({Vec2::Zero(), Vec2::Zero(), Vec2::Zero(), Vec2(2, 0)}, 1.0, 2.0)});
  EXPECT_EQ(eval_trajectory(traj, 1.0).p, Vec2(2, 0));
  EXPECT_EQ(eval_trajectory(traj, 2.0).p, Vec2(2, 0));
}

TEST(UniformTimes, EndpointsExact) {
  const auto ts = uniform_times(0.3, 9.7, 2001);
  ASSERT_EQ(ts.size(), 2001u);
  EXPECT_EQ(ts.front(), 0.3);
  EXPECT_EQ(ts.back(), 9.7);
  EXPECT_THROW(uniform_times(0.0, 1.0, 1), Error);
}

}  // namespace
}  // namespace jplan
