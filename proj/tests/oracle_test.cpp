#include "jplan/oracle.hpp"

#include <gtest/gtest.h>

#include "jplan/junction_solver.hpp"
#include "scenarios.hpp"

namespace jplan {
namespace {

const KinematicState kOrigin = KinematicState::at_rest(0, 0);
const KinematicState kUnitX = KinematicState::at_rest(1, 0);

TEST(DiscreteMinEnergy, StationaryIsZero) {
  const auto plan = discrete_min_energy(kOrigin, kOrigin, 0.0, 1.0, 100);
  EXPECT_NEAR(plan.cost, 0.0, 1e-20);
  for (const auto& u : plan.controls) EXPECT_LT(u.norm(), 1e-10);
}

TEST(DiscreteMinEnergy, ApproachesContinuousOptimum) {
  const auto coarse = discrete_min_energy(kOrigin, kUnitX, 0.0, 1.0, 1000);
  const auto fine = discrete_min_energy(kOrigin, kUnitX, 0.0, 1.0, 2000);
  EXPECT_NEAR(fine.cost, 12.0, 0.12);
  EXPECT_GE(fine.cost, 12.0 - 1e-9);
  EXPECT_LT(std::abs(fine.cost - 12.0), std::abs(coarse.cost - 12.0));
  EXPECT_EQ(fine.controls.size(), 2000u);
  EXPECT_EQ(fine.states.size(), 2001u);
  EXPECT_DOUBLE_EQ(fine.tf(), 1.0);
}

TEST(DiscreteMinEnergy, ZeroOrderHoldIsExact) {
  const KinematicState x0{Vec2(1, -2), Vec2(0.5, 0.25)};
  const KinematicState xf{Vec2(4, 3), Vec2(-1, 0)};
  const auto plan = discrete_min_energy(x0, xf, 2.0, 5.0, 300);
  // Integrate each held control with a fine explicit scheme.
  KinematicState x = x0;
  for (std::size_t k = 0; k < plan.controls.size(); ++k) {
    const int sub = 64;
    const double h = plan.dt / sub;
    for (int i = 0; i < sub; ++i) {
      x.p += x.v * h + 0.5 * plan.controls[k] * h * h;
      x.v += plan.controls[k] * h;
    }
    EXPECT_LT((x.p - plan.states[k + 1].p).norm(), 1e-11);
    EXPECT_LT((x.v - plan.states[k + 1].v).norm(), 1e-11);
  }
  EXPECT_LT((plan.states.back().p - xf.p).lpNorm<Eigen::Infinity>(), 1e-9);
  EXPECT_LT((plan.states.back().v - xf.v).lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(DiscreteMinEnergy, TranslationInvariant) {
  const auto a = discrete_min_energy(kOrigin, kUnitX, 0.0, 2.0, 400);
  const auto b = discrete_min_energy(KinematicState::at_rest(7, 3), KinematicState::at_rest(8, 3), 5.0, 7.0, 400);
  EXPECT_NEAR(a.cost, b.cost, 1e-9 * a.cost);
}

TEST(DiscreteMinEnergy, Errors) {
  EXPECT_THROW(discrete_min_energy(kOrigin, kUnitX, 1.0, 1.0, 10), Error);
  EXPECT_THROW(discrete_min_energy(kOrigin, kUnitX, 0.0, 1.0, 1), Error);
}

TEST(ConstrainedOracle, FarObstacleMatchesUnconstrained) {
  auto s = testing::symmetric_scenario();
  s.obstacles.front().center = Vec2(5, 30);
  const auto constrained = discrete_min_energy_constrained(s.agents[0], s);
  const auto free = discrete_min_energy(s.agents[0].start, s.agents[0].goal, 0.0, 10.0, 2000);
  EXPECT_NEAR(constrained.cost, free.cost, 1e-9);
  EXPECT_FALSE(constrained.infeasibility_warning);
}

TEST(ConstrainedOracle, SymmetricScenarioMatchesJunctionPlan) {
  const auto s = testing::symmetric_scenario();
  const auto oracle = discrete_min_energy_constrained(s.agents[0], s);
  EXPECT_FALSE(oracle.infeasibility_warning);
  EXPECT_LE(oracle.max_penetration, kOraclePenetrationWarning);
  const auto free = discrete_min_energy(s.agents[0].start, s.agents[0].goal, 0.0, 10.0, 2000);
  EXPECT_GT(oracle.cost, free.cost);
  const auto plan = plan_agent(s.agents[0], s);
  ASSERT_TRUE(plan.report.converged);
  EXPECT_LE(std::abs(compare(plan.trajectory, oracle)), 0.02);
  // Terminal state is enforced exactly.
  EXPECT_LT((oracle.states.back().p - s.agents[0].goal.p).norm(), 1e-8);
  EXPECT_LT(oracle.states.back().v.norm(), 1e-8);
}

TEST(ConstrainedOracle, ObjectiveHistoryIsMonotonePerWeight) {
  const auto s = testing::symmetric_scenario();
  OracleConfig cfg;
  cfg.steps = 400;
  const auto oracle = discrete_min_energy_constrained(s.agents[0], s, cfg);
  ASSERT_EQ(oracle.objective_history.size(), cfg.penalty_weights.size());
  for (const auto& trace : oracle.objective_history) {
    ASSERT_FALSE(trace.empty());
    for (std::size_t k = 1; k < trace.size(); ++k) EXPECT_LE(trace[k], trace[k - 1]);
  }
}

TEST(ConstrainedOracle, WeakPenaltyWarns) {
  const auto s = testing::symmetric_scenario();
  OracleConfig cfg;
  cfg.steps = 400;
  cfg.penalty_weights = {1e-2};
  const auto oracle = discrete_min_energy_constrained(s.agents[0], s, cfg);
  EXPECT_TRUE(oracle.infeasibility_warning);
  EXPECT_GT(oracle.max_penetration, kOraclePenetrationWarning);
}

TEST(ConstrainedOracle, ConfigValidation) {
  OracleConfig cfg;
  cfg.penalty_weights = {1e3, 1e2};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.penalty_weights = {};
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.steps = 1;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Compare, HorizonMismatch) {
  const auto traj = PiecewiseTrajectory({solve_boundary(kOrigin, kUnitX, 0.0, 1.0)});
  const auto plan = discrete_min_energy(kOrigin, kUnitX, 0.0, 2.0, 100);
  try {
    compare(traj, plan);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::comparison);
  }
}

TEST(Compare, GapShrinksWithDiscretization) {
  const auto traj = PiecewiseTrajectory({solve_boundary(kOrigin, kUnitX, 0.0, 1.0)});
  const double g200 = compare(traj, discrete_min_energy(kOrigin, kUnitX, 0.0, 1.0, 200));
  const double g2000 = compare(traj, discrete_min_energy(kOrigin, kUnitX, 0.0, 1.0, 2000));
  EXPECT_LT(std::abs(g2000), std::abs(g200));
  EXPECT_LT(std::abs(g2000), 0.01);
  // The continuous optimum lies below every discrete feasible plan.
  EXPECT_LE(g2000, 1e-12);
}

TEST(MakeDiscretePlan, CostAndStates) {
  Eigen::VectorXd u(4);
  u << 1, 0, -1, 0;
  const auto plan = make_discrete_plan(kOrigin, 0.0, 0.5, u);
  EXPECT_DOUBLE_EQ(plan.cost, 2.0 * 0.5);
  EXPECT_NEAR((plan.states.back().p - Vec2(0.25, 0)).norm(), 0.0, 1e-15);
  EXPECT_NEAR(plan.states.back().v.norm(), 0.0, 1e-15);
}

}  // namespace
}  // namespace jplan
