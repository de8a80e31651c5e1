#pragma once

// Constrained per-agent planning with instantaneous constraint activations.
//
// A trajectory touching n obstacles is n + 1 cubic primitives joined at
// junctions. Each junction is parameterized by a contact angle and a time;
// given those, the primitives follow from one linear solve. The angles and
// times are then adjusted until the two remaining optimality conditions
// (tangency and continuity of u'.v across the junction) hold.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "jplan/trajectory.hpp"
#include "jplan/world.hpp"

namespace jplan {

struct Junction {
  int obstacle_id = 0;
  double theta = 0.0;  // radians in [-pi, pi)
  double time = 0.0;   // seconds

  bool operator==(const Junction&) const = default;
};

struct JunctionSolveConfig {
  double residual_tol = 1e-7;
  int max_iterations = 200;
  double fd_step = 1e-6;
  std::size_t sample_count = kDefaultSampleCount;
  std::size_t max_junctions = 8;
  double time_margin = 1e-3;

  void validate() const {
    if (!(residual_tol > 0.0) || max_iterations <= 0 || !(fd_step > 0.0) || sample_count < 2 ||
        max_junctions == 0 || !(time_margin > 0.0))
      throw Error(Errc::validation, "junction solver configuration values must be positive");
  }
};

struct SolveReport {
  bool converged = false;
  double residual_norm = 0.0;
  int iterations = 0;
  std::vector<Junction> junction_sequence;
  double energy = 0.0;
  // Junctions reached at |v| < 1e-6, where both residuals vanish trivially.
  std::vector<std::size_t> low_speed_junctions;
};

struct AgentPlan {
  PiecewiseTrajectory trajectory;
  SolveReport report;
};

/// Raised when greedy activation discovery cannot produce a feasible plan.
/// Carries the last (infeasible) iterate.
class PlanningFailure : public Error {
 public:
  PlanningFailure(const std::string& what, AgentPlan best)
      : Error(Errc::planning_failure, what), best_(std::move(best)) {}
  const AgentPlan& best() const { return best_; }

 private:
  AgentPlan best_;
};

inline double normalize_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double t = std::fmod(theta + std::numbers::pi, two_pi);
  if (t < 0.0) t += two_pi;
  t -= std::numbers::pi;
  return t >= std::numbers::pi ? -std::numbers::pi : t;
}

inline Vec2 contact_normal(double theta) { return {std::cos(theta), std::sin(theta)}; }

/// Point on the inflated obstacle boundary at angle theta.
inline Vec2 contact_point(const Obstacle& obstacle, double combined_r, double theta) {
  return obstacle.center + combined_r * contact_normal(theta);
}

struct LinearSystem {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd rhs;
};

inline void check_ordering(const AgentSpec& agent, const std::vector<Junction>& junctions) {
  double prev = agent.t0;
  for (const auto& j : junctions) {
    if (!(j.time > prev)) throw Error(Errc::ordering, "junction times must increase strictly inside the horizon");
    prev = j.time;
  }
  if (!(agent.tf_nominal > prev)) throw Error(Errc::ordering, "junction time at or beyond the arrival time");
}

/// Block system for the 8(n+1) primitive coefficients. Row order: initial
/// position and velocity, terminal position and velocity, then per junction
/// the contact point from both sides, velocity continuity and control
/// continuity.
inline LinearSystem assemble_system(const AgentSpec& agent, const std::vector<Junction>& junctions,
                                    const Scenario& scenario) {
  check_ordering(agent, junctions);
  const std::size_t n = junctions.size();
  const Eigen::Index dim = static_cast<Eigen::Index>(8 * (n + 1));
  LinearSystem sys{Eigen::MatrixXd::Zero(dim, dim), Eigen::VectorXd::Zero(dim)};
  auto& a = sys.matrix;
  auto& b = sys.rhs;
  const double t0 = agent.t0;
  const double tf = agent.tf_nominal;

  for (int axis = 0; axis < 2; ++axis) {
    detail::put_row(a, 0 + axis, 0, axis, detail::position_row(t0));
    detail::put_row(a, 2 + axis, 0, axis, detail::velocity_row(t0));
    detail::put_row(a, 4 + axis, n, axis, detail::position_row(tf));
    detail::put_row(a, 6 + axis, n, axis, detail::velocity_row(tf));
    b(0 + axis) = agent.start.p(axis);
    b(2 + axis) = agent.start.v(axis);
    b(4 + axis) = agent.goal.p(axis);
    b(6 + axis) = agent.goal.v(axis);
  }

  for (std::size_t k = 0; k < n; ++k) {
    const Junction& j = junctions[k];
    const Obstacle& o = scenario.obstacle(j.obstacle_id);
    const Vec2 contact = contact_point(o, inflated_radius(o, agent), j.theta);
    const double t = j.time;
    const Eigen::Index row = static_cast<Eigen::Index>(8 * (k + 1));
    for (int axis = 0; axis < 2; ++axis) {
      detail::put_row(a, row + 0 + axis, k, axis, detail::position_row(t));
      detail::put_row(a, row + 2 + axis, k + 1, axis, detail::position_row(t));
      detail::put_row(a, row + 4 + axis, k, axis, detail::velocity_row(t));
      detail::put_row(a, row + 4 + axis, k + 1, axis, detail::velocity_row(t), -1.0);
      detail::put_row(a, row + 6 + axis, k, axis, detail::control_row(t));
      detail::put_row(a, row + 6 + axis, k + 1, axis, detail::control_row(t), -1.0);
      b(row + 0 + axis) = contact(axis);
      b(row + 2 + axis) = contact(axis);
    }
  }
  return sys;
}

struct CoefficientOptions {
  double min_segment = 1e-3;     // shorter primitives are rejected as ill-conditioned
  double max_condition = 1e12;   // on the row-equilibrated matrix
};

inline PiecewiseTrajectory solve_coefficients(const AgentSpec& agent, const std::vector<Junction>& junctions,
                                              const Scenario& scenario, const CoefficientOptions& opts = {}) {
  LinearSystem sys = assemble_system(agent, junctions, scenario);

  std::vector<double> breaks;
  breaks.reserve(junctions.size() + 2);
  breaks.push_back(agent.t0);
  for (const auto& j : junctions) breaks.push_back(j.time);
  breaks.push_back(agent.tf_nominal);
  for (std::size_t k = 1; k < breaks.size(); ++k) {
    if (breaks[k] - breaks[k - 1] < opts.min_segment * (1.0 - 1e-9))
      throw Error(Errc::conditioning, "junction too close to a neighbouring junction or the horizon boundary");
  }

  // Row equilibration leaves the solution unchanged and makes the condition
  // estimate insensitive to the magnitude of absolute times.
  for (Eigen::Index r = 0; r < sys.matrix.rows(); ++r) {
    const double s = sys.matrix.row(r).cwiseAbs().maxCoeff();
    sys.matrix.row(r) /= s;
    sys.rhs(r) /= s;
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.matrix);
  const double rcond = lu.rcond();
  if (!(rcond > 0.0) || 1.0 / rcond > opts.max_condition)
    throw Error(Errc::conditioning, "junction system is singular or ill-conditioned");
  const Eigen::VectorXd x = lu.solve(sys.rhs);
  if (!x.allFinite()) throw Error(Errc::conditioning, "junction system produced non-finite coefficients");

  std::vector<CubicSegment> segments;
  segments.reserve(breaks.size() - 1);
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k)
    segments.push_back(detail::segment_from(x, k, breaks[k], breaks[k + 1]));
  return PiecewiseTrajectory(std::move(segments));
}

/// Optimality residuals of an already solved trajectory: per junction, the
/// tangency v.n and the jump in u'.v across the junction.
inline Eigen::VectorXd junction_residuals(const PiecewiseTrajectory& traj, const std::vector<Junction>& junctions) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(2 * junctions.size()));
  for (std::size_t k = 0; k < junctions.size(); ++k) {
    const CubicSegment& before = traj.segments()[k];
    const CubicSegment& after = traj.segments()[k + 1];
    const Vec2 v = after.eval_unchecked(junctions[k].time).v;
    r(static_cast<Eigen::Index>(2 * k)) = v.dot(contact_normal(junctions[k].theta));
    r(static_cast<Eigen::Index>(2 * k + 1)) = (before.jerk() - after.jerk()).dot(v);
  }
  return r;
}

inline Eigen::VectorXd residuals(const AgentSpec& agent, const std::vector<Junction>& junctions,
                                 const Scenario& scenario, const CoefficientOptions& opts = {}) {
  return junction_residuals(solve_coefficients(agent, junctions, scenario, opts), junctions);
}

namespace detail {

struct Iterate {
  std::vector<Junction> junctions;
  Eigen::VectorXd r;
  double norm = 0.0;
};

inline std::optional<Iterate> try_evaluate(const AgentSpec& agent, const std::vector<Junction>& junctions,
                                           const Scenario& scenario, const CoefficientOptions& opts) {
  try {
    Eigen::VectorXd r = residuals(agent, junctions, scenario, opts);
    const double nrm = r.norm();
    return Iterate{junctions, std::move(r), nrm};
  } catch (const Error& e) {
    if (e.code() == Errc::conditioning || e.code() == Errc::ordering) return std::nullopt;
    throw;
  }
}

// Applies a parameter step, wrapping angles and clamping each time into
// [previous + margin, next - margin] (previous already updated).
inline std::vector<Junction> apply_step(const AgentSpec& agent, const std::vector<Junction>& js,
                                        const Eigen::VectorXd& step, double margin) {
  std::vector<Junction> out = js;
  const std::size_t n = js.size();
  for (std::size_t k = 0; k < n; ++k) {
    out[k].theta = normalize_angle(js[k].theta + step(static_cast<Eigen::Index>(2 * k)));
    const double lo = (k == 0 ? agent.t0 : out[k - 1].time) + margin;
    const double hi = (k + 1 == n ? agent.tf_nominal : js[k + 1].time) - margin;
    out[k].time = std::clamp(js[k].time + step(static_cast<Eigen::Index>(2 * k + 1)), lo, std::max(lo, hi));
  }
  return out;
}

inline Eigen::MatrixXd fd_jacobian(const AgentSpec& agent, const Iterate& at, const Scenario& scenario,
                                   const CoefficientOptions& opts, double h) {
  const std::size_t n = at.junctions.size();
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(2 * n), static_cast<Eigen::Index>(2 * n));
  for (std::size_t k = 0; k < n; ++k) {
    for (int which = 0; which < 2; ++which) {
      const Eigen::Index col = static_cast<Eigen::Index>(2 * k) + which;
      auto perturbed = [&](double delta) {
        std::vector<Junction> js = at.junctions;
        if (which == 0)
          js[k].theta += delta;
        else
          js[k].time += delta;
        return try_evaluate(agent, js, scenario, opts);
      };
      if (auto fwd = perturbed(h)) {
        jac.col(col) = (fwd->r - at.r) / h;
      } else if (auto bwd = perturbed(-h)) {
        jac.col(col) = (at.r - bwd->r) / h;
      } else {
        jac.col(col).setZero();
      }
    }
  }
  return jac;
}

}  // namespace detail

inline void finalize_report(SolveReport& report, const PiecewiseTrajectory& traj) {
  report.energy = trajectory_energy(traj);
  report.low_speed_junctions.clear();
  for (std::size_t k = 0; k < report.junction_sequence.size(); ++k) {
    const double t = report.junction_sequence[k].time;
    if (traj.segments()[k + 1].eval_unchecked(t).v.norm() < 1e-6) report.low_speed_junctions.push_back(k);
  }
}

/// Damped Gauss-Newton over the junction angles and times, with forward
/// finite-difference Jacobians. Returns the best iterate; the report records
/// whether the residual tolerance was met.
inline AgentPlan solve_junctions(const AgentSpec& agent, const std::vector<Junction>& initial_junctions,
                                 const Scenario& scenario, const JunctionSolveConfig& config = {}) {
  config.validate();
  const CoefficientOptions opts{config.time_margin, 1e12};

  std::vector<Junction> start = initial_junctions;
  for (auto& j : start) j.theta = normalize_angle(j.theta);
  check_ordering(agent, start);

  auto current = detail::try_evaluate(agent, start, scenario, opts);
  if (!current) {
    for (auto& j : start) j.time += 10.0 * config.time_margin;
    current = detail::try_evaluate(agent, start, scenario, opts);
    if (!current)
      throw Error(Errc::conditioning, "junction system ill-conditioned at the initial guess and after perturbation");
  }

  SolveReport report;
  double lambda = 1e-3;
  while (current->norm > config.residual_tol && report.iterations < config.max_iterations) {
    ++report.iterations;
    const Eigen::MatrixXd jac = detail::fd_jacobian(agent, *current, scenario, opts, config.fd_step);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * current->r;
    Eigen::VectorXd scale = jtj.diagonal().cwiseMax(1e-12);

    bool accepted = false;
    while (lambda < 1e12) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * scale;
      const Eigen::VectorXd step = damped.ldlt().solve(-jtr);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      auto trial = detail::try_evaluate(agent, detail::apply_step(agent, current->junctions, step, config.time_margin),
                                        scenario, opts);
      if (trial && trial->norm < current->norm) {
        current = std::move(trial);
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;  // stalled: no damping level yields descent
  }

  report.converged = current->norm <= config.residual_tol;
  report.residual_norm = current->norm;
  report.junction_sequence = current->junctions;
  PiecewiseTrajectory traj = solve_coefficients(agent, current->junctions, scenario, opts);
  finalize_report(report, traj);
  return {std::move(traj), std::move(report)};
}

/// Initial junction for a violated obstacle: the midpoint of the violated
/// time window, with the contact angle pointing from the obstacle centre to
/// the path at that instant. Paths running through the centre line use the
/// left normal of the direction of travel.
inline Junction initial_guess(const PiecewiseTrajectory& traj, const ViolationRecord& violation,
                              const Scenario& scenario, const AgentSpec& agent) {
  if (violation.constraint.kind != ConstraintRef::Kind::obstacle)
    throw Error(Errc::validation, "initial guess needs an obstacle violation");
  const Obstacle& o = scenario.obstacle(violation.constraint.first);
  const double r = inflated_radius(o, agent);
  auto g = [&](double t) { return constraint_value(eval_trajectory(traj, t).p, o.center, r); };

  const double t0 = traj.t_start();
  const double tf = traj.t_end();
  const double scan = (tf - t0) / 8000.0;

  // Walk outward from the violating sample to bracket each window edge, then bisect.
  auto edge = [&](double direction) {
    double inside = violation.time;
    double outside = inside;
    while (true) {
      outside = std::clamp(inside + direction * scan, t0, tf);
      if (g(outside) <= 0.0 || outside == (direction < 0 ? t0 : tf)) break;
      inside = outside;
    }
    if (g(outside) > 0.0) return outside;
    while (std::abs(outside - inside) > 1e-9) {
      const double mid = 0.5 * (inside + outside);
      (g(mid) > 0.0 ? inside : outside) = mid;
    }
    return 0.5 * (inside + outside);
  };
  const double lo = edge(-1.0);
  const double hi = edge(+1.0);
  const double t_guess = 0.5 * (lo + hi);

  const Evaluation e = eval_trajectory(traj, t_guess);
  const Vec2 d = e.p - o.center;
  double theta = std::atan2(d.y(), d.x());
  const double speed = e.v.norm();
  const bool on_centre = d.norm() <= 1e-12;
  const bool on_centre_line = speed > 0.0 && std::abs(e.v.x() * d.y() - e.v.y() * d.x()) / speed <= 1e-9;
  if (on_centre || on_centre_line) theta = std::atan2(e.v.y(), e.v.x()) + std::numbers::pi / 2.0;
  return {o.id, normalize_angle(theta), t_guess};
}

/// Greedy activation-sequence discovery: start unconstrained, and while the
/// converged plan violates an obstacle, add a junction for the first
/// violation and re-solve.
inline AgentPlan plan_agent(const AgentSpec& agent, const Scenario& scenario, const JunctionSolveConfig& config = {}) {
  config.validate();
  validate_agent(agent);
  std::vector<Junction> junctions;
  std::optional<std::size_t> newest;
  while (true) {
    AgentPlan plan = solve_junctions(agent, junctions, scenario, config);
    if (!plan.report.converged && newest) {
      // Retry the newest activation on the opposite side of its obstacle.
      std::vector<Junction> mirrored = junctions;
      mirrored[*newest].theta = normalize_angle(mirrored[*newest].theta + std::numbers::pi);
      AgentPlan other = solve_junctions(agent, mirrored, scenario, config);
      if (other.report.converged || other.report.residual_norm < plan.report.residual_norm) plan = std::move(other);
    }
    if (!plan.report.converged) return plan;
    const auto violation = first_violation(plan.trajectory, scenario, agent.id, config.sample_count);
    if (!violation) return plan;
    if (junctions.size() >= config.max_junctions)
      throw PlanningFailure("junction budget exhausted with the plan still infeasible", std::move(plan));

    junctions = plan.report.junction_sequence;
    const Junction guess = initial_guess(plan.trajectory, *violation, scenario, agent);
    for (const auto& j : junctions) {
      if (j.obstacle_id == guess.obstacle_id && std::abs(j.time - guess.time) < 10.0 * config.time_margin)
        throw PlanningFailure("repeated activation of obstacle " + std::to_string(j.obstacle_id), std::move(plan));
      if (std::abs(j.time - guess.time) < 2.0 * config.time_margin)
        throw PlanningFailure("new junction collides in time with an existing one", std::move(plan));
    }
    if (guess.time - agent.t0 < 2.0 * config.time_margin || agent.tf_nominal - guess.time < 2.0 * config.time_margin)
      throw PlanningFailure("violation too close to the horizon boundary", std::move(plan));
    auto at = junctions.insert(std::upper_bound(junctions.begin(), junctions.end(), guess,
                                                [](const Junction& a, const Junction& b) { return a.time < b.time; }),
                               guess);
    newest = static_cast<std::size_t>(std::distance(junctions.begin(), at));
  }
}

}  // namespace jplan
