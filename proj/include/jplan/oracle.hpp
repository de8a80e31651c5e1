#pragma once

// Direct-transcription reference solutions. Controls are held constant over
// N steps of length dt; for a double integrator the zero-order-hold update
//
//   p+ = p + v dt + u dt^2 / 2,   v+ = v + u dt
//
// is exact, so the only approximation is the piecewise-constant control and
// the sampling of the obstacle constraints at the step boundaries.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "jplan/trajectory.hpp"
#include "jplan/world.hpp"

namespace jplan {

struct DiscretePlan {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<Vec2> controls;           // N entries
  std::vector<KinematicState> states;   // N + 1 entries
  double cost = 0.0;                    // sum |u_k|^2 dt
  double max_penetration = 0.0;         // largest positive constraint value over samples, m^2
  bool infeasibility_warning = false;
  // Penalized objective after every accepted descent step, one list per weight.
  std::vector<std::vector<double>> objective_history;

  double tf() const { return t0 + dt * static_cast<double>(controls.size()); }
};

struct OracleConfig {
  int steps = 2000;
  std::vector<double> penalty_weights{1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8};
  int iterations_per_weight = 500;
  double gradient_tol = 1e-8;

  void validate() const {
    if (steps < 2) throw Error(Errc::validation, "oracle needs at least 2 steps");
    if (penalty_weights.empty()) throw Error(Errc::validation, "oracle needs at least one penalty weight");
    for (std::size_t k = 0; k < penalty_weights.size(); ++k) {
      if (!(penalty_weights[k] > 0.0) || (k > 0 && !(penalty_weights[k] > penalty_weights[k - 1])))
        throw Error(Errc::validation, "penalty weights must be positive and increasing");
    }
    if (iterations_per_weight <= 0 || !(gradient_tol > 0.0))
      throw Error(Errc::validation, "oracle descent settings must be positive");
  }
};

/// Residual penetration above this triggers the oracle warning.
inline constexpr double kOraclePenetrationWarning = 1e-4;

namespace oracle_detail {

// Controls are stacked as [u0x, u0y, u1x, u1y, ...].
using Vector = Eigen::VectorXd;

inline std::vector<KinematicState> simulate(const KinematicState& x0, double dt, const Vector& u) {
  const std::size_t n = static_cast<std::size_t>(u.size() / 2);
  std::vector<KinematicState> xs(n + 1);
  xs[0] = x0;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 uk(u(static_cast<Eigen::Index>(2 * k)), u(static_cast<Eigen::Index>(2 * k + 1)));
    xs[k + 1].p = xs[k].p + xs[k].v * dt + 0.5 * uk * dt * dt;
    xs[k + 1].v = xs[k].v + uk * dt;
  }
  return xs;
}

// Linear map from controls to terminal (px, py, vx, vy).
inline Eigen::MatrixXd terminal_map(int n, double dt) {
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(4, 2 * n);
  for (int j = 0; j < n; ++j) {
    const double ramp = (static_cast<double>(n - j) - 0.5) * dt * dt;
    e(0, 2 * j) = ramp;
    e(1, 2 * j + 1) = ramp;
    e(2, 2 * j) = dt;
    e(3, 2 * j + 1) = dt;
  }
  return e;
}

inline Eigen::Vector4d terminal_target(const KinematicState& x0, const KinematicState& xf, int n, double dt) {
  const Vec2 dp = xf.p - x0.p - x0.v * (dt * n);
  const Vec2 dv = xf.v - x0.v;
  return {dp.x(), dp.y(), dv.x(), dv.y()};
}

// One active penalty term: sample index k, obstacle, and a = dg/dp_k.
struct ActiveTerm {
  int k;
  double g;
  Vec2 a;
};

// sum_{j < min(k,l)} (k - j - 1/2)(l - j - 1/2)
inline double ramp_overlap(int k, int l) {
  const double m = std::min(k, l);
  const double kh = k - 0.5;
  const double lh = l - 0.5;
  const double s1 = m * (m - 1.0) / 2.0;
  const double s2 = (m - 1.0) * m * (2.0 * m - 1.0) / 6.0;
  return m * kh * lh - (kh + lh) * s1 + s2;
}

class PenaltyProblem {
 public:
  PenaltyProblem(const KinematicState& x0, double dt, int n, const std::vector<Obstacle>& obstacles,
                 double agent_radius)
      : x0_(x0), dt_(dt), n_(n), obstacles_(obstacles), agent_radius_(agent_radius) {}

  double energy(const Vector& u) const { return dt_ * u.squaredNorm(); }

  double objective(const Vector& u, double w) const {
    const auto xs = simulate(x0_, dt_, u);
    double pen = 0.0;
    for (int k = 1; k <= n_; ++k) {
      for (const auto& o : obstacles_) {
        const double g = constraint_value(xs[static_cast<std::size_t>(k)].p, o.center,
                                          inflated_radius(o.radius, agent_radius_));
        if (g > 0.0) pen += g * g;
      }
    }
    return energy(u) + w * pen;
  }

  std::vector<ActiveTerm> active_terms(const Vector& u) const {
    const auto xs = simulate(x0_, dt_, u);
    std::vector<ActiveTerm> terms;
    for (int k = 1; k <= n_; ++k) {
      for (const auto& o : obstacles_) {
        const Vec2& p = xs[static_cast<std::size_t>(k)].p;
        const double g = constraint_value(p, o.center, inflated_radius(o.radius, agent_radius_));
        if (g > 0.0) terms.push_back({k, g, -2.0 * (p - o.center)});
      }
    }
    return terms;
  }

  // sum over terms of coef_r * a_r * d p_k / d u, accumulated in O(N + m).
  Vector ramp_transpose(const std::vector<ActiveTerm>& terms, const Vector& coef) const {
    std::vector<Vec2> s1(static_cast<std::size_t>(n_) + 2, Vec2::Zero());
    std::vector<Vec2> s2(static_cast<std::size_t>(n_) + 2, Vec2::Zero());
    for (std::size_t r = 0; r < terms.size(); ++r) {
      const auto k = static_cast<std::size_t>(terms[r].k);
      s1[k] += coef(static_cast<Eigen::Index>(r)) * terms[r].a;
      s2[k] += coef(static_cast<Eigen::Index>(r)) * static_cast<double>(k) * terms[r].a;
    }
    // Suffix sums over k > j.
    Vector out = Vector::Zero(2 * n_);
    Vec2 acc1 = Vec2::Zero();
    Vec2 acc2 = Vec2::Zero();
    for (int j = n_ - 1; j >= 0; --j) {
      acc1 += s1[static_cast<std::size_t>(j) + 1];
      acc2 += s2[static_cast<std::size_t>(j) + 1];
      const Vec2 gj = dt_ * dt_ * (acc2 - (j + 0.5) * acc1);
      out(2 * j) = gj.x();
      out(2 * j + 1) = gj.y();
    }
    return out;
  }

  // Row-wise a_r . d p_k / d u applied to x.
  Vector ramp_apply(const std::vector<ActiveTerm>& terms, const Vector& x) const {
    // prefix[k] = sum_{j<k} x_j, prefix_j[k] = sum_{j<k} j x_j
    std::vector<Vec2> prefix(static_cast<std::size_t>(n_) + 1, Vec2::Zero());
    std::vector<Vec2> prefix_j(static_cast<std::size_t>(n_) + 1, Vec2::Zero());
    for (int j = 0; j < n_; ++j) {
      const Vec2 xj(x(2 * j), x(2 * j + 1));
      prefix[static_cast<std::size_t>(j) + 1] = prefix[static_cast<std::size_t>(j)] + xj;
      prefix_j[static_cast<std::size_t>(j) + 1] = prefix_j[static_cast<std::size_t>(j)] + j * xj;
    }
    Vector out(static_cast<Eigen::Index>(terms.size()));
    for (std::size_t r = 0; r < terms.size(); ++r) {
      const auto k = static_cast<std::size_t>(terms[r].k);
      const Vec2 dp = dt_ * dt_ * ((terms[r].k - 0.5) * prefix[k] - prefix_j[k]);
      out(static_cast<Eigen::Index>(r)) = terms[r].a.dot(dp);
    }
    return out;
  }

  Vector gradient(const Vector& u, const std::vector<ActiveTerm>& terms, double w) const {
    Vector coef(static_cast<Eigen::Index>(terms.size()));
    for (std::size_t r = 0; r < terms.size(); ++r) coef(static_cast<Eigen::Index>(r)) = 2.0 * w * terms[r].g;
    return 2.0 * dt_ * u + ramp_transpose(terms, coef);
  }

  // Gram matrix of the ramp rows, B B^T with B_r = a_r . d p_k / d u.
  Eigen::MatrixXd ramp_gram(const std::vector<ActiveTerm>& terms) const {
    const auto m = static_cast<Eigen::Index>(terms.size());
    Eigen::MatrixXd gram(m, m);
    const double dt4 = dt_ * dt_ * dt_ * dt_;
    for (Eigen::Index r = 0; r < m; ++r)
      for (Eigen::Index s = 0; s <= r; ++s) {
        const auto& tr = terms[static_cast<std::size_t>(r)];
        const auto& ts = terms[static_cast<std::size_t>(s)];
        gram(r, s) = gram(s, r) = dt4 * tr.a.dot(ts.a) * ramp_overlap(tr.k, ts.k);
      }
    return gram;
  }

  double dt() const { return dt_; }
  int steps() const { return n_; }

 private:
  KinematicState x0_;
  double dt_;
  int n_;
  std::vector<Obstacle> obstacles_;
  double agent_radius_;
};

}  // namespace oracle_detail

inline DiscretePlan make_discrete_plan(const KinematicState& x0, double t0, double dt, const Eigen::VectorXd& u) {
  DiscretePlan plan;
  plan.t0 = t0;
  plan.dt = dt;
  const auto n = static_cast<std::size_t>(u.size() / 2);
  plan.controls.resize(n);
  for (std::size_t k = 0; k < n; ++k)
    plan.controls[k] = Vec2(u(static_cast<Eigen::Index>(2 * k)), u(static_cast<Eigen::Index>(2 * k + 1)));
  plan.states = oracle_detail::simulate(x0, dt, u);
  plan.cost = dt * u.squaredNorm();
  return plan;
}

namespace oracle_detail {

inline Vector min_norm_controls(const KinematicState& x0, const KinematicState& xf, int n, double dt,
                                const Eigen::MatrixXd& e) {
  const Eigen::Matrix4d gram = e * e.transpose();
  const Eigen::LLT<Eigen::Matrix4d> llt(gram);
  if (llt.info() != Eigen::Success) throw Error(Errc::validation, "terminal state unreachable: rank deficiency");
  return e.transpose() * llt.solve(terminal_target(x0, xf, n, dt));
}

}  // namespace oracle_detail

/// Exact minimum of sum |u_k|^2 dt subject to reaching xf at tf.
inline DiscretePlan discrete_min_energy(const KinematicState& x0, const KinematicState& xf, double t0, double tf,
                                        int steps) {
  if (!(tf > t0)) throw Error(Errc::degenerate_horizon, "tf must exceed t0");
  if (steps < 2) throw Error(Errc::validation, "oracle needs at least 2 steps");
  const double dt = (tf - t0) / steps;
  const Eigen::MatrixXd e = oracle_detail::terminal_map(steps, dt);
  const Eigen::VectorXd u = oracle_detail::min_norm_controls(x0, xf, steps, dt, e);
  DiscretePlan plan = make_discrete_plan(x0, t0, dt, u);
  const KinematicState& end = plan.states.back();
  if ((end.p - xf.p).lpNorm<Eigen::Infinity>() > 1e-9 || (end.v - xf.v).lpNorm<Eigen::Infinity>() > 1e-9)
    throw Error(Errc::validation, "terminal state not reached by the minimum-norm solution");
  return plan;
}

/// Penalty-method reference for the obstacle-constrained problem. Each
/// penalty weight is minimized by a descent method whose direction is the
/// Gauss-Newton step restricted to the null space of the terminal-state map,
/// with Armijo backtracking on the penalized objective.
inline DiscretePlan discrete_min_energy_constrained(const AgentSpec& agent, const Scenario& scenario,
                                                    const OracleConfig& config = {}) {
  config.validate();
  validate_agent(agent);
  using oracle_detail::Vector;
  const int n = config.steps;
  const double t0 = agent.t0;
  const double dt = (agent.tf_nominal - t0) / n;
  const Eigen::MatrixXd e = oracle_detail::terminal_map(n, dt);
  const Eigen::Matrix4d eet = e * e.transpose();
  const Eigen::LLT<Eigen::Matrix4d> eet_llt(eet);
  const Eigen::Vector4d target = oracle_detail::terminal_target(agent.start, agent.goal, n, dt);
  auto project = [&](const Vector& x) -> Vector { return x - e.transpose() * eet_llt.solve(e * x); };

  Vector u = oracle_detail::min_norm_controls(agent.start, agent.goal, n, dt, e);
  const oracle_detail::PenaltyProblem problem(agent.start, dt, n, scenario.obstacles, agent.radius);

  // A path running exactly through an obstacle centre is a symmetric saddle
  // of the penalty; displace it laterally toward the left of travel first.
  {
    const auto xs = oracle_detail::simulate(agent.start, dt, u);
    const double horizon = agent.tf_nominal - t0;
    for (const auto& o : scenario.obstacles) {
      const double r = inflated_radius(o, agent);
      std::size_t deepest = 0;
      double g_max = 0.0;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        const double g = constraint_value(xs[k].p, o.center, r);
        if (g > g_max) g_max = g, deepest = k;
      }
      if (g_max <= 0.0) continue;
      const Vec2 v = xs[deepest].v;
      const Vec2 d = xs[deepest].p - o.center;
      if (v.norm() == 0.0 || std::abs(v.x() * d.y() - v.y() * d.x()) / v.norm() > 1e-9) continue;
      const Vec2 left = Vec2(-v.y(), v.x()).normalized();
      const double amplitude = 0.1 * r;
      const double omega = 2.0 * std::numbers::pi / horizon;
      Vector bump(2 * n);
      for (int j = 0; j < n; ++j) {
        const double a = amplitude * 0.5 * omega * omega * std::cos(omega * (j + 0.5) * dt);
        bump(2 * j) = a * left.x();
        bump(2 * j + 1) = a * left.y();
      }
      u += project(bump);
    }
  }

  std::vector<std::vector<double>> history;
  for (double w : config.penalty_weights) {
    std::vector<double> trace;
    double f = problem.objective(u, w);
    trace.push_back(f);
    const double alpha = 2.0 * dt;
    for (int it = 0; it < config.iterations_per_weight; ++it) {
      const auto terms = problem.active_terms(u);
      const Vector grad = problem.gradient(u, terms, w);
      if (project(grad).norm() <= config.gradient_tol) break;

      // H = alpha I + 2w B^T B, inverted by Woodbury through the m x m Gram.
      const auto m = static_cast<Eigen::Index>(terms.size());
      Eigen::LDLT<Eigen::MatrixXd> inner;
      if (m > 0) {
        Eigen::MatrixXd k_mat = (2.0 * w) * problem.ramp_gram(terms);
        k_mat.diagonal().array() += alpha;
        inner.compute(k_mat);
      }
      auto h_inv = [&](const Vector& x) -> Vector {
        if (m == 0) return x / alpha;
        const Vector bx = problem.ramp_apply(terms, x);
        const Vector y = inner.solve(bx);
        return (x - (2.0 * w) * problem.ramp_transpose(terms, y)) / alpha;
      };
      Eigen::MatrixXd hinv_et(2 * n, 4);
      for (int c = 0; c < 4; ++c) hinv_et.col(c) = h_inv(e.row(c).transpose());
      const Vector hinv_g = h_inv(grad);
      const Eigen::Matrix4d s = e * hinv_et;
      const Eigen::Vector4d lambda = -s.ldlt().solve(e * hinv_g);
      const Vector dir = -(hinv_g + hinv_et * lambda);

      const double slope = grad.dot(dir);
      if (!(slope < 0.0)) break;
      double step = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Vector trial = u + step * dir;
        const double ft = problem.objective(trial, w);
        if (ft <= f + 1e-4 * step * slope) {
          u = trial;
          f = ft;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      trace.push_back(f);
    }
    // Remove terminal drift accumulated over the descent.
    u += e.transpose() * eet_llt.solve(target - e * u);
    history.push_back(std::move(trace));
  }

  DiscretePlan plan = make_discrete_plan(agent.start, t0, dt, u);
  plan.objective_history = std::move(history);
  for (std::size_t k = 0; k < plan.states.size(); ++k)
    for (const auto& o : scenario.obstacles)
      plan.max_penetration =
          std::max(plan.max_penetration, constraint_value(plan.states[k].p, o.center, inflated_radius(o, agent)));
  plan.infeasibility_warning = plan.max_penetration > kOraclePenetrationWarning;
  return plan;
}

/// Relative energy gap of a continuous trajectory over a discrete plan.
inline double compare(const PiecewiseTrajectory& traj, const DiscretePlan& oracle) {
  const double tol = 1e-9 * std::max(1.0, std::abs(oracle.tf()));
  if (std::abs(traj.t_start() - oracle.t0) > tol || std::abs(traj.t_end() - oracle.tf()) > tol)
    throw Error(Errc::comparison, "trajectory and oracle horizons differ");
  return (trajectory_energy(traj) - oracle.cost) / std::max(oracle.cost, 1e-12);
}

}  // namespace jplan
