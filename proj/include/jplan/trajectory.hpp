#pragma once

// Cubic motion primitives for a 2D double integrator and their piecewise
// composition. Coefficients are expressed in absolute time:
//
//   p(t) = c1 t^3 + c2 t^2 + c3 t + c4
//   v(t) = 3 c1 t^2 + 2 c2 t + c3
//   u(t) = 6 c1 t + 2 c2

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include "jplan/errors.hpp"

namespace jplan {

using Vec2 = Eigen::Vector2d;

inline bool finite(const Vec2& x) { return std::isfinite(x.x()) && std::isfinite(x.y()); }

struct KinematicState {
  Vec2 p{Vec2::Zero()};
  Vec2 v{Vec2::Zero()};

  static KinematicState at_rest(double x, double y) { return {Vec2(x, y), Vec2::Zero()}; }

  void validate() const {
    if (!finite(p) || !finite(v)) throw Error(Errc::validation, "kinematic state is not finite");
  }
};

struct Evaluation {
  Vec2 p;
  Vec2 v;
  Vec2 u;
};

class CubicSegment {
 public:
  using Coefficients = std::array<Vec2, 4>;

  CubicSegment(const Coefficients& c, double t_start, double t_end)
      : c_(c), t_start_(t_start), t_end_(t_end) {
    if (!(t_start < t_end)) throw Error(Errc::validation, "segment interval must satisfy t_start < t_end");
    for (const auto& ci : c_)
      if (!finite(ci)) throw Error(Errc::validation, "segment coefficient is not finite");
  }

  const Vec2& c1() const { return c_[0]; }
  const Vec2& c2() const { return c_[1]; }
  const Vec2& c3() const { return c_[2]; }
  const Vec2& c4() const { return c_[3]; }
  const Coefficients& coefficients() const { return c_; }
  double t_start() const { return t_start_; }
  double t_end() const { return t_end_; }
  double duration() const { return t_end_ - t_start_; }

  /// Evaluation without the interval check; used where the caller has
  /// already located the segment.
  Evaluation eval_unchecked(double t) const {
    const double t2 = t * t;
    return {c_[0] * (t2 * t) + c_[1] * t2 + c_[2] * t + c_[3],
            c_[0] * (3.0 * t2) + c_[1] * (2.0 * t) + c_[2],
            c_[0] * (6.0 * t) + c_[1] * 2.0};
  }

  /// Constant jerk of the primitive.
  Vec2 jerk() const { return 6.0 * c_[0]; }

 private:
  Coefficients c_;
  double t_start_;
  double t_end_;
};

inline Evaluation eval_segment(const CubicSegment& seg, double t) {
  if (!(t >= seg.t_start() && t <= seg.t_end())) {
    std::ostringstream os;
    os << "t=" << t << " outside [" << seg.t_start() << ", " << seg.t_end() << "]";
    throw Error(Errc::out_of_range, os.str());
  }
  return seg.eval_unchecked(t);
}

/// Integral of |u(t)|^2 over the segment, in closed form.
inline double segment_energy(const CubicSegment& seg) {
  const double a = seg.t_start();
  const double b = seg.t_end();
  const Vec2& c1 = seg.c1();
  const Vec2& c2 = seg.c2();
  return 12.0 * c1.squaredNorm() * (b * b * b - a * a * a) + 12.0 * c1.dot(c2) * (b * b - a * a) +
         4.0 * c2.squaredNorm() * (b - a);
}

class PiecewiseTrajectory {
 public:
  explicit PiecewiseTrajectory(std::vector<CubicSegment> segments) : segments_(std::move(segments)) {
    if (segments_.empty()) throw Error(Errc::validation, "trajectory needs at least one segment");
    for (std::size_t k = 1; k < segments_.size(); ++k) {
      const double a = segments_[k - 1].t_end();
      const double b = segments_[k].t_start();
      if (std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(a)))
        throw Error(Errc::validation, "trajectory segments are not contiguous");
    }
  }

  const std::vector<CubicSegment>& segments() const { return segments_; }
  std::size_t size() const { return segments_.size(); }
  double t_start() const { return segments_.front().t_start(); }
  double t_end() const { return segments_.back().t_end(); }

  /// Index of the segment containing t. A junction instant belongs to the
  /// later segment.
  std::size_t locate(double t) const {
    if (!(t >= t_start() && t <= t_end())) {
      std::ostringstream os;
      os << "t=" << t << " outside trajectory horizon [" << t_start() << ", " << t_end() << "]";
      throw Error(Errc::out_of_range, os.str());
    }
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                               [](double x, const CubicSegment& s) { return x < s.t_start(); });
    return static_cast<std::size_t>(std::distance(segments_.begin(), it)) - 1;
  }

 private:
  std::vector<CubicSegment> segments_;
};

inline Evaluation eval_trajectory(const PiecewiseTrajectory& traj, double t) {
  return traj.segments()[traj.locate(t)].eval_unchecked(t);
}

/// Evaluation that holds the boundary states outside the horizon: the start
/// state before t_start, the terminal position with zero velocity and
/// control after t_end.
inline Evaluation eval_held(const PiecewiseTrajectory& traj, double t) {
  if (t <= traj.t_start()) {
    auto e = traj.segments().front().eval_unchecked(traj.t_start());
    return {e.p, Vec2::Zero(), Vec2::Zero()};
  }
  if (t >= traj.t_end()) {
    auto e = traj.segments().back().eval_unchecked(traj.t_end());
    return {e.p, Vec2::Zero(), Vec2::Zero()};
  }
  return eval_trajectory(traj, t);
}

inline double trajectory_energy(const PiecewiseTrajectory& traj) {
  double total = 0.0;
  for (const auto& seg : traj.segments()) total += segment_energy(seg);
  return total;
}

/// count uniform times spanning [t0, tf]; both endpoints included exactly.
inline std::vector<double> uniform_times(double t0, double tf, std::size_t count) {
  if (count < 2) throw Error(Errc::validation, "sample count must be at least 2");
  std::vector<double> ts(count);
  const double h = (tf - t0) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) ts[k] = t0 + h * static_cast<double>(k);
  ts.back() = tf;
  return ts;
}

namespace detail {

// Row of the monomial basis and its derivatives at time t.
inline std::array<double, 4> position_row(double t) { return {t * t * t, t * t, t, 1.0}; }
inline std::array<double, 4> velocity_row(double t) { return {3.0 * t * t, 2.0 * t, 1.0, 0.0}; }
inline std::array<double, 4> control_row(double t) { return {6.0 * t, 2.0, 0.0, 0.0}; }

// Coefficient layout: segment s occupies columns [8s, 8s + 8) ordered
// c1x c1y c2x c2y c3x c3y c4x c4y.
inline void put_row(Eigen::MatrixXd& m, Eigen::Index row, std::size_t segment, int axis,
                    const std::array<double, 4>& basis, double sign = 1.0) {
  const Eigen::Index base = static_cast<Eigen::Index>(8 * segment) + axis;
  for (int j = 0; j < 4; ++j) m(row, base + 2 * j) += sign * basis[j];
}

inline CubicSegment segment_from(const Eigen::VectorXd& x, std::size_t segment, double a, double b) {
  const Eigen::Index o = static_cast<Eigen::Index>(8 * segment);
  return CubicSegment({Vec2(x(o), x(o + 1)), Vec2(x(o + 2), x(o + 3)), Vec2(x(o + 4), x(o + 5)),
                       Vec2(x(o + 6), x(o + 7))},
                      a, b);
}

}  // namespace detail

/// Minimum-energy primitive joining two kinematic states over [t0, tf].
inline CubicSegment solve_boundary(const KinematicState& x0, const KinematicState& xf, double t0, double tf) {
  x0.validate();
  xf.validate();
  if (!(tf > t0)) throw Error(Errc::degenerate_horizon, "tf must exceed t0");
  if (tf - t0 < 1e-9) throw Error(Errc::conditioning, "horizon too short for a well-posed boundary solve");

  // 4x4 boundary block Kronecker-expanded with I2.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(8, 8);
  Eigen::VectorXd rhs(8);
  for (int axis = 0; axis < 2; ++axis) {
    detail::put_row(a, 0 + axis, 0, axis, detail::position_row(t0));
    detail::put_row(a, 2 + axis, 0, axis, detail::velocity_row(t0));
    detail::put_row(a, 4 + axis, 0, axis, detail::position_row(tf));
    detail::put_row(a, 6 + axis, 0, axis, detail::velocity_row(tf));
    rhs(0 + axis) = x0.p(axis);
    rhs(2 + axis) = x0.v(axis);
    rhs(4 + axis) = xf.p(axis);
    rhs(6 + axis) = xf.v(axis);
  }
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  const Eigen::VectorXd x = lu.solve(rhs);
  return detail::segment_from(x, 0, t0, tf);
}

}  // namespace jplan
