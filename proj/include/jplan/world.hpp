#pragma once

// Scenarios, safety constraints and random sphere worlds.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "jplan/trajectory.hpp"

namespace jplan {

/// Constraint values above this count as violations; g = 0 is safe.
inline constexpr double kViolationTolerance = 1e-9;

/// Default number of uniform samples used to certify feasibility.
inline constexpr std::size_t kDefaultSampleCount = 2001;

struct Obstacle {
  int id = 0;
  Vec2 center{Vec2::Zero()};
  double radius = 0.0;
};

struct AgentSpec {
  int id = 0;
  double radius = 0.0;
  KinematicState start;
  KinematicState goal;
  double t0 = 0.0;
  double tf_nominal = 0.0;
};

struct Scenario {
  std::vector<AgentSpec> agents;
  std::vector<Obstacle> obstacles;

  const AgentSpec& agent(int id) const {
    for (const auto& a : agents)
      if (a.id == id) return a;
    throw Error(Errc::lookup, "unknown agent id " + std::to_string(id));
  }

  const Obstacle& obstacle(int id) const {
    for (const auto& o : obstacles)
      if (o.id == id) return o;
    throw Error(Errc::lookup, "unknown obstacle id " + std::to_string(id));
  }
};

/// Squared-form safety constraint: positive means the point is inside the
/// disk of radius combined_r.
inline double constraint_value(const Vec2& p, const Vec2& center, double combined_r) {
  return combined_r * combined_r - (p - center).squaredNorm();
}

inline double inflated_radius(double obstacle_radius, double agent_radius) {
  return obstacle_radius + agent_radius;
}

inline double inflated_radius(const Obstacle& obstacle, const AgentSpec& agent) {
  return inflated_radius(obstacle.radius, agent.radius);
}

/// Identifies what a violation refers to: an obstacle, or an agent pair.
struct ConstraintRef {
  enum class Kind { obstacle, agent_pair };
  Kind kind = Kind::obstacle;
  int first = 0;   // obstacle id, or lower agent id
  int second = 0;  // higher agent id for pairs

  static ConstraintRef obstacle_ref(int id) { return {Kind::obstacle, id, 0}; }
  static ConstraintRef pair_ref(int a, int b) { return {Kind::agent_pair, std::min(a, b), std::max(a, b)}; }
  bool operator==(const ConstraintRef&) const = default;
};

struct ViolationRecord {
  double time = 0.0;
  ConstraintRef constraint;
  double depth = 0.0;  // required separation minus actual distance, meters
};

inline void validate_agent(const AgentSpec& a) {
  if (!(a.radius >= 0.0) || !std::isfinite(a.radius))
    throw Error(Errc::validation, "agent " + std::to_string(a.id) + " radius must be non-negative");
  if (!(a.tf_nominal > a.t0)) throw Error(Errc::validation, "agent " + std::to_string(a.id) + " needs tf > t0");
  a.start.validate();
  a.goal.validate();
}

/// Checks id uniqueness, radii and start/goal feasibility.
inline void validate_scenario(const Scenario& s) {
  std::set<int> agent_ids;
  std::set<int> obstacle_ids;
  for (const auto& a : s.agents) {
    if (!agent_ids.insert(a.id).second) throw Error(Errc::validation, "duplicate agent id " + std::to_string(a.id));
    validate_agent(a);
  }
  for (const auto& o : s.obstacles) {
    if (!obstacle_ids.insert(o.id).second)
      throw Error(Errc::validation, "duplicate obstacle id " + std::to_string(o.id));
    if (!(o.radius >= 0.0) || !std::isfinite(o.radius) || !finite(o.center))
      throw Error(Errc::validation, "obstacle " + std::to_string(o.id) + " is malformed");
  }
  for (const auto& a : s.agents) {
    for (const auto& o : s.obstacles) {
      const double r = inflated_radius(o, a);
      if (constraint_value(a.start.p, o.center, r) >= 0.0 || constraint_value(a.goal.p, o.center, r) >= 0.0) {
        std::ostringstream os;
        os << "agent " << a.id << " start or goal lies inside inflated obstacle " << o.id;
        throw Error(Errc::validation, os.str());
      }
    }
  }
}

/// Deepest obstacle violation at one position, if any exceeds tolerance.
inline std::optional<ViolationRecord> obstacle_violation_at(const Vec2& p, double t, const Scenario& scenario,
                                                            double agent_radius) {
  std::optional<ViolationRecord> worst;
  for (const auto& o : scenario.obstacles) {
    const double r = inflated_radius(o.radius, agent_radius);
    if (constraint_value(p, o.center, r) > kViolationTolerance) {
      const double depth = r - (p - o.center).norm();
      if (!worst || depth > worst->depth) worst = ViolationRecord{t, ConstraintRef::obstacle_ref(o.id), depth};
    }
  }
  return worst;
}

/// Earliest sampled obstacle violation along the trajectory.
inline std::optional<ViolationRecord> first_violation(const PiecewiseTrajectory& traj, const Scenario& scenario,
                                                      int agent_id,
                                                      std::size_t sample_count = kDefaultSampleCount) {
  if (sample_count < 2) throw Error(Errc::validation, "sample count must be at least 2");
  const AgentSpec& agent = scenario.agent(agent_id);
  for (double t : uniform_times(traj.t_start(), traj.t_end(), sample_count)) {
    if (auto v = obstacle_violation_at(eval_trajectory(traj, t).p, t, scenario, agent.radius)) return v;
  }
  return std::nullopt;
}

/// Sample times over the union of two horizons.
inline std::vector<double> union_times(const PiecewiseTrajectory& a, const PiecewiseTrajectory& b,
                                       std::size_t sample_count) {
  return uniform_times(std::min(a.t_start(), b.t_start()), std::max(a.t_end(), b.t_end()), sample_count);
}

struct Separation {
  double time = 0.0;
  double distance = 0.0;
};

/// Minimum sampled inter-agent distance; agents outside their own horizon
/// hold their boundary positions.
inline Separation min_separation(const PiecewiseTrajectory& a, const PiecewiseTrajectory& b,
                                 std::size_t sample_count = kDefaultSampleCount) {
  Separation best{0.0, std::numeric_limits<double>::infinity()};
  for (double t : union_times(a, b, sample_count)) {
    const double d = (eval_held(a, t).p - eval_held(b, t).p).norm();
    if (d < best.distance) best = {t, d};
  }
  return best;
}

/// Deepest sampled penetration of the required separation between two agents.
inline std::optional<ViolationRecord> pair_violation(const PiecewiseTrajectory& a, double radius_a, int id_a,
                                                     const PiecewiseTrajectory& b, double radius_b, int id_b,
                                                     std::size_t sample_count = kDefaultSampleCount) {
  const double required = radius_a + radius_b;
  std::optional<ViolationRecord> worst;
  for (double t : union_times(a, b, sample_count)) {
    const Vec2 pa = eval_held(a, t).p;
    const Vec2 pb = eval_held(b, t).p;
    if (constraint_value(pa, pb, required) > kViolationTolerance) {
      const double depth = required - (pa - pb).norm();
      if (!worst || depth > worst->depth) worst = ViolationRecord{t, ConstraintRef::pair_ref(id_a, id_b), depth};
    }
  }
  return worst;
}

struct Bounds {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 20.0;
  double ymax = 20.0;
};

struct WorldGenOptions {
  double radius_min = 0.5;
  double radius_max = 2.5;
  int max_attempts = 10000;
};

/// Random sphere world. Obstacles are placed by rejection sampling so that
/// every agent start and goal stays strictly outside every inflated obstacle.
/// Obstacles may overlap each other.
inline Scenario gen_world(std::uint64_t seed, int obstacle_count, const Bounds& bounds,
                          const std::vector<AgentSpec>& agents, const WorldGenOptions& options = {}) {
  if (obstacle_count < 0) throw Error(Errc::validation, "obstacle count must be non-negative");
  if (!(bounds.xmax > bounds.xmin) || !(bounds.ymax > bounds.ymin))
    throw Error(Errc::validation, "world bounds are degenerate");
  if (!(options.radius_min >= 0.0) || !(options.radius_max >= options.radius_min))
    throw Error(Errc::validation, "obstacle radius range is invalid");

  Scenario scenario;
  scenario.agents = agents;
  validate_scenario(scenario);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(bounds.xmin, bounds.xmax);
  std::uniform_real_distribution<double> uy(bounds.ymin, bounds.ymax);
  std::uniform_real_distribution<double> ur(options.radius_min, options.radius_max);

  int attempts = 0;
  while (static_cast<int>(scenario.obstacles.size()) < obstacle_count) {
    if (attempts++ >= options.max_attempts)
      throw Error(Errc::generation_failure, "rejection budget exhausted after " +
                                                std::to_string(options.max_attempts) + " attempts");
    Obstacle o;
    o.id = static_cast<int>(scenario.obstacles.size()) + 1;
    o.center = Vec2(ux(rng), uy(rng));
    o.radius = ur(rng);
    const bool clear = std::all_of(agents.begin(), agents.end(), [&](const AgentSpec& a) {
      const double r = inflated_radius(o, a);
      return constraint_value(a.start.p, o.center, r) < 0.0 && constraint_value(a.goal.p, o.center, r) < 0.0;
    });
    if (clear) scenario.obstacles.push_back(o);
  }
  return scenario;
}

}  // namespace jplan
