#pragma once

// Strategic-form coordination between agents. Each agent's action is its
// junction sequence plus arrival time; the message that carries it is a
// handful of reals from which the full trajectory is rebuilt by a single
// linear solve.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "jplan/junction_solver.hpp"
#include "jplan/world.hpp"

namespace jplan {

struct Message {
  int agent_id = 0;
  double t0 = 0.0;
  double tf = 0.0;
  KinematicState start;
  KinematicState goal;
  std::vector<Junction> junctions;

  /// Real-valued fields: horizon (2), boundary states (8), and an angle and
  /// a time per junction.
  std::size_t real_count() const { return 10 + 2 * junctions.size(); }
  /// Integer fields: the agent id and one obstacle id per junction.
  std::size_t integer_count() const { return 1 + junctions.size(); }
};

/// Energy of a feasible joint plan, or the distinguished infeasible value
/// that orders above every finite payoff.
class Payoff {
 public:
  static Payoff finite(double energy) { return Payoff(energy); }
  static Payoff infeasible() { return Payoff(); }

  bool is_finite() const { return value_.has_value(); }
  double value() const {
    if (!value_) throw Error(Errc::validation, "infeasible payoff has no finite value");
    return *value_;
  }

  friend bool operator==(const Payoff& a, const Payoff& b) { return a.value_ == b.value_; }
  friend bool operator<(const Payoff& a, const Payoff& b) {
    if (!a.value_) return false;
    if (!b.value_) return true;
    return *a.value_ < *b.value_;
  }
  friend bool operator>(const Payoff& a, const Payoff& b) { return b < a; }

 private:
  Payoff() = default;
  explicit Payoff(double v) : value_(v) {}
  std::optional<double> value_;
};

struct NegotiationConfig {
  double step = 0.5;
  double max_deviation = 5.0;
  std::size_t sample_count = kDefaultSampleCount;

  int grid_half_width() const {
    return static_cast<int>(std::lround(max_deviation / step));
  }

  void validate() const {
    if (!(step > 0.0) || !(max_deviation >= 0.0) || sample_count < 2)
      throw Error(Errc::validation, "negotiation step and sample count must be positive");
    const double k = max_deviation / step;
    if (std::abs(k - std::round(k)) > 1e-9) throw Error(Errc::validation, "max deviation must be a multiple of step");
  }
};

inline void validate_message(const Message& msg) {
  if (!(msg.tf > msg.t0)) throw Error(Errc::validation, "message horizon must satisfy tf > t0");
  double prev = msg.t0;
  for (const auto& j : msg.junctions) {
    if (!(j.time > prev) || !(j.time < msg.tf))
      throw Error(Errc::validation, "message junction times must increase strictly inside (t0, tf)");
    if (!std::isfinite(j.theta)) throw Error(Errc::validation, "message junction angle is not finite");
    prev = j.time;
  }
  msg.start.validate();
  msg.goal.validate();
}

inline Message encode_message(const AgentSpec& agent, const SolveReport& report) {
  if (!report.converged) throw Error(Errc::encoding_refused, "cannot encode a non-converged plan");
  Message msg{agent.id, agent.t0, agent.tf_nominal, agent.start, agent.goal, report.junction_sequence};
  validate_message(msg);
  return msg;
}

/// The agent spec a message describes; radius comes from the scenario.
inline AgentSpec message_agent(const Message& msg, const Scenario& scenario) {
  AgentSpec a = scenario.agent(msg.agent_id);
  a.t0 = msg.t0;
  a.tf_nominal = msg.tf;
  a.start = msg.start;
  a.goal = msg.goal;
  return a;
}

/// Rebuilds the sender's trajectory without re-optimizing.
inline PiecewiseTrajectory decode_message(const Message& msg, const Scenario& scenario) {
  validate_message(msg);
  for (const auto& j : msg.junctions) {
    try {
      (void)scenario.obstacle(j.obstacle_id);
    } catch (const Error&) {
      throw Error(Errc::decoding, "message references unknown obstacle " + std::to_string(j.obstacle_id));
    }
  }
  AgentSpec agent;
  try {
    agent = message_agent(msg, scenario);
  } catch (const Error&) {
    throw Error(Errc::decoding, "message references unknown agent " + std::to_string(msg.agent_id));
  }
  return solve_coefficients(agent, msg.junctions, scenario);
}

struct Conflict {
  int agent_a = 0;
  int agent_b = 0;
  double time = 0.0;
  double penetration = 0.0;
};

struct AgentTrajectory {
  int id = 0;
  double radius = 0.0;
  PiecewiseTrajectory trajectory;
};

/// Pairwise conflicts among decoded trajectories, deepest sample per pair.
inline std::vector<Conflict> detect_conflicts(const std::vector<AgentTrajectory>& agents,
                                              std::size_t sample_count = kDefaultSampleCount) {
  std::vector<Conflict> out;
  for (std::size_t i = 0; i < agents.size(); ++i)
    for (std::size_t j = i + 1; j < agents.size(); ++j) {
      const auto v = pair_violation(agents[i].trajectory, agents[i].radius, agents[i].id, agents[j].trajectory,
                                    agents[j].radius, agents[j].id, sample_count);
      if (v) out.push_back({v->constraint.first, v->constraint.second, v->time, v->depth});
    }
  return out;
}

inline std::vector<AgentTrajectory> decode_all(const std::vector<Message>& msgs, const Scenario& scenario) {
  std::vector<AgentTrajectory> out;
  out.reserve(msgs.size());
  for (const auto& m : msgs) out.push_back({m.agent_id, scenario.agent(m.agent_id).radius, decode_message(m, scenario)});
  return out;
}

inline std::vector<Conflict> detect_conflicts(const std::vector<Message>& msgs, const Scenario& scenario,
                                              std::size_t sample_count = kDefaultSampleCount) {
  return detect_conflicts(decode_all(msgs, scenario), sample_count);
}

/// Energy of msg's trajectory if it is obstacle-free and separated from
/// every other agent at every sample; infeasible otherwise.
inline Payoff payoff(const Message& msg, const std::vector<Message>& all_msgs, const Scenario& scenario,
                     std::size_t sample_count = kDefaultSampleCount) {
  const auto decoded = decode_all(all_msgs, scenario);
  const PiecewiseTrajectory own = decode_message(msg, scenario);
  if (first_violation(own, scenario, msg.agent_id, sample_count)) return Payoff::infeasible();
  const double radius = scenario.agent(msg.agent_id).radius;
  for (const auto& other : decoded) {
    if (other.id == msg.agent_id) continue;
    if (pair_violation(own, radius, msg.agent_id, other.trajectory, other.radius, other.id, sample_count))
      return Payoff::infeasible();
  }
  return Payoff::finite(trajectory_energy(own));
}

/// Deviation assignments (in grid units) with sum |k_i| == tier, in
/// acceptance order: smaller max |k_i| first, then lexicographically by
/// agent order so earlier arrivals go to lower ids.
inline std::vector<std::vector<int>> deviation_tier(std::size_t agents, int half_width, int tier) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(agents, 0);
  auto rec = [&](auto&& self, std::size_t i, int remaining) -> void {
    if (i == agents) {
      if (remaining == 0) out.push_back(cur);
      return;
    }
    for (int k = -std::min(half_width, remaining); k <= std::min(half_width, remaining); ++k) {
      cur[i] = k;
      self(self, i + 1, remaining - std::abs(k));
    }
  };
  rec(rec, 0, tier);
  std::sort(out.begin(), out.end(), [](const std::vector<int>& a, const std::vector<int>& b) {
    auto maxabs = [](const std::vector<int>& v) {
      int m = 0;
      for (int x : v) m = std::max(m, std::abs(x));
      return m;
    };
    const int ma = maxabs(a);
    const int mb = maxabs(b);
    if (ma != mb) return ma < mb;
    return a < b;
  });
  return out;
}

struct NegotiationResult {
  std::map<int, double> arrival_times;
  double total_deviation = 0.0;
  std::vector<AgentPlan> plans;  // in scenario agent order
};

/// Caches per-agent plans for each candidate arrival time.
class ArrivalPlanner {
 public:
  ArrivalPlanner(const Scenario& scenario, const JunctionSolveConfig& solver, double step)
      : scenario_(scenario), solver_(solver), step_(step) {}

  const AgentPlan* plan(std::size_t agent_index, int k) {
    auto key = std::make_pair(agent_index, k);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, compute(agent_index, k)).first;
    return it->second ? &*it->second : nullptr;
  }

  double arrival(std::size_t agent_index, int k) const {
    return scenario_.agents[agent_index].tf_nominal + step_ * k;
  }

 private:
  std::optional<AgentPlan> compute(std::size_t agent_index, int k) const {
    AgentSpec agent = scenario_.agents[agent_index];
    agent.tf_nominal = arrival(agent_index, k);
    if (!(agent.tf_nominal > agent.t0 + 2.0 * solver_.time_margin)) return std::nullopt;
    try {
      AgentPlan p = plan_agent(agent, scenario_, solver_);
      if (!p.report.converged) return std::nullopt;
      return p;
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  const Scenario& scenario_;
  JunctionSolveConfig solver_;
  double step_;
  std::map<std::pair<std::size_t, int>, std::optional<AgentPlan>> cache_;
};

/// Searches arrival-time deviations on the grid {0, +-step, ..., +-max} in
/// increasing total deviation and returns the first conflict-free choice.
inline NegotiationResult negotiate_arrival_times(const Scenario& scenario, const NegotiationConfig& config = {},
                                                 const JunctionSolveConfig& solver = {}) {
  config.validate();
  solver.validate();
  for (const auto& a : scenario.agents)
    if (a.goal.v.norm() != 0.0)
      throw Error(Errc::unsupported_scenario,
                  "agent " + std::to_string(a.id) + " has a nonzero goal velocity; arrival hold is undefined");

  const std::size_t n = scenario.agents.size();
  const int half = config.grid_half_width();
  ArrivalPlanner planner(scenario, solver, config.step);
  for (std::size_t i = 0; i < n; ++i)
    if (!planner.plan(i, 0))
      throw Error(Errc::planning_failure,
                  "agent " + std::to_string(scenario.agents[i].id) + " has no converged plan at its nominal arrival");

  for (int tier = 0; tier <= half * static_cast<int>(n); ++tier) {
    for (const auto& assignment : deviation_tier(n, half, tier)) {
      std::vector<AgentTrajectory> trajs;
      bool plannable = true;
      for (std::size_t i = 0; i < n && plannable; ++i) {
        const AgentPlan* p = planner.plan(i, assignment[i]);
        if (!p) {
          plannable = false;
          break;
        }
        trajs.push_back({scenario.agents[i].id, scenario.agents[i].radius, p->trajectory});
      }
      if (!plannable || !detect_conflicts(trajs, config.sample_count).empty()) continue;

      NegotiationResult result;
      for (std::size_t i = 0; i < n; ++i) {
        result.arrival_times[scenario.agents[i].id] = planner.arrival(i, assignment[i]);
        result.total_deviation += config.step * std::abs(assignment[i]);
        result.plans.push_back(*planner.plan(i, assignment[i]));
      }
      return result;
    }
  }
  throw Error(Errc::negotiation_failure, "no conflict-free arrival assignment within the deviation budget");
}

}  // namespace jplan
