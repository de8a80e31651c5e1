#pragma once

// JSON and CSV formats shared by the CLI and tests.

#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jplan/game.hpp"
#include "jplan/junction_solver.hpp"
#include "jplan/oracle.hpp"
#include "jplan/world.hpp"

namespace jplan::io {

using json = nlohmann::json;

namespace detail {

inline void require_keys(const json& j, const std::set<std::string>& keys, const char* what) {
  if (!j.is_object()) throw Error(Errc::parse, std::string(what) + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!keys.count(it.key())) throw Error(Errc::parse, std::string("unknown field '") + it.key() + "' in " + what);
  for (const auto& k : keys)
    if (!j.contains(k)) throw Error(Errc::parse, std::string("missing field '") + k + "' in " + what);
}

inline double number(const json& j, const char* what) {
  if (!j.is_number()) throw Error(Errc::parse, std::string(what) + " must be a number");
  return j.get<double>();
}

inline int integer(const json& j, const char* what) {
  if (!j.is_number_integer()) throw Error(Errc::parse, std::string(what) + " must be an integer");
  return j.get<int>();
}

inline Vec2 vec2(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw Error(Errc::parse, std::string(what) + " must be a 2-element array");
  return {number(j[0], what), number(j[1], what)};
}

inline json to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

}  // namespace detail

inline json to_json(const KinematicState& x) { return {{"p", detail::to_json(x.p)}, {"v", detail::to_json(x.v)}}; }

inline KinematicState state_from_json(const json& j) {
  detail::require_keys(j, {"p", "v"}, "state");
  return {detail::vec2(j["p"], "p"), detail::vec2(j["v"], "v")};
}

inline json to_json(const Scenario& s) {
  json agents = json::array();
  for (const auto& a : s.agents)
    agents.push_back({{"id", a.id},
                      {"radius", a.radius},
                      {"start", to_json(a.start)},
                      {"goal", to_json(a.goal)},
                      {"t0", a.t0},
                      {"tf", a.tf_nominal}});
  json obstacles = json::array();
  for (const auto& o : s.obstacles)
    obstacles.push_back({{"id", o.id}, {"center", detail::to_json(o.center)}, {"radius", o.radius}});
  return {{"agents", agents}, {"obstacles", obstacles}};
}

/// Strict parse: unknown or missing fields are errors. The result is validated.
inline Scenario scenario_from_json(const json& j) {
  detail::require_keys(j, {"agents", "obstacles"}, "scenario");
  if (!j["agents"].is_array() || !j["obstacles"].is_array())
    throw Error(Errc::parse, "agents and obstacles must be arrays");
  Scenario s;
  for (const auto& ja : j["agents"]) {
    detail::require_keys(ja, {"id", "radius", "start", "goal", "t0", "tf"}, "agent");
    AgentSpec a;
    a.id = detail::integer(ja["id"], "agent id");
    a.radius = detail::number(ja["radius"], "agent radius");
    a.start = state_from_json(ja["start"]);
    a.goal = state_from_json(ja["goal"]);
    a.t0 = detail::number(ja["t0"], "t0");
    a.tf_nominal = detail::number(ja["tf"], "tf");
    s.agents.push_back(a);
  }
  for (const auto& jo : j["obstacles"]) {
    detail::require_keys(jo, {"id", "center", "radius"}, "obstacle");
    s.obstacles.push_back({detail::integer(jo["id"], "obstacle id"), detail::vec2(jo["center"], "center"),
                           detail::number(jo["radius"], "obstacle radius")});
  }
  validate_scenario(s);
  return s;
}

inline json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse, e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::parse, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::parse, "cannot write " + path);
  out << content;
}

inline Scenario load_scenario(const std::string& path) { return scenario_from_json(parse_text(read_file(path))); }

inline json to_json(const Junction& j) { return {{"obstacle", j.obstacle_id}, {"theta", j.theta}, {"time", j.time}}; }

inline Junction junction_from_json(const json& j) {
  detail::require_keys(j, {"obstacle", "theta", "time"}, "junction");
  return {detail::integer(j["obstacle"], "obstacle"), detail::number(j["theta"], "theta"),
          detail::number(j["time"], "time")};
}

inline json junctions_to_json(const std::vector<Junction>& js) {
  json out = json::array();
  for (const auto& j : js) out.push_back(to_json(j));
  return out;
}

inline json to_json(const SolveReport& r) {
  return {{"converged", r.converged},
          {"residual", r.residual_norm},
          {"iterations", r.iterations},
          {"energy", r.energy},
          {"junctions", junctions_to_json(r.junction_sequence)}};
}

inline SolveReport report_from_json(const json& j) {
  detail::require_keys(j, {"converged", "residual", "iterations", "energy", "junctions"}, "report");
  SolveReport r;
  r.converged = j["converged"].get<bool>();
  r.residual_norm = detail::number(j["residual"], "residual");
  r.iterations = detail::integer(j["iterations"], "iterations");
  r.energy = detail::number(j["energy"], "energy");
  for (const auto& jj : j["junctions"]) r.junction_sequence.push_back(junction_from_json(jj));
  return r;
}

inline json to_json(const Message& m) {
  return {{"agent_id", m.agent_id}, {"t0", m.t0},     {"tf", m.tf}, {"start", to_json(m.start)},
          {"goal", to_json(m.goal)}, {"junctions", junctions_to_json(m.junctions)}};
}

inline Message message_from_json(const json& j) {
  detail::require_keys(j, {"agent_id", "t0", "tf", "start", "goal", "junctions"}, "message");
  Message m;
  m.agent_id = detail::integer(j["agent_id"], "agent_id");
  m.t0 = detail::number(j["t0"], "t0");
  m.tf = detail::number(j["tf"], "tf");
  m.start = state_from_json(j["start"]);
  m.goal = state_from_json(j["goal"]);
  if (!j["junctions"].is_array()) throw Error(Errc::parse, "junctions must be an array");
  for (const auto& jj : j["junctions"]) m.junctions.push_back(junction_from_json(jj));
  return m;
}

inline json to_json(const Payoff& p) { return p.is_finite() ? json(p.value()) : json("infeasible"); }

inline Payoff payoff_from_json(const json& j) {
  if (j.is_string() && j.get<std::string>() == "infeasible") return Payoff::infeasible();
  return Payoff::finite(detail::number(j, "payoff"));
}

inline json to_json(const NegotiationResult& r) {
  json times = json::object();
  for (const auto& [id, tf] : r.arrival_times) times[std::to_string(id)] = tf;
  return {{"arrival_times", times}, {"total_deviation", r.total_deviation}};
}

// ---------------------------------------------------------------------------
// Trajectory CSV: agent_id,t,px,py,vx,vy,ux,uy with an optional trailing
// source column.

inline constexpr const char* kCsvHeader = "agent_id,t,px,py,vx,vy,ux,uy";

struct CsvRow {
  int agent_id = 0;
  double t = 0.0;
  Vec2 p{Vec2::Zero()};
  Vec2 v{Vec2::Zero()};
  Vec2 u{Vec2::Zero()};
  std::string source;
};

inline std::string format_row(int agent_id, double t, const Evaluation& e, const char* source = nullptr) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", agent_id, t, e.p.x(), e.p.y(),
                e.v.x(), e.v.y(), e.u.x(), e.u.y());
  std::string row(buf);
  if (source) row += std::string(",") + source;
  return row + "\n";
}

inline std::string trajectory_csv_rows(int agent_id, const PiecewiseTrajectory& traj, std::size_t samples) {
  std::string out;
  for (double t : uniform_times(traj.t_start(), traj.t_end(), samples))
    out += format_row(agent_id, t, eval_trajectory(traj, t));
  return out;
}

/// Discrete plan rows: state at each step boundary with the control applied
/// over the following step (the last row repeats the final control).
inline std::string oracle_csv(int agent_id, const DiscretePlan& plan) {
  std::string out = std::string(kCsvHeader) + ",source\n";
  for (std::size_t k = 0; k < plan.states.size(); ++k) {
    const Vec2 u = plan.controls[std::min(k, plan.controls.size() - 1)];
    const double t = plan.t0 + plan.dt * static_cast<double>(k);
    out += format_row(agent_id, t, {plan.states[k].p, plan.states[k].v, u}, "oracle");
  }
  return out;
}

inline std::vector<CsvRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::parse, "empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool with_source = false;
  if (line == std::string(kCsvHeader) + ",source")
    with_source = true;
  else if (line != kCsvHeader)
    throw Error(Errc::parse, "unexpected CSV header: " + line);

  std::vector<CsvRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::size_t expected = with_source ? 9 : 8;
    if (cells.size() != expected) throw Error(Errc::parse, "CSV line " + std::to_string(lineno) + ": wrong column count");
    CsvRow r;
    try {
      std::size_t used = 0;
      r.agent_id = std::stoi(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("agent_id");
      double vals[7];
      for (int c = 0; c < 7; ++c) {
        vals[c] = std::stod(cells[static_cast<std::size_t>(c) + 1], &used);
        if (used != cells[static_cast<std::size_t>(c) + 1].size()) throw std::invalid_argument("number");
      }
      r.t = vals[0];
      r.p = {vals[1], vals[2]};
      r.v = {vals[3], vals[4]};
      r.u = {vals[5], vals[6]};
    } catch (const std::exception&) {
      throw Error(Errc::parse, "CSV line " + std::to_string(lineno) + ": malformed number");
    }
    if (with_source) r.source = cells[8];
    rows.push_back(r);
  }
  return rows;
}

}  // namespace jplan::io
