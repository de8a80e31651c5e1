// jplan: command-line front end for scenario generation, planning,
// verification, oracle comparison and benchmarking.
//
// Exit codes: 0 success, 1 safety violation, 2 input/generation error,
// 3 planning failure, 4 oracle warning.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "jplan/jplan.hpp"

namespace fs = std::filesystem;
using namespace jplan;
using io::json;

namespace {

enum Exit : int { kOk = 0, kUnsafe = 1, kInput = 2, kPlanning = 3, kOracleWarning = 4 };

struct GlobalOptions {
  double tol = 1e-7;
  std::size_t samples = kDefaultSampleCount;
  std::size_t max_junctions = 8;
  double step = 0.5;
  double max_dev = 5.0;
  int oracle_steps = 2000;
  std::uint64_t seed = 0;
  std::string out = ".";

  JunctionSolveConfig solver() const {
    JunctionSolveConfig c;
    c.residual_tol = tol;
    c.sample_count = samples;
    c.max_junctions = max_junctions;
    return c;
  }
  NegotiationConfig negotiation() const {
    NegotiationConfig c;
    c.step = step;
    c.max_deviation = max_dev;
    c.sample_count = samples;
    return c;
  }
  OracleConfig oracle() const {
    OracleConfig c;
    c.steps = oracle_steps;
    return c;
  }
};

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string out_path(const GlobalOptions& g, const std::string& name) {
  fs::create_directories(g.out);
  return (fs::path(g.out) / name).string();
}

json conflicts_json(const std::vector<Conflict>& cs) {
  json out = json::array();
  for (const auto& c : cs)
    out.push_back({{"agents", {c.agent_a, c.agent_b}}, {"time", c.time}, {"penetration", c.penetration}});
  return out;
}

// ---------------------------------------------------------------------------

struct GenWorldArgs {
  int obstacles = 6;
  std::vector<double> bounds{0.0, 0.0, 20.0, 20.0};
  std::vector<std::string> agents;
  double agent_radius = 1.25;
  double t0 = 0.0;
  double tf = 10.0;
  double radius_min = 0.5;
  double radius_max = 2.5;
};

int cmd_gen_world(const GlobalOptions& g, const GenWorldArgs& a) {
  std::vector<AgentSpec> specs;
  std::vector<std::string> agent_args = a.agents;
  if (agent_args.empty()) agent_args = {"2,2,18,18", "2,18,18,2"};
  int id = 1;
  for (const auto& s : agent_args) {
    std::vector<double> xs;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) xs.push_back(std::stod(cell));
    if (xs.size() != 4) throw Error(Errc::parse, "--agent expects x0,y0,x1,y1");
    specs.push_back({id++, a.agent_radius, KinematicState::at_rest(xs[0], xs[1]), KinematicState::at_rest(xs[2], xs[3]),
                     a.t0, a.tf});
  }
  const Bounds bounds{a.bounds[0], a.bounds[1], a.bounds[2], a.bounds[3]};
  WorldGenOptions opts;
  opts.radius_min = a.radius_min;
  opts.radius_max = a.radius_max;
  const Scenario s = gen_world(g.seed, a.obstacles, bounds, specs, opts);
  const std::string path = out_path(g, "scenario.json");
  io::write_file(path, io::to_json(s).dump(2) + "\n");
  std::cout << path << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct AgentOutcome {
  std::optional<AgentPlan> plan;
  bool failed = false;
  std::string error;
  double wall_ms = 0.0;
};

AgentOutcome plan_one(const AgentSpec& agent, const Scenario& s, const JunctionSolveConfig& cfg) {
  AgentOutcome out;
  const auto start = Clock::now();
  try {
    out.plan = plan_agent(agent, s, cfg);
    out.failed = !out.plan->report.converged;
    if (out.failed) out.error = "junction solve did not converge";
  } catch (const PlanningFailure& e) {
    out.plan = e.best();
    out.plan->report.converged = false;
    out.failed = true;
    out.error = e.what();
  } catch (const Error& e) {
    out.failed = true;
    out.error = e.what();
  }
  out.wall_ms = elapsed_ms(start);
  return out;
}

std::vector<AgentOutcome> plan_all(const Scenario& s, const JunctionSolveConfig& cfg) {
  std::vector<std::future<AgentOutcome>> futures;
  for (const auto& a : s.agents) futures.push_back(std::async(std::launch::async, plan_one, a, std::cref(s), cfg));
  std::vector<AgentOutcome> out;
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

int cmd_plan(const GlobalOptions& g, const std::string& scenario_path, bool negotiate) {
  const Scenario s = io::load_scenario(scenario_path);
  const JunctionSolveConfig cfg = g.solver();
  std::vector<AgentOutcome> outcomes = plan_all(s, cfg);
  const bool all_ok = std::none_of(outcomes.begin(), outcomes.end(), [](const AgentOutcome& o) { return o.failed; });

  std::vector<Conflict> before;
  std::optional<NegotiationResult> negotiated;
  std::string negotiation_error;
  int exit_code = all_ok ? kOk : kPlanning;
  std::vector<AgentSpec> agents = s.agents;

  if (all_ok) {
    std::vector<AgentTrajectory> trajs;
    for (std::size_t i = 0; i < agents.size(); ++i)
      trajs.push_back({agents[i].id, agents[i].radius, outcomes[i].plan->trajectory});
    before = detect_conflicts(trajs, g.samples);
    if (!before.empty() && negotiate) {
      try {
        const auto start = Clock::now();
        negotiated = negotiate_arrival_times(s, g.negotiation(), cfg);
        const double ms = elapsed_ms(start);
        for (std::size_t i = 0; i < agents.size(); ++i) {
          agents[i].tf_nominal = negotiated->arrival_times.at(agents[i].id);
          outcomes[i].plan = negotiated->plans[i];
          outcomes[i].wall_ms += ms;
        }
      } catch (const Error& e) {
        negotiation_error = e.what();
        exit_code = kPlanning;
      }
    }
  }

  std::string csv = std::string(io::kCsvHeader) + "\n";
  json agents_json = json::array();
  std::vector<AgentTrajectory> final_trajs;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const AgentOutcome& o = outcomes[i];
    json entry;
    if (o.plan) {
      entry = io::to_json(o.plan->report);
      csv += io::trajectory_csv_rows(agents[i].id, o.plan->trajectory, g.samples);
      final_trajs.push_back({agents[i].id, agents[i].radius, o.plan->trajectory});
      if (!o.failed) {
        const Message msg = encode_message(agents[i], o.plan->report);
        io::write_file(out_path(g, "message_" + std::to_string(agents[i].id) + ".json"),
                       io::to_json(msg).dump(2) + "\n");
      }
    } else {
      entry = {{"converged", false}, {"residual", nullptr}, {"iterations", 0}, {"energy", nullptr},
               {"junctions", json::array()}};
    }
    entry["agent_id"] = agents[i].id;
    entry["junction_count"] = o.plan ? o.plan->report.junction_sequence.size() : 0;
    entry["wall_ms"] = o.wall_ms;
    entry["tf"] = agents[i].tf_nominal;
    if (!o.error.empty()) entry["error"] = o.error;
    agents_json.push_back(entry);
  }

  json report{{"agents", agents_json}, {"conflicts_before", conflicts_json(before)}};
  report["negotiation"] = negotiated ? io::to_json(*negotiated) : json(nullptr);
  if (negotiated) {
    report["negotiation_scope"] = "minimal total deviation on the arrival grid; not checked as a game equilibrium";
    io::write_file(out_path(g, "negotiation.json"), io::to_json(*negotiated).dump(2) + "\n");
  }
  if (!negotiation_error.empty()) report["negotiation_error"] = negotiation_error;
  report["conflicts_after"] = all_ok ? conflicts_json(detect_conflicts(final_trajs, g.samples)) : json::array();

  io::write_file(out_path(g, "trajectory.csv"), csv);
  io::write_file(out_path(g, "report.json"), report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return exit_code;
}

// ---------------------------------------------------------------------------

// Cubic Hermite interpolation through sampled (p, v); exact on a single
// cubic primitive. Boundary samples are held outside the sampled range.
Vec2 position_at(const std::vector<io::CsvRow>& rows, double t) {
  if (t <= rows.front().t) return rows.front().p;
  if (t >= rows.back().t) return rows.back().p;
  auto it = std::upper_bound(rows.begin(), rows.end(), t, [](double x, const io::CsvRow& r) { return x < r.t; });
  const io::CsvRow& b = *it;
  const io::CsvRow& a = *(it - 1);
  const double h = b.t - a.t;
  if (h <= 0.0) return b.p;
  const double s = (t - a.t) / h;
  const double h00 = 2 * s * s * s - 3 * s * s + 1;
  const double h10 = s * s * s - 2 * s * s + s;
  const double h01 = -2 * s * s * s + 3 * s * s;
  const double h11 = s * s * s - s * s;
  return h00 * a.p + h10 * h * a.v + h01 * b.p + h11 * h * b.v;
}

int cmd_check(const std::string& scenario_path, const std::string& csv_path) {
  const Scenario s = io::load_scenario(scenario_path);
  const auto rows = io::parse_csv(io::read_file(csv_path));
  std::map<int, std::vector<io::CsvRow>> by_agent;
  for (const auto& r : rows) by_agent[r.agent_id].push_back(r);
  for (auto& [id, rs] : by_agent) {
    (void)s.agent(id);
    std::stable_sort(rs.begin(), rs.end(), [](const io::CsvRow& a, const io::CsvRow& b) { return a.t < b.t; });
  }

  bool safe = true;
  json obstacle_worst = json::array();
  for (const auto& [id, rs] : by_agent) {
    const AgentSpec& agent = s.agent(id);
    double worst_margin = std::numeric_limits<double>::infinity();
    json worst = nullptr;
    for (const auto& r : rs)
      for (const auto& o : s.obstacles) {
        const double req = inflated_radius(o, agent);
        const double margin = (r.p - o.center).norm() - req;
        if (margin < worst_margin) {
          worst_margin = margin;
          worst = {{"agent", id}, {"obstacle", o.id}, {"time", r.t}, {"margin", margin}};
        }
        if (constraint_value(r.p, o.center, req) > kViolationTolerance) safe = false;
      }
    if (!worst.is_null()) obstacle_worst.push_back(worst);
  }

  json pair_worst = json::array();
  for (auto i = by_agent.begin(); i != by_agent.end(); ++i)
    for (auto j = std::next(i); j != by_agent.end(); ++j) {
      const double req = s.agent(i->first).radius + s.agent(j->first).radius;
      std::vector<double> times;
      for (const auto& r : i->second) times.push_back(r.t);
      for (const auto& r : j->second) times.push_back(r.t);
      std::sort(times.begin(), times.end());
      double worst_margin = std::numeric_limits<double>::infinity();
      double worst_t = 0.0;
      for (double t : times) {
        const Vec2 pa = position_at(i->second, t);
        const Vec2 pb = position_at(j->second, t);
        const double margin = (pa - pb).norm() - req;
        if (margin < worst_margin) worst_margin = margin, worst_t = t;
        if (constraint_value(pa, pb, req) > kViolationTolerance) safe = false;
      }
      pair_worst.push_back({{"agents", {i->first, j->first}}, {"time", worst_t}, {"margin", worst_margin}});
    }

  json verdict{{"safe", safe}, {"obstacle_margins", obstacle_worst}, {"pair_margins", pair_worst}};
  std::cout << verdict.dump(2) << "\n";
  return safe ? kOk : kUnsafe;
}

// ---------------------------------------------------------------------------

int cmd_oracle(const GlobalOptions& g, const std::string& scenario_path, int agent_id) {
  const Scenario s = io::load_scenario(scenario_path);
  const AgentSpec& agent = s.agent(agent_id);
  AgentOutcome o = plan_one(agent, s, g.solver());
  if (o.failed) {
    std::cerr << "planning failed: " << o.error << "\n";
    return kPlanning;
  }
  const DiscretePlan oracle = discrete_min_energy_constrained(agent, s, g.oracle());
  const double gap = compare(o.plan->trajectory, oracle);
  io::write_file(out_path(g, "oracle_" + std::to_string(agent_id) + ".csv"), io::oracle_csv(agent_id, oracle));
  json out{{"agent_id", agent_id},
           {"junction_energy", trajectory_energy(o.plan->trajectory)},
           {"oracle_cost", oracle.cost},
           {"gap", gap},
           {"oracle_steps", g.oracle_steps},
           {"oracle_max_penetration", oracle.max_penetration},
           {"oracle_warning", oracle.infeasibility_warning}};
  std::cout << out.dump(2) << "\n";
  return oracle.infeasibility_warning ? kOracleWarning : kOk;
}

// ---------------------------------------------------------------------------

json timing_stats(std::vector<double> ms) {
  json out{{"samples_ms", ms}};
  std::sort(ms.begin(), ms.end());
  const std::size_t n = ms.size();
  const double median = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
  out["min_ms"] = ms.front();
  out["median_ms"] = median;
  out["max_ms"] = ms.back();
  return out;
}

int cmd_bench(const GlobalOptions& g, const std::string& scenario_path, int repeat) {
  if (repeat < 1) throw Error(Errc::validation, "--repeat must be at least 1");
  const Scenario s = io::load_scenario(scenario_path);
  const JunctionSolveConfig cfg = g.solver();
  std::vector<double> unconstrained, junction, negotiation;
  bool negotiate = false;
  for (int r = 0; r < repeat; ++r) {
    auto start = Clock::now();
    for (const auto& a : s.agents) (void)solve_boundary(a.start, a.goal, a.t0, a.tf_nominal);
    unconstrained.push_back(elapsed_ms(start));

    start = Clock::now();
    std::vector<AgentTrajectory> trajs;
    for (const auto& a : s.agents) {
      AgentPlan p = plan_agent(a, s, cfg);
      if (!p.report.converged) throw Error(Errc::planning_failure, "agent " + std::to_string(a.id) + " did not converge");
      trajs.push_back({a.id, a.radius, std::move(p.trajectory)});
    }
    junction.push_back(elapsed_ms(start));

    if (r == 0) negotiate = !detect_conflicts(trajs, g.samples).empty();
    if (negotiate) {
      start = Clock::now();
      (void)negotiate_arrival_times(s, g.negotiation(), cfg);
      negotiation.push_back(elapsed_ms(start));
    }
  }
  json phases{{"unconstrained", timing_stats(unconstrained)}, {"junction", timing_stats(junction)}};
  phases["negotiation"] = negotiation.empty() ? json(nullptr) : timing_stats(negotiation);
  json out{{"repeat", repeat}, {"agents", s.agents.size()}, {"phases", phases}};
  std::cout << out.dump(2) << "\n";
  return kOk;
}

int exit_for(const Error& e) {
  switch (e.code()) {
    case Errc::planning_failure:
    case Errc::negotiation_failure:
    case Errc::conditioning:
      return kPlanning;
    default:
      return kInput;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Junction-parameterized multi-agent trajectory planner"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--tol", g.tol, "Junction residual tolerance")->capture_default_str();
  app.add_option("--samples", g.samples, "Uniform samples for feasibility checks and CSV output")->capture_default_str();
  app.add_option("--max-junctions", g.max_junctions, "Maximum constraint activations per agent")->capture_default_str();
  app.add_option("--step", g.step, "Arrival-time negotiation step (s)")->capture_default_str();
  app.add_option("--max-dev", g.max_dev, "Maximum arrival-time deviation (s)")->capture_default_str();
  app.add_option("--oracle-steps", g.oracle_steps, "Transcription oracle step count")->capture_default_str();
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  GenWorldArgs gw;
  auto* gen = app.add_subcommand("gen-world", "Generate a random sphere world")->fallthrough();
  gen->add_option("--obstacles", gw.obstacles, "Obstacle count")->capture_default_str();
  gen->add_option("--bounds", gw.bounds, "xmin ymin xmax ymax")->expected(4)->capture_default_str();
  gen->add_option("--agent", gw.agents, "Rest-to-rest agent x0,y0,x1,y1 (repeatable)");
  gen->add_option("--agent-radius", gw.agent_radius)->capture_default_str();
  gen->add_option("--t0", gw.t0)->capture_default_str();
  gen->add_option("--tf", gw.tf)->capture_default_str();
  gen->add_option("--radius-min", gw.radius_min)->capture_default_str();
  gen->add_option("--radius-max", gw.radius_max)->capture_default_str();

  std::string scenario_path;
  std::string csv_path;
  bool no_negotiate = false;
  auto* plan = app.add_subcommand("plan", "Plan every agent and negotiate arrival times on conflict")->fallthrough();
  plan->add_option("scenario", scenario_path)->required();
  plan->add_flag("--no-negotiate", no_negotiate, "Skip arrival-time negotiation");

  auto* check = app.add_subcommand("check", "Verify a trajectory CSV against a scenario")->fallthrough();
  check->add_option("scenario", scenario_path)->required();
  check->add_option("csv", csv_path)->required();

  int agent_id = 1;
  auto* oracle = app.add_subcommand("oracle", "Compare the junction plan with the transcription oracle")->fallthrough();
  oracle->add_option("scenario", scenario_path)->required();
  oracle->add_option("--agent", agent_id)->capture_default_str();

  int repeat = 10;
  auto* bench = app.add_subcommand("bench", "Time the planning phases")->fallthrough();
  bench->add_option("scenario", scenario_path)->required();
  bench->add_option("--repeat", repeat)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }

  try {
    if (*gen) return cmd_gen_world(g, gw);
    if (*plan) return cmd_plan(g, scenario_path, !no_negotiate);
    if (*check) return cmd_check(scenario_path, csv_path);
    if (*oracle) return cmd_oracle(g, scenario_path, agent_id);
    if (*bench) return cmd_bench(g, scenario_path, repeat);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  }
  return kInput;
}
