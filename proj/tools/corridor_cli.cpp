#include "corridor/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace corridor;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kNotConverged = 2;

struct Common {
  std::string scenario;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
  cmd->add_option("--scenario,-s", c.scenario, "Scenario JSON file")->required();
  cmd->add_option("--set", c.overrides, "Override a scenario field, e.g. --set solver.max_iter=50 (repeatable)");
  if (with_out) {
    cmd->add_option("--out,-o", c.out,
                    "Output directory (default: $CORRIDOR_OUT/<command>-<scenario>, else ./out/<command>-<scenario>)");
  }
}

Scenario load(const Common& c) {
  std::ifstream in(c.scenario);
  if (!in) throw InputError("cannot open scenario file '" + c.scenario + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(c.scenario + ": " + e.what());
  }
  for (const auto& o : c.overrides) apply_override(doc, o);
  return parse_scenario(doc);
}

fs::path output_dir(const Common& c, const std::string& command, const Scenario& s) {
  if (!c.out.empty()) return c.out;
  const char* root = std::getenv("CORRIDOR_OUT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("out");
  return base / (command + "-" + s.name);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunManifest manifest_for(const std::string& command, const Common& c, const fs::path& dir,
                         std::vector<std::string> args) {
  RunManifest m;
  m.command = command;
  m.scenario_path = c.scenario;
  m.overrides = c.overrides;
  m.arguments = std::move(args);
  m.output_dir = dir;
  return m;
}

void write_resolved_scenario(const fs::path& dir, const Scenario& s) {
  fs::create_directories(dir);
  std::ofstream(dir / "scenario.json", std::ios::binary) << to_json(s).dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal corridor equilibrium (MFD + transit queues + tradable credits) and policy search"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common run_c;
  std::string run_policy;
  bool run_trace = false;
  auto* run = app.add_subcommand("run-equilibrium", "Solve one equilibrium and write shares, network, waits, market");
  add_common(run, run_c);
  run->add_option("--policy,-p", run_policy, "Policy override, e.g. k=50,tau=64,xi=5");
  run->add_flag("--trace", run_trace, "Print the residual norm of every iteration to stderr");

  Common sweep_c;
  std::string sweep_grid;
  std::string sweep_weights;
  int jobs = 1;
  bool sweep_wait = false;
  auto* sweep = app.add_subcommand("sweep", "Grid search over (k, tau, xi)");
  add_common(sweep, sweep_c);
  sweep->add_option("--grid,-g", sweep_grid, "Ranges, e.g. k=50:58:2,tau=64:72:2,xi=4:10:1 (default: scenario bilevel)");
  sweep->add_option("--jobs,-j", jobs, "Worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--weights,-w", sweep_weights, "Objective weights, e.g. tt=1,em=1,as=0.5,cp=0.05");
  sweep->add_flag("--include-waiting", sweep_wait, "Add station waiting time to the travel-time term");

  Common cmp_c;
  std::string cmp_policy;
  std::string cmp_weights;
  std::array<std::string, 4> cmp_quadrant;
  bool cmp_wait = false;
  auto* cmp = app.add_subcommand("compare-policies", "No policy / TCS only / DRAS only / TCS + DRAS table");
  add_common(cmp, cmp_c);
  cmp->add_option("--policy,-p", cmp_policy, "Combined policy spanning the quadrants (default: scenario policy)");
  cmp->add_option("--baseline", cmp_quadrant[0], "Override the no-policy quadrant");
  cmp->add_option("--tcs", cmp_quadrant[1], "Override the TCS-only quadrant");
  cmp->add_option("--dras", cmp_quadrant[2], "Override the DRAS-only quadrant");
  cmp->add_option("--combined", cmp_quadrant[3], "Override the combined quadrant");
  cmp->add_option("--weights,-w", cmp_weights, "Objective weights, e.g. tt=1,em=1,as=0.5,cp=0.05");
  cmp->add_flag("--include-waiting", cmp_wait, "Add station waiting time to the travel-time term");

  Common val_c;
  std::string canonical;
  auto* val = app.add_subcommand("validate-scenario", "Check a scenario file and print a summary");
  add_common(val, val_c, false);
  val->add_option("--canonical", canonical, "Also write the fully resolved scenario to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInputError;
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();

    if (*run) {
      const Scenario s = load(run_c);
      const PolicyParams policy = run_policy.empty() ? s.policy : parse_policy(run_policy, s.policy);
      validate(policy);
      const fs::path dir = output_dir(run_c, "run-equilibrium", s);
      IterationObserver observer;
      if (run_trace) {
        observer = [](int it, const ForwardPass<double>& f) {
          std::cerr << "iter " << it << "  |F| " << format_number(f.residual.norm()) << "  p "
                    << format_number(f.price) << "\n";
        };
      }
      const auto r = solve_equilibrium(s, policy, std::nullopt, s.solver, observer);
      const double solve_s = seconds_since(t0);
      write_resolved_scenario(dir, s);
      write_equilibrium_outputs(dir, s, r);
      auto m = manifest_for("run-equilibrium", run_c, dir, {"policy=" + run_policy});
      m.timings = {{"solve", solve_s}, {"total", seconds_since(t0)}};
      write_manifest(m);
      std::cout << r.status << ": k=" << policy.k << " tau=" << policy.tau << " xi=" << policy.xi
                << "  iterations " << r.iterations << "  |F| " << format_number(r.residual_norm) << "  price "
                << format_number(r.decision(DecisionLayout(s).price())) << "\n";
      for (const auto& w : r.warnings) std::cout << "warning: " << w << "\n";
      std::cout << "outputs in " << dir.string() << "\n";
      return r.converged ? kOk : kNotConverged;
    }

    if (*sweep) {
      const Scenario s = load(sweep_c);
      const GridSpec base{s.bilevel.k_values, s.bilevel.tau_values, s.bilevel.xi_values};
      const GridSpec g = sweep_grid.empty() ? base : parse_grid(sweep_grid, base);
      if (g.k_values.empty() || g.tau_values.empty() || g.xi_values.empty()) {
        throw InputError("no grid given and the scenario has no complete bilevel ranges");
      }
      const auto w = sweep_weights.empty() ? s.bilevel.weights : parse_weights(sweep_weights, s.bilevel.weights);
      const bool include_waiting = sweep_wait || s.bilevel.include_waiting;
      const fs::path dir = output_dir(sweep_c, "sweep", s);
      const auto result = grid_search(s, g.k_values, g.tau_values, g.xi_values, w, include_waiting, s.solver, jobs);
      const double solve_s = seconds_since(t0);
      write_resolved_scenario(dir, s);
      sweep_table(result).write(dir / "sweep.csv");
      std::ofstream(dir / "sweep_summary.json", std::ios::binary) << sweep_summary(result).dump(2) << "\n";
      auto m = manifest_for("sweep", sweep_c, dir,
                            {"grid=" + sweep_grid, "weights=" + sweep_weights,
                             std::string("include_waiting=") + (include_waiting ? "1" : "0")});
      m.timings = {{"solve", solve_s}, {"total", seconds_since(t0)}, {"jobs", static_cast<double>(jobs)}};
      write_manifest(m);
      int failed = 0;
      for (const auto& p : result.points) failed += !p.converged;
      std::cout << result.points.size() << " points, " << failed << " not converged\n";
      if (result.optimum) {
        const auto& p = result.points[*result.optimum];
        std::cout << "optimum: k=" << p.policy.k << " tau=" << p.policy.tau << " (d_max "
                  << format_number(100.0 * p.d_max()) << "%) xi=" << p.policy.xi << "  objective "
                  << format_number(p.total) << "  price " << format_number(p.price) << "\n";
      } else {
        std::cout << "no feasible converged point\n";
      }
      std::cout << "outputs in " << dir.string() << "\n";
      return failed == 0 ? kOk : kNotConverged;
    }

    if (*cmp) {
      const Scenario s = load(cmp_c);
      const PolicyParams combined = cmp_policy.empty() ? s.policy : parse_policy(cmp_policy, s.policy);
      Quadrants q = quadrants_of(combined);
      for (int k = 0; k < 4; ++k) {
        if (!cmp_quadrant[k].empty()) q[k] = parse_policy(cmp_quadrant[k], q[k]);
      }
      const auto w = cmp_weights.empty() ? s.bilevel.weights : parse_weights(cmp_weights, s.bilevel.weights);
      const bool include_waiting = cmp_wait || s.bilevel.include_waiting;
      const fs::path dir = output_dir(cmp_c, "compare-policies", s);
      const auto rows = compare_policies(s, q, w, include_waiting, s.solver);
      const double solve_s = seconds_since(t0);
      write_resolved_scenario(dir, s);
      comparison_table(rows).write(dir / "comparison.csv");
      auto m = manifest_for("compare-policies", cmp_c, dir,
                            {"policy=" + cmp_policy, "weights=" + cmp_weights,
                             std::string("include_waiting=") + (include_waiting ? "1" : "0")});
      m.timings = {{"solve", solve_s}, {"total", seconds_since(t0)}};
      write_manifest(m);
      std::cout << format_comparison(rows) << "outputs in " << dir.string() << "\n";
      bool all = true;
      for (const auto& r : rows) all = all && r.point.converged;
      return all ? kOk : kNotConverged;
    }

    if (*val) {
      const Scenario s = load(val_c);
      std::cout << "scenario '" << s.name << "' is valid: " << s.station_count() << " stations, " << s.od_count()
                << " OD pairs, " << s.interval_count() << " intervals of " << format_number(s.grid.step)
                << " s, demand " << format_number(s.total_demand()) << "\n";
      if (!canonical.empty()) {
        std::ofstream out(canonical, std::ios::binary);
        if (!out) throw InputError("cannot write " + canonical);
        out << to_json(s).dump(2) << "\n";
      }
      return kOk;
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kOk;
}
