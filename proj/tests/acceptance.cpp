// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any fails.

#include "corridor/io.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace corridor;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Report {
  int failures = 0;

  void line(int id, bool ok, const std::string& detail) {
    std::cout << "AC" << id << " " << (ok ? "PASS" : "FAIL") << "  " << detail << std::endl;
    if (!ok) ++failures;
  }
};

// Certification and operational checks over every equilibrium solved here.
struct Audit {
  int equilibria = 0;
  int converged = 0;
  std::vector<std::string> certification_failures;
  std::vector<std::string> invariant_violations;

  void add(const Scenario& s, const EquilibriumResult& r, const std::string& tag) {
    ++equilibria;
    const DecisionLayout L(s);
    const auto snap = snapshot(s, r.policy, r.decision, s.solver.price_cap);
    const auto shares = snap.pass.shares;
    for (const auto& v : check_operational_invariants(s, snap.supply, shares[1], shares[2])) {
      invariant_violations.push_back(tag + ": " + v);
    }
    if (!r.converged) return;
    ++converged;
    const auto& c = r.certification;
    const double supply = c.market.supply;
    const bool ok = c.residual_norm <= 1e-5 && c.max_share_sum_error <= 1e-4 &&
                    c.complementarity <= 1e-6 * supply && c.market.residual >= -1e-6 * supply;
    if (!ok) certification_failures.push_back(tag);
  }

  void add(const Scenario& s, const PolicyPoint& p) {
    const auto& q = p.policy;
    add(s, p.equilibrium,
        s.name + " k=" + std::to_string(q.k) + " tau=" + std::to_string(q.tau) + " xi=" + std::to_string(q.xi));
  }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// AC1: waiting areas against the per-passenger oracle.
void queue_oracle(Report& rep) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  int instances = 0;
  for (; instances < 50; ++instances) {
    const auto q = testing::random_queue_instance(rng, instances % 2 == 1);
    const auto a = testing::curve_of(q);
    const auto S = serve_events<double>(a, q.events, a.horizon());
    for (int m = 1; m <= a.interval_count(); ++m) {
      const double w = waiting_area(a, S, m);
      const double o = testing::oracle_waiting(q.cumulative, q.step, q.events, m, 1.0);
      worst = std::max(worst, testing::relative_error(w, o));
    }
  }
  const double t = seconds_since(t0);
  rep.line(1, worst <= 1e-6 && t < 10.0,
           std::to_string(instances) + " instances, max rel err " + fmt(worst) + ", " + fmt(t, 3) + " s");
}

// AC3: merit gradient against central differences, timelines frozen.
void gradient_contract(Report& rep) {
  const auto t0 = Clock::now();
  const auto s = load_scenario(testing::scenario_path("tiny.json"));
  const DecisionLayout L(s);
  const double cap = s.solver.price_cap;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::uniform_real_distribution<double> price(0.0, 3.0);
  double worst = 0.0;
  for (int point = 0; point < 20; ++point) {
    PerMode<double> shares;
    for (auto& m : shares) m = Matrix::Zero(L.ods, L.intervals);
    for (int i = 0; i < L.ods; ++i) {
      for (int m = 0; m < L.intervals; ++m) {
        const double a = u(rng), b = u(rng), c = u(rng);
        shares[0](i, m) = a / (a + b + c);
        shares[1](i, m) = b / (a + b + c);
        shares[2](i, m) = c / (a + b + c);
      }
    }
    const Vector v = pack(L, shares, price(rng));
    const auto supply = propagate_supply(s, s.policy, v);
    const Vector g = merit_gradient(s, s.policy, v, supply, cap);
    Vector fd(L.size());
    const double h = 1e-6;
    for (int k = 0; k < L.size(); ++k) {
      Vector up = v, dn = v;
      up(k) += h;
      dn(k) -= h;
      fd(k) = (merit(s, s.policy, up, supply, cap) - merit(s, s.policy, dn, supply, cap)) / (2 * h);
    }
    worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-12));
  }
  const double t = seconds_since(t0);
  rep.line(3, worst <= 0.02 && t < 60.0, "20 points, max rel err " + fmt(worst) + ", " + fmt(t, 3) + " s");
}

// AC4-6 on the 5x5 single-OD grid.
void single_od_grid(Report& rep, Audit& audit) {
  const auto s = load_scenario(testing::scenario_path("a10_single_od.json"));
  const auto& b = s.bilevel;
  const auto t0 = Clock::now();
  const auto g = grid_search(s, b.k_values, b.tau_values, b.xi_values, b.weights, b.include_waiting, s.solver, 8);
  const double t = seconds_since(t0);
  for (const auto& p : g.points) audit.add(s, p);

  std::map<std::pair<int, int>, const PolicyPoint*> at;
  bool all_converged = true;
  for (const auto& p : g.points) {
    at[{p.policy.tau, p.policy.k}] = &p;
    all_converged = all_converged && p.converged;
  }

  const auto base = evaluate_policy(s, PolicyParams{0, 0, b.xi_values.front()}, b.weights, false, std::nullopt,
                                    s.solver);
  audit.add(s, base);

  {
    bool ok = all_converged;
    std::string detail = "baseline car share " + fmt(base.mode_share[0]);
    for (int k : {54, 56}) {
      const auto* p = at.at({64, k});
      ok = ok && p->converged && p->price <= 1e-9 && p->d_max() >= base.mode_share[0];
      detail += "; k=" + std::to_string(k) + " d_max " + fmt(p->d_max()) + " p=" + fmt(p->price);
    }
    rep.line(4, ok, detail);
  }

  bool prices_ok = all_converged;
  bool waits_ok = all_converged;
  std::string price_detail;
  std::string wait_detail;
  for (int tau : b.tau_values) {
    price_detail += " tau=" + std::to_string(tau) + ":";
    wait_detail += " tau=" + std::to_string(tau) + ":";
    for (std::size_t j = 0; j < b.k_values.size(); ++j) {
      const auto* p = at.at({tau, b.k_values[j]});
      price_detail += " " + fmt(p->price, 3);
      wait_detail += " " + fmt(p->waiting_hours * 3600.0, 5);
      if (j == 0) continue;
      const auto* prev = at.at({tau, b.k_values[j - 1]});
      // Larger k means larger d_max.
      prices_ok = prices_ok && p->price <= prev->price + 1e-6;
      waits_ok = waits_ok && prev->waiting_hours >= p->waiting_hours * (1.0 - 0.005);
    }
  }
  rep.line(5, prices_ok && t < 1800.0,
           std::to_string(g.points.size()) + " points in " + fmt(t, 3) + " s; prices by k" + price_detail);
  rep.line(6, waits_ok, "waiting pax-s by k" + wait_detail);
}

// AC7: shares in the congested period with operational modules off and on.
void operational_contrast(Report& rep, Audit& audit) {
  auto on = load_scenario(testing::scenario_path("a10_single_od.json"));
  const PolicyParams policy = on.policy;
  auto off = on;
  off.params.operational_features = false;

  const auto r_off = solve_equilibrium(off, policy, std::nullopt, off.solver);
  const auto r_on = solve_equilibrium(on, policy, std::nullopt, on.solver);
  audit.add(on, r_on, "operational features on");

  const auto p_off = snapshot(off, policy, r_off.decision, off.solver.price_cap).pass;
  const auto p_on = snapshot(on, policy, r_on.decision, on.solver.price_cap).pass;

  // Congested cohorts: the whole trip runs below every mode's speed cap, so
  // all modes share one travel time.
  auto congested = [](const ForwardPass<double>& f, int i, int m) {
    return std::abs(f.travel_time[0](i, m) - f.travel_time[2](i, m)) <= 1e-9 * f.travel_time[0](i, m);
  };

  int n_off = 0;
  double off_dev = 0.0;
  int n_on = 0;
  bool car_leads = true;
  double min_lead = std::numeric_limits<double>::infinity();
  for (int i = 0; i < on.od_count(); ++i) {
    for (int m = 0; m < on.interval_count(); ++m) {
      if (on.demand(i, m) <= 0.0) continue;
      if (congested(p_off, i, m)) {
        ++n_off;
        for (int u = 0; u < 3; ++u) off_dev = std::max(off_dev, std::abs(p_off.shares[u](i, m) - 1.0 / 3.0));
      }
      if (congested(p_on, i, m)) {
        ++n_on;
        const double lead = p_on.shares[0](i, m) - std::max(p_on.shares[1](i, m), p_on.shares[2](i, m));
        min_lead = std::min(min_lead, lead);
        car_leads = car_leads && lead > 0.0;
      }
    }
  }
  const bool ok = r_off.converged && r_on.converged && n_off > 0 && n_on > 0 && off_dev <= 0.02 && car_leads;
  rep.line(7, ok,
           "off: " + std::to_string(n_off) + " congested cohorts, max |share - 1/3| " + fmt(off_dev) + "; on: " +
               std::to_string(n_on) + " congested cohorts, min car lead " + fmt(min_lead));
}

// AC8: the four policy quadrants on the multi-OD scenario.
void quadrant_ordering(Report& rep, Audit& audit) {
  const auto s = load_scenario(testing::scenario_path("a10_multi_od.json"));
  const auto rows = compare_policies(s, quadrants_of(s.policy), s.bilevel.weights, s.bilevel.include_waiting,
                                     s.solver);
  for (const auto& r : rows) audit.add(s, r.point);
  const auto& none = rows[0].point;
  const auto& tcs = rows[1].point;
  const auto& dras = rows[2].point;
  const auto& both = rows[3].point;
  const bool converged = none.converged && tcs.converged && dras.converged && both.converged;
  const bool lowest = both.total <= std::min({none.total, tcs.total, dras.total});
  const double slack = 1e-6;
  const bool shares = none.mode_share[0] > dras.mode_share[0] && dras.mode_share[0] > tcs.mode_share[0] &&
                      tcs.mode_share[0] >= both.mode_share[0] - slack;
  std::string detail = "xi=" + std::to_string(s.policy.xi) + " d_max=" + fmt(s.policy.d_max()) + ";";
  for (const auto& r : rows) {
    detail += " " + r.label + ": obj " + fmt(r.point.total, 8) + " car " + fmt(r.point.mode_share[0]) + ";";
  }
  rep.line(8, converged && lowest && shares, detail);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Files of an output directory except the manifest, which records timings.
std::map<std::string, std::string> outputs_of(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename() == "manifest.json") continue;
    out[e.path().filename().string()] = read_file(e.path());
  }
  return out;
}

// AC10: sweeps identical across job counts and repeated runs.
void determinism(Report& rep) {
  const auto s = load_scenario(testing::scenario_path("a10_single_od.json"));
  const auto& b = s.bilevel;
  auto table = [&](int jobs) {
    return sweep_table(grid_search(s, b.k_values, b.tau_values, b.xi_values, b.weights, b.include_waiting, s.solver,
                                   jobs))
        .str();
  };
  const std::string one = table(1);
  const bool library = one == table(8) && one == table(8);

  const fs::path root = fs::temp_directory_path() / "corridor_acceptance";
  fs::remove_all(root);
  auto run = [&](const std::string& name, int jobs) {
    const fs::path dir = root / name;
    const std::string cmd = std::string("\"") + CORRIDOR_CLI + "\" sweep -s \"" +
                            testing::scenario_path("a10_single_od.json").string() + "\" -j " + std::to_string(jobs) +
                            " -o \"" + dir.string() + "\" > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return std::make_pair(rc, rc == 0 ? outputs_of(dir) : std::map<std::string, std::string>{});
  };
  const auto a = run("jobs1", 1);
  const auto b8 = run("jobs8", 8);
  const auto again = run("jobs8_again", 8);
  const bool cli = a.first == 0 && b8.first == 0 && again.first == 0 && !a.second.empty() &&
                   a.second == b8.second && b8.second == again.second;
  fs::remove_all(root);
  rep.line(10, library && cli,
           std::string("library sweep tables ") + (library ? "identical" : "differ") + "; CLI outputs (" +
               std::to_string(a.second.size()) + " files) " + (cli ? "identical" : "differ"));
}

// Extra equilibria for the certification audit: tiny instance policies.
void tiny_runs(Audit& audit) {
  const auto s = load_scenario(testing::scenario_path("tiny.json"));
  for (const auto& p : std::vector<PolicyParams>{{0, 0, 0}, {0, 0, 2}, {3, 5, 2}, {1, 5, 2}, {5, 5, 3}}) {
    audit.add(s, solve_equilibrium(s, p, std::nullopt, s.solver), "tiny");
  }
}

}  // namespace

int main() {
  Report rep;
  Audit audit;
  try {
    queue_oracle(rep);
    tiny_runs(audit);
    gradient_contract(rep);
    single_od_grid(rep, audit);
    operational_contrast(rep, audit);
    quadrant_ordering(rep, audit);
    rep.line(2, audit.converged > 0 && audit.certification_failures.empty(),
             std::to_string(audit.converged) + " of " + std::to_string(audit.equilibria) +
                 " equilibria converged, " + std::to_string(audit.certification_failures.size()) +
                 " failed certification" +
                 (audit.certification_failures.empty() ? "" : " (first: " + audit.certification_failures[0] + ")"));
    rep.line(9, audit.invariant_violations.empty(),
             std::to_string(audit.invariant_violations.size()) + " violations over " +
                 std::to_string(audit.equilibria) + " equilibria" +
                 (audit.invariant_violations.empty() ? "" : " (first: " + audit.invariant_violations[0] + ")"));
    determinism(rep);
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 2;
  }
  std::cout << (rep.failures == 0 ? "ALL PASS" : std::to_string(rep.failures) + " FAILED") << std::endl;
  return rep.failures == 0 ? 0 : 1;
}
