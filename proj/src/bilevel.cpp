#include "corridor/bilevel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

namespace corridor {

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || count <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

// Moves a decision vector from another policy onto this policy's modes:
// unavailable shares are dropped and the rest renormalized.
Vector adapt_start(const Scenario& s, const PolicyParams& policy, const Vector& from) {
  const DecisionLayout L(s);
  const auto avail = mode_availability(s, policy);
  auto shares = unpack_shares<double>(L, from);
  const Vector uniform = uniform_start(s, policy);
  const auto fallback = unpack_shares<double>(L, uniform);
  for (int i = 0; i < L.ods; ++i) {
    for (int m = 0; m < L.intervals; ++m) {
      double total = 0.0;
      for (int u = 0; u < 3; ++u) {
        if (!avail[u](i, m)) shares[u](i, m) = 0.0;
        total += shares[u](i, m) = std::max(shares[u](i, m), 0.0);
      }
      for (int u = 0; u < 3; ++u) {
        shares[u](i, m) = total > 1e-9 ? shares[u](i, m) / total : fallback[u](i, m);
      }
    }
  }
  return pack(L, shares, policy.tcs_active() ? from(L.price()) : 0.0);
}

}  // namespace

PolicyPoint price_equilibrium(const Scenario& s, EquilibriumResult eq, const ObjectiveWeights& w,
                              bool include_waiting, double price_cap) {
  const auto& prm = s.params;
  const DecisionLayout L(s);
  PolicyPoint pt;
  pt.policy = eq.policy;
  pt.converged = eq.converged;
  const auto snap = snapshot(s, eq.policy, eq.decision, price_cap);
  const auto& f = snap.pass;

  double seconds = 0.0;
  double car_m = 0.0;
  std::array<double, 3> riders{0.0, 0.0, 0.0};
  for (int u = 0; u < 3; ++u) {
    for (int i = 0; i < L.ods; ++i) {
      for (int m = 0; m < L.intervals; ++m) {
        const double q = s.demand(i, m) * f.shares[u](i, m);
        if (q == 0.0) continue;
        riders[u] += q;
        seconds += q * f.travel_time[u](i, m);
        if (u == 0) car_m += q * s.ods[i].length;
      }
    }
  }
  double waited = 0.0;
  for (const auto& st : f.waiting) {
    for (const auto& v : st) waited += v.sum();
  }
  const double total_demand = s.total_demand();
  for (int u = 0; u < 3; ++u) pt.mode_share[u] = total_demand > 0.0 ? riders[u] / total_demand : 0.0;
  pt.in_vehicle_hours = seconds / kSecondsPerHour;
  pt.waiting_hours = waited / kSecondsPerHour;
  pt.car_km = car_m / 1000.0;
  pt.price = eq.decision(L.price());
  pt.fleet_cost_per_day = eq.policy.xi * prm.fleet_unit_cost;
  pt.feasible = pt.fleet_cost_per_day <= prm.budget;

  const double timed = include_waiting ? seconds + waited : seconds;
  pt.travel_time_cost = w.travel_time * prm.alpha_per_second() * timed;
  pt.emission_cost = w.emission * prm.emission_cost * car_m;
  pt.fleet_cost = w.fleet * pt.fleet_cost_per_day;
  pt.price_penalty = w.price * pt.price;
  pt.total = eq.converged ? pt.travel_time_cost + pt.emission_cost + pt.fleet_cost + pt.price_penalty
                          : std::numeric_limits<double>::infinity();
  pt.equilibrium = std::move(eq);
  return pt;
}

PolicyPoint evaluate_policy(const Scenario& s, const PolicyParams& policy, const ObjectiveWeights& weights,
                            bool include_waiting, const std::optional<Vector>& warm_start,
                            const SolverConfig& cfg) {
  if (weights.travel_time < 0 || weights.emission < 0 || weights.fleet < 0 || weights.price < 0) {
    throw InputError("objective weights must be non-negative");
  }
  std::optional<Vector> init;
  if (warm_start) init = adapt_start(s, policy, *warm_start);
  auto eq = solve_equilibrium(s, policy, init, cfg);
  if (!eq.converged && init) {
    auto cold = solve_equilibrium(s, policy, std::nullopt, cfg);
    if (cold.converged || cold.residual_norm < eq.residual_norm) eq = std::move(cold);
  }
  return price_equilibrium(s, std::move(eq), weights, include_waiting, cfg.price_cap);
}

GridResult grid_search(const Scenario& s, const std::vector<int>& k_values, const std::vector<int>& tau_values,
                       const std::vector<int>& xi_values, const ObjectiveWeights& weights, bool include_waiting,
                       const SolverConfig& cfg, int jobs) {
  if (k_values.empty() || tau_values.empty() || xi_values.empty()) throw InputError("empty policy grid");
  std::vector<PolicyParams> policies;
  for (int k : k_values) {
    for (int tau : tau_values) {
      for (int xi : xi_values) {
        PolicyParams p{k, tau, xi};
        validate(p);
        policies.push_back(p);
      }
    }
  }

  // No-TCS equilibria per fleet size, the common warm start.
  std::vector<int> fleets = xi_values;
  std::sort(fleets.begin(), fleets.end());
  fleets.erase(std::unique(fleets.begin(), fleets.end()), fleets.end());
  std::vector<EquilibriumResult> base(fleets.size());
  parallel_for(fleets.size(), jobs, [&](std::size_t j) {
    base[j] = solve_equilibrium(s, PolicyParams{0, 0, fleets[j]}, std::nullopt, cfg);
  });
  auto base_of = [&](int xi) {
    return base[std::lower_bound(fleets.begin(), fleets.end(), xi) - fleets.begin()].decision;
  };

  GridResult out;
  out.points.resize(policies.size());
  parallel_for(policies.size(), jobs, [&](std::size_t j) {
    out.points[j] = evaluate_policy(s, policies[j], weights, include_waiting, base_of(policies[j].xi), cfg);
  });

  out.ranking.resize(out.points.size());
  for (std::size_t j = 0; j < out.ranking.size(); ++j) out.ranking[j] = j;
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return out.points[a].total < out.points[b].total; });

  auto admissible = [&](std::size_t j) { return out.points[j].feasible && std::isfinite(out.points[j].total); };
  std::map<int, std::size_t> per_xi;
  std::map<double, std::size_t> per_d;
  for (std::size_t j : out.ranking) {
    if (!admissible(j)) continue;
    if (!out.optimum) out.optimum = j;
    per_xi.emplace(out.points[j].policy.xi, j);
    per_d.emplace(out.points[j].d_max(), j);
  }
  out.best_per_xi.assign(per_xi.begin(), per_xi.end());
  out.best_per_d_max.assign(per_d.begin(), per_d.end());
  return out;
}

Quadrants quadrants_of(const PolicyParams& combined) {
  return {PolicyParams{0, 0, 0}, PolicyParams{combined.k, combined.tau, 0}, PolicyParams{0, 0, combined.xi}, combined};
}

std::vector<ComparisonRow> compare_policies(const Scenario& s, const Quadrants& q, const ObjectiveWeights& weights,
                                            bool include_waiting, const SolverConfig& cfg) {
  for (const auto& p : q) validate(p);
  auto baseline = evaluate_policy(s, q[0], weights, include_waiting, std::nullopt, cfg);
  auto dras_only = evaluate_policy(s, q[2], weights, include_waiting, baseline.equilibrium.decision, cfg);
  auto tcs_only = evaluate_policy(s, q[1], weights, include_waiting, baseline.equilibrium.decision, cfg);
  auto both = evaluate_policy(s, q[3], weights, include_waiting, dras_only.equilibrium.decision, cfg);

  std::vector<ComparisonRow> rows;
  rows.push_back({"no policy", std::move(baseline)});
  rows.push_back({"TCS only", std::move(tcs_only)});
  rows.push_back({"DRAS only", std::move(dras_only)});
  rows.push_back({"TCS + DRAS", std::move(both)});
  const auto& b = rows.front().point;
  auto pct = [](double v, double ref) { return ref != 0.0 ? 100.0 * (v - ref) / ref : 0.0; };
  for (auto& r : rows) {
    const auto& p = r.point;
    r.travel_time_delta = pct(p.in_vehicle_hours, b.in_vehicle_hours);
    r.distance_delta = pct(p.car_km, b.car_km);
    r.objective_delta = pct(p.total, b.total);
    r.charge_per_trip = (p.policy.tau - p.policy.k) * p.price;
  }
  return rows;
}

}  // namespace corridor
