#ifndef CORRIDOR_BILEVEL_HPP
#define CORRIDOR_BILEVEL_HPP

#include "corridor/equilibrium.hpp"

#include <array>
#include <optional>
#include <vector>

namespace corridor {

/// One evaluated policy. Weighted components add up to `total` exactly;
/// the raw quantities behind them are reported alongside.
struct PolicyPoint {
  PolicyParams policy;
  EquilibriumResult equilibrium;

  double travel_time_cost = 0.0;  // gamma_tt * alpha * sum T (EUR)
  double emission_cost = 0.0;     // gamma_em * beta_em * car VKT (EUR)
  double fleet_cost = 0.0;        // gamma_as * xi * b (EUR)
  double price_penalty = 0.0;     // gamma_cp * p
  double total = 0.0;             // +inf when the lower level did not converge

  double in_vehicle_hours = 0.0;  // demand-weighted
  double waiting_hours = 0.0;     // station queues, actual (not perceived)
  double car_km = 0.0;
  double fleet_cost_per_day = 0.0;
  double price = 0.0;
  std::array<double, 3> mode_share{0.0, 0.0, 0.0};  // demand-weighted
  bool feasible = true;                             // xi * b <= B
  bool converged = false;

  double d_max() const { return policy.d_max(); }
};

/// Solves the lower level (warm-started when `warm_start` is given, with a
/// cold retry on failure) and prices the result.
PolicyPoint evaluate_policy(const Scenario& s, const PolicyParams& policy, const ObjectiveWeights& weights,
                            bool include_waiting, const std::optional<Vector>& warm_start,
                            const SolverConfig& cfg);

/// Objective terms for an already solved equilibrium.
PolicyPoint price_equilibrium(const Scenario& s, EquilibriumResult eq, const ObjectiveWeights& weights,
                              bool include_waiting, double price_cap);

struct GridResult {
  std::vector<PolicyPoint> points;   // k-major, then tau, then xi
  std::vector<std::size_t> ranking;  // indices by ascending total
  std::optional<std::size_t> optimum;               // best feasible finite point
  std::vector<std::pair<int, std::size_t>> best_per_xi;
  std::vector<std::pair<double, std::size_t>> best_per_d_max;
};

/// Exhaustive search over k x tau x xi on `jobs` threads. Each point starts
/// from the no-TCS equilibrium with the same fleet, so the result does not
/// depend on the job count.
GridResult grid_search(const Scenario& s, const std::vector<int>& k_values, const std::vector<int>& tau_values,
                       const std::vector<int>& xi_values, const ObjectiveWeights& weights, bool include_waiting,
                       const SolverConfig& cfg, int jobs = 1);

struct ComparisonRow {
  std::string label;
  PolicyPoint point;
  double travel_time_delta = 0.0;  // percent vs the first row
  double distance_delta = 0.0;
  double objective_delta = 0.0;
  double charge_per_trip = 0.0;    // (tau - k) * p
};

/// Policies of the four quadrants, in row order: no policy, TCS only,
/// DRAS only, TCS + DRAS.
using Quadrants = std::array<PolicyParams, 4>;

/// The quadrants spanned by one combined (k, tau, xi) setting.
Quadrants quadrants_of(const PolicyParams& combined);

/// Evaluates the quadrants. DRAS-only and TCS-only start from the no-policy
/// equilibrium, the combined case from DRAS-only.
std::vector<ComparisonRow> compare_policies(const Scenario& s, const Quadrants& quadrants,
                                            const ObjectiveWeights& weights, bool include_waiting,
                                            const SolverConfig& cfg);

/// Runs fn(0..count-1) on up to `jobs` threads.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace corridor

#endif  // CORRIDOR_BILEVEL_HPP
