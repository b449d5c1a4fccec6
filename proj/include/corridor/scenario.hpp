#ifndef CORRIDOR_SCENARIO_HPP
#define CORRIDOR_SCENARIO_HPP

#include "corridor/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace corridor {

/// Uniform discretization of the study period. Times inside the model are
/// seconds relative to `start`; boundary m sits at m * step.
struct TimeGrid {
  double start = 0.0;  // clock time of t_0 (s since midnight)
  double step = 300.0;
  int count = 36;

  double boundary(int m) const { return m * step; }
  double horizon() const { return count * step; }

  /// 1-based interval index m with t in [t_{m-1}, t_m); clamps to [1, M].
  int interval_of(double t) const;
};

struct Station {
  std::string id;
  double position = 0.0;  // m from corridor start
  bool bus = true;
  bool dras = true;
};

struct OdPair {
  int origin = 0;       // station index
  int destination = 0;  // station index
  double length = 0.0;  // m
};

/// One demand cohort as written in a scenario file.
struct DemandGroup {
  std::string id;
  int origin = 0;
  int destination = 0;
  std::optional<double> trip_length;
  double departure_time = 0.0;  // clock time (s)
  double demand = 0.0;
};

/// Normal-shaped departure profile, discretized deterministically by CDF mass.
struct DemandProfile {
  int origin = 0;
  int destination = 0;
  std::optional<double> trip_length;
  double total = 0.0;
  double center = 0.0;  // clock time (s)
  double spread = 0.0;  // standard deviation (s)
};

struct ModeParams {
  // speeds in km/h
  double v_max_car = 100.0;
  double v_max_bus = 90.0;
  double v_max_dras = 80.0;
  double v_min = 5.0;
  double n_max = 5500.0;
  // values of time in EUR/h
  double alpha = 10.5;
  double alpha_wait = 26.5;
  double theta = 0.1;
  std::array<double, 3> delta{0.0, 0.0, 0.0};  // car, bus, dras (EUR)
  double eta = 1.0;
  double bus_capacity = 60.0;
  double bus_interval = 600.0;
  double bus_first_departure = 0.0;  // s after t_0
  double bus_dwell = 0.0;
  double dras_capacity = 20.0;
  double omega = 0.8;
  double headway_min = 60.0;
  double dras_launch_gap = 240.0;
  double dras_first_launch = 0.0;  // s after t_0
  double emission_cost = 0.000012;  // EUR/m
  double fleet_unit_cost = 274.0;   // EUR/day per shuttle
  double budget = 1.0e9;            // EUR/day
  std::array<double, 2> redemption{1.0, 1.0};  // bus, dras credit-sale weights
  bool operational_features = true;
  bool dras_remaining_seats = true;
  // Split each cohort's exit between the two boundaries following the
  // crossing, in proportion to where the crossing falls (continuous in x).
  bool interpolated_exits = false;

  double alpha_per_second() const { return alpha / kSecondsPerHour; }
  double alpha_wait_per_second() const { return alpha_wait / kSecondsPerHour; }
  double cap_of(Mode m) const;
};

struct PolicyParams {
  int k = 0;    // credits allocated per traveler
  int tau = 0;  // credits per car trip
  int xi = 0;   // shuttle fleet size

  bool tcs_active() const { return tau > 0 || k > 0; }
  /// k / tau, or 1 when no scheme is active.
  double d_max() const { return tau > 0 ? static_cast<double>(k) / tau : 1.0; }

  bool operator==(const PolicyParams&) const = default;
};

struct SolverConfig {
  double eps_res = 1e-5;
  double eps_loss = 1e-16;
  int max_iter = 2000;
  double armijo_c = 1e-4;
  double backtrack_beta = 0.9;
  double initial_step = 0.1;
  double step_growth = 1.5;
  double max_step = 4.0;
  int max_backtracks = 200;
  double price_cap = 10.0;
  double eps_sum = 1e-4;
  double eps_market = 1e-6;  // relative to credit supply
  double damping = 0.5;
  double perturbation = 0.0;
  std::vector<std::uint64_t> seeds;
  // "gauss_newton" scales the projected gradient step by (J^T J + mu I)^-1;
  // "gradient" is the plain projected gradient.
  std::string metric = "gauss_newton";
  double lm_damping = 1e-9;
};

struct ObjectiveWeights {
  double travel_time = 1.0;
  double emission = 1.0;
  double fleet = 0.5;
  double price = 0.05;
};

struct BilevelConfig {
  ObjectiveWeights weights;
  std::vector<int> k_values;
  std::vector<int> tau_values;
  std::vector<int> xi_values;
  bool include_waiting = false;
};

/// The full exogenous input world, immutable after load.
struct Scenario {
  std::string name;
  TimeGrid grid;
  std::vector<Station> stations;
  std::vector<OdPair> ods;
  Matrix demand;  // ods x intervals, passengers per cohort
  Vector background;  // exogenous accumulation per interval (vehicles)
  ModeParams params;
  PolicyParams policy;
  SolverConfig solver;
  BilevelConfig bilevel;

  int interval_count() const { return grid.count; }
  int od_count() const { return static_cast<int>(ods.size()); }
  int station_count() const { return static_cast<int>(stations.size()); }
  double total_demand() const { return demand.sum(); }
  double od_demand(int i) const { return demand.row(i).sum(); }

  /// True when both ends of OD i are stations of the mode's route (cars always).
  bool route_serves(int i, Mode m) const {
    if (m == Mode::Car) return true;
    const auto& o = stations[ods[i].origin];
    const auto& d = stations[ods[i].destination];
    return m == Mode::Bus ? (o.bus && d.bus) : (o.dras && d.dras);
  }
};

/// Deterministic departure profile: CDF mass of N(center, spread) over each
/// interval, with mass outside the horizon folded into the end intervals.
Vector discretize_demand(double total, double peak_center, double spread, const TimeGrid& grid);

Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);
nlohmann::json to_json(const Scenario& s);

/// Throws InputError on the first violated invariant.
void validate(const Scenario& s);
void validate(const PolicyParams& p);

/// Parses "HH:MM", "HH:MM:SS" or a plain number of seconds.
double parse_clock(const nlohmann::json& v, const std::string& field);

/// Parses an integer range "a:b:step" (inclusive), "a:b" (step 1) or a single value.
std::vector<int> parse_range(const std::string& text);

/// Sets a dotted path (e.g. "solver.max_iter") in a scenario document.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace corridor

#endif  // CORRIDOR_SCENARIO_HPP
