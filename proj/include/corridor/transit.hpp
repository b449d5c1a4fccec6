#ifndef CORRIDOR_TRANSIT_HPP
#define CORRIDOR_TRANSIT_HPP

#include "corridor/mfd.hpp"
#include "corridor/queue.hpp"

#include <optional>
#include <string>
#include <vector>

namespace corridor {

struct Visit {
  int station = 0;
  int index = 0;  // n-th visit of this vehicle to this station
  double t_arr = 0.0;
  double t_dep = 0.0;
  double boarded = 0.0;
  double alighted = 0.0;
};

struct VehicleTimeline {
  int id = 0;
  Mode mode = Mode::Bus;
  std::vector<Visit> visits;
  bool stuck = false;  // waited for a threshold that was never reached
};

/// Service-vehicle timelines plus the departure events they imply, per
/// station, for the bus and DRAS queues.
struct TransitSupply {
  std::vector<VehicleTimeline> vehicles;
  std::vector<std::vector<ServiceEvent>> bus_events;   // per station, by time
  std::vector<std::vector<ServiceEvent>> dras_events;  // per station, by time

  const std::vector<ServiceEvent>& events(int station, Mode m) const {
    return m == Mode::Bus ? bus_events[station] : dras_events[station];
  }
};

/// Passengers waiting for one mode at one station, with their OD composition
/// so that boarded passengers can be split by destination.
struct StationDemand {
  ArrivalCurve<double> curve;
  Matrix by_od;  // ods x intervals, arrivals of each OD in each interval
};

StationDemand station_demand(const Scenario& s, int station, Mode mode, const Matrix& shares);

/// Splits the FIFO passenger index range [lo, hi] into per-destination counts.
std::vector<double> split_by_destination(const Scenario& s, const StationDemand& d, double lo, double hi);

/// Earliest t >= t0 with A(t) >= level, or nullopt if never reached within the horizon.
std::optional<double> first_time_reaching(const ArrivalCurve<double>& a, double level, double t0);

/// Fixed-schedule buses; boards min(queue, free seats) at each stop.
TransitSupply propagate_bus_timelines(const Scenario& s, const NetworkState<double>& state, const Matrix& bus_shares);

/// Threshold-dispatched shuttles with minimum headway, event-chronological.
TransitSupply propagate_dras_timelines(const Scenario& s, const PolicyParams& policy,
                                       const NetworkState<double>& state, const Matrix& dras_shares);

/// Both services merged into one supply.
TransitSupply propagate_transit(const Scenario& s, const PolicyParams& policy, const NetworkState<double>& state,
                                const Matrix& bus_shares, const Matrix& dras_shares);

/// Capacity, threshold, headway and service-below-arrival checks; returns
/// one message per violation.
std::vector<std::string> check_operational_invariants(const Scenario& s, const TransitSupply& supply,
                                                      const Matrix& bus_shares, const Matrix& dras_shares);

}  // namespace corridor

#endif  // CORRIDOR_TRANSIT_HPP
