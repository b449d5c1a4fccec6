#include "corridor/transit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <tuple>

namespace corridor {

StationDemand station_demand(const Scenario& s, int station, Mode mode, const Matrix& shares) {
  StationDemand d;
  d.curve = build_arrival_curve<double>(s, station, mode, shares);
  d.by_od = Matrix::Zero(s.od_count(), s.interval_count());
  for (int i = 0; i < s.od_count(); ++i) {
    if (s.ods[i].origin != station || !s.route_serves(i, mode)) continue;
    d.by_od.row(i) = s.demand.row(i).cwiseProduct(shares.row(i));
  }
  return d;
}

std::vector<double> split_by_destination(const Scenario& s, const StationDemand& d, double lo, double hi) {
  std::vector<double> out(s.station_count(), 0.0);
  if (!(hi > lo)) return out;
  const auto& A = d.curve.cumulative;
  for (int m = 1; m <= d.curve.interval_count(); ++m) {
    const double a0 = A(m - 1);
    const double a1 = A(m);
    if (a1 <= lo) continue;
    if (a0 >= hi) break;
    const double overlap = std::min(a1, hi) - std::max(a0, lo);
    if (overlap <= 0.0 || a1 <= a0) continue;
    for (int i = 0; i < s.od_count(); ++i) {
      if (d.by_od(i, m - 1) > 0.0) out[s.ods[i].destination] += overlap * d.by_od(i, m - 1) / (a1 - a0);
    }
  }
  return out;
}

std::optional<double> first_time_reaching(const ArrivalCurve<double>& a, double level, double t0) {
  const double horizon = a.horizon();
  if (t0 >= horizon) return std::nullopt;
  if (a.at(t0) >= level) return t0;
  const int M = a.interval_count();
  const int start = std::min(static_cast<int>(t0 / a.step) + 1, M);
  for (int m = start; m <= M; ++m) {
    const double a1 = a.cumulative(m);
    if (a1 < level) continue;
    const double a0 = a.cumulative(m - 1);
    const double t = (m - 1) * a.step + (level - a0) / (a1 - a0) * a.step;
    const double hit = std::max(t, t0);
    if (hit >= horizon) return std::nullopt;
    return hit;
  }
  return std::nullopt;
}

namespace {

std::vector<int> route_of(const Scenario& s, Mode mode) {
  std::vector<int> route;
  for (int k = 0; k < s.station_count(); ++k) {
    if (mode == Mode::Bus ? s.stations[k].bus : s.stations[k].dras) route.push_back(k);
  }
  return route;
}

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

}  // namespace

TransitSupply propagate_bus_timelines(const Scenario& s, const NetworkState<double>& state, const Matrix& bus_shares) {
  const int S = s.station_count();
  const double horizon = s.grid.horizon();
  const auto& p = s.params;
  TransitSupply out;
  out.bus_events.assign(S, {});
  out.dras_events.assign(S, {});
  const auto route = route_of(s, Mode::Bus);
  if (route.size() < 2) return out;

  std::vector<StationDemand> demand;
  for (int k = 0; k < S; ++k) demand.push_back(station_demand(s, k, Mode::Bus, bus_shares));
  std::vector<double> served(S, 0.0);

  for (int n = 0;; ++n) {
    const double scheduled = p.bus_first_departure + n * p.bus_interval;
    if (scheduled >= horizon) break;
    VehicleTimeline bus;
    bus.id = n;
    bus.mode = Mode::Bus;
    std::vector<double> onboard(S, 0.0);
    double t = scheduled;
    for (std::size_t k = 0; k < route.size(); ++k) {
      const int st = route[k];
      if (k > 0) {
        const double dist = s.stations[st].position - s.stations[route[k - 1]].position;
        t += service_travel_time<double>(t, dist, state.speed, p.v_max_bus, s.grid);
      }
      if (t >= horizon) break;
      Visit v;
      v.station = st;
      v.t_arr = t;
      v.alighted = onboard[st];
      onboard[st] = 0.0;
      v.t_dep = t + p.bus_dwell;
      const bool last = k + 1 == route.size();
      if (!last && v.t_dep < horizon) {
        const double seats = std::max(p.bus_capacity - total(onboard), 0.0);
        const double queue = demand[st].curve.at(v.t_dep) - served[st];
        v.boarded = std::clamp(queue, 0.0, seats);
        if (seats > 0.0) out.bus_events[st].push_back({v.t_dep, seats, n});
        add_into(onboard, split_by_destination(s, demand[st], served[st], served[st] + v.boarded));
        served[st] += v.boarded;
      }
      bus.visits.push_back(v);
      t = v.t_dep;
    }
    out.vehicles.push_back(std::move(bus));
  }
  return out;
}

TransitSupply propagate_dras_timelines(const Scenario& s, const PolicyParams& policy,
                                       const NetworkState<double>& state, const Matrix& dras_shares) {
  const int S = s.station_count();
  const double horizon = s.grid.horizon();
  const auto& p = s.params;
  TransitSupply out;
  out.bus_events.assign(S, {});
  out.dras_events.assign(S, {});
  const auto route = route_of(s, Mode::Dras);
  if (policy.xi <= 0 || route.size() < 2) return out;
  const int R = static_cast<int>(route.size());

  // Stations where shuttles wait for a threshold; elsewhere they pass through.
  std::vector<bool> boards(S, false);
  for (int i = 0; i < s.od_count(); ++i) {
    if (s.route_serves(i, Mode::Dras) && s.od_demand(i) > 0.0) boards[s.ods[i].origin] = true;
  }
  boards[route.back()] = false;

  std::vector<StationDemand> demand;
  for (int k = 0; k < S; ++k) demand.push_back(station_demand(s, k, Mode::Dras, dras_shares));
  std::vector<double> served(S, 0.0);
  std::vector<double> last_dep(S, -std::numeric_limits<double>::infinity());

  struct Shuttle {
    std::vector<double> onboard;
    std::vector<int> visit_count;
  };
  std::vector<Shuttle> shuttles(policy.xi, Shuttle{std::vector<double>(S, 0.0), std::vector<int>(S, 0)});
  for (int j = 0; j < policy.xi; ++j) out.vehicles.push_back(VehicleTimeline{j, Mode::Dras, {}, false});

  // (arrival time, vehicle id, route position); popped in chronological order.
  using Arrival = std::tuple<double, int, int>;
  std::priority_queue<Arrival, std::vector<Arrival>, std::greater<>> pending;
  for (int j = 0; j < policy.xi; ++j) {
    const double launch = p.dras_first_launch + j * p.dras_launch_gap;
    if (launch < horizon) pending.emplace(launch, j, 0);
  }

  auto travel = [&](double t, int from, int to) {
    const double dist = std::abs(s.stations[to].position - s.stations[from].position);
    return t + service_travel_time<double>(t, dist, state.speed, p.v_max_dras, s.grid);
  };

  while (!pending.empty()) {
    const auto [t_arr, j, k] = pending.top();
    pending.pop();
    if (t_arr >= horizon) continue;
    const int st = route[k];
    auto& sh = shuttles[j];
    auto& tl = out.vehicles[j];
    Visit v;
    v.station = st;
    v.index = sh.visit_count[st]++;
    v.t_arr = t_arr;
    v.alighted = sh.onboard[st];
    sh.onboard[st] = 0.0;
    v.t_dep = t_arr;

    if (boards[st]) {
      const double seats = std::max(p.dras_capacity - total(sh.onboard), 0.0);
      const double threshold =
          p.dras_remaining_seats ? p.omega * seats : std::min(p.omega * p.dras_capacity, seats);
      if (threshold > 0.0) {
        const double t0 = std::max(t_arr, last_dep[st] + p.headway_min);
        const auto hit = first_time_reaching(demand[st].curve, served[st] + threshold, t0);
        if (!hit) {
          v.t_dep = horizon;
          tl.visits.push_back(v);
          tl.stuck = true;
          continue;
        }
        v.t_dep = *hit;
        const double queue = demand[st].curve.at(v.t_dep) - served[st];
        v.boarded = std::clamp(queue, 0.0, threshold);
        out.dras_events[st].push_back({v.t_dep, threshold, j, true, t_arr, p.headway_min});
        add_into(sh.onboard, split_by_destination(s, demand[st], served[st], served[st] + v.boarded));
        served[st] += v.boarded;
        last_dep[st] = v.t_dep;
      }
    }
    tl.visits.push_back(v);
    const int next = k + 1 < R ? k + 1 : 0;
    const int next_station = route[next];
    const double t_next = travel(v.t_dep, st, next_station);
    if (t_next < horizon) pending.emplace(t_next, j, next);
  }
  return out;
}

TransitSupply propagate_transit(const Scenario& s, const PolicyParams& policy, const NetworkState<double>& state,
                                const Matrix& bus_shares, const Matrix& dras_shares) {
  TransitSupply bus = propagate_bus_timelines(s, state, bus_shares);
  TransitSupply dras = propagate_dras_timelines(s, policy, state, dras_shares);
  bus.dras_events = std::move(dras.dras_events);
  for (auto& v : dras.vehicles) bus.vehicles.push_back(std::move(v));
  return bus;
}

std::vector<std::string> check_operational_invariants(const Scenario& s, const TransitSupply& supply,
                                                      const Matrix& bus_shares, const Matrix& dras_shares) {
  std::vector<std::string> bad;
  const auto& p = s.params;
  constexpr double tol = 1e-9;
  for (const auto& v : supply.vehicles) {
    const std::string who = std::string(to_string(v.mode)) + " " + std::to_string(v.id);
    const double cap = v.mode == Mode::Bus ? p.bus_capacity : p.omega * p.dras_capacity;
    double prev_t = -std::numeric_limits<double>::infinity();
    for (const auto& visit : v.visits) {
      if (visit.boarded > cap + tol) bad.push_back(who + " boards " + std::to_string(visit.boarded) + " > cap");
      if (visit.boarded < -tol) bad.push_back(who + " boards a negative count");
      if (visit.t_arr < prev_t || visit.t_dep < visit.t_arr) bad.push_back(who + " timeline not increasing");
      prev_t = visit.t_dep;
    }
  }
  const double horizon = s.grid.horizon();
  for (int st = 0; st < s.station_count(); ++st) {
    const auto& ev = supply.dras_events[st];
    for (std::size_t e = 1; e < ev.size(); ++e) {
      if (ev[e].time - ev[e - 1].time < p.headway_min - tol) {
        bad.push_back("station " + s.stations[st].id + " DRAS headway " +
                      std::to_string(ev[e].time - ev[e - 1].time) + " < H_min");
      }
    }
    for (Mode mode : {Mode::Bus, Mode::Dras}) {
      const auto A = build_arrival_curve<double>(s, st, mode, mode == Mode::Bus ? bus_shares : dras_shares);
      const auto S = serve_events<double>(A, supply.events(st, mode), horizon);
      for (std::size_t e = 0; e < S.times.size(); ++e) {
        if (S.cumulative[e] > A.at(S.times[e]) + tol * std::max(1.0, A.total())) {
          bad.push_back("station " + s.stations[st].id + " " + std::string(to_string(mode)) +
                        " service exceeds arrivals at t=" + std::to_string(S.times[e]));
        }
      }
    }
  }
  return bad;
}

}  // namespace corridor
