#ifndef CORRIDOR_TESTS_SUPPORT_HPP
#define CORRIDOR_TESTS_SUPPORT_HPP

#include "corridor/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace corridor::testing {

inline std::filesystem::path scenario_path(const std::string& name) {
  return std::filesystem::path(CORRIDOR_SOURCE_DIR) / "scenarios" / name;
}

/// Two stations, one OD, given demand per interval; everything else default.
inline Scenario corridor_of(const std::vector<double>& demand, double length = 6000.0, double step = 300.0) {
  nlohmann::json doc = {
      {"name", "fixture"},
      {"grid", {{"start", "07:00"}, {"interval_length", step}, {"interval_count", static_cast<int>(demand.size())}}},
      {"stations", {{{"id", "A"}, {"position", 0}}, {{"id", "B"}, {"position", length}}}},
      {"demand_groups", nlohmann::json::array()},
      {"mode_params", {{"delta", {{"car", 0.0}, {"bus", 0.0}, {"dras", 0.0}}}, {"eta", 1.0}}},
      {"policy", {{"k", 0}, {"tau", 0}, {"xi", 0}}}};
  for (std::size_t m = 0; m < demand.size(); ++m) {
    doc["demand_groups"].push_back({{"origin", "A"},
                                    {"destination", "B"},
                                    {"departure_time", 7 * 3600.0 + m * step},
                                    {"demand", demand[m]}});
  }
  return parse_scenario(doc);
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

/// Brute-force queue: arrivals are cut into equal passenger quanta, each
/// boarding the first departure that reaches it in FIFO order; returns the
/// summed individual waits of the quanta arriving in interval m (1-based).
/// `cumulative` holds A at the grid boundaries; events as in serve_events.
inline double oracle_waiting(const Vector& cumulative, double step, const std::vector<ServiceEvent>& events, int m,
                             double quantum) {
  const int M = static_cast<int>(cumulative.size()) - 1;
  const double horizon = M * step;
  const double total = cumulative(M);
  const auto count = static_cast<long>(std::llround(total / quantum));

  // Arrival instant of the (fractional) passenger index u, inverse of A.
  auto arrival_time = [&](double u) {
    for (int k = 1; k <= M; ++k) {
      if (cumulative(k) >= u - 1e-12 && cumulative(k) > cumulative(k - 1)) {
        const double f = std::clamp((u - cumulative(k - 1)) / (cumulative(k) - cumulative(k - 1)), 0.0, 1.0);
        return (k - 1 + f) * step;
      }
    }
    return horizon;
  };
  // Quanta fully arrived by t.
  auto arrived_by = [&](double t) {
    long n = 0;
    while (n < count && arrival_time((n + 1) * quantum) <= t + 1e-9) ++n;
    return n;
  };

  std::vector<double> board(count, horizon);
  long next = 0;  // first quantum not yet boarded
  double last = -1.0e300;
  for (const auto& e : events) {
    const long seats = std::lround(e.capacity / quantum);
    double t = e.time;
    long boarding = 0;
    if (!e.threshold) {
      if (t >= horizon) continue;
      boarding = std::clamp(arrived_by(t) - next, 0L, seats);
    } else {
      if (next + seats > count) continue;  // never fills before the horizon
      t = std::max({arrival_time((next + seats) * quantum), e.ready, last + e.headway});
      if (t >= horizon) continue;
      boarding = seats;
    }
    last = t;
    for (long j = next; j < next + boarding; ++j) board[j] = t;
    next += boarding;
  }

  double w = 0.0;
  for (long j = 0; j < count; ++j) {
    const double mid = (j + 0.5) * quantum;
    if (mid <= cumulative(m - 1) || mid >= cumulative(m)) continue;
    w += quantum * (board[j] - arrival_time(mid));
  }
  return w;
}

/// Random instance whose every curve breakpoint falls on a whole quantum, so
/// the quantized oracle is exact: arrivals per interval are multiples of 4,
/// scheduled departures sit on quarter intervals, capacities are integers.
struct QueueInstance {
  Vector cumulative;
  double step = 300.0;
  std::vector<ServiceEvent> events;
};

inline QueueInstance random_queue_instance(std::mt19937_64& rng, bool threshold) {
  std::uniform_int_distribution<int> intervals(1, 6);
  std::uniform_int_distribution<int> per_interval(0, 10);
  std::uniform_int_distribution<int> seats(1, 30);
  std::uniform_int_distribution<int> quarter(0, 3);
  QueueInstance q;
  const int M = intervals(rng);
  q.cumulative = Vector::Zero(M + 1);
  for (int m = 1; m <= M; ++m) q.cumulative(m) = q.cumulative(m - 1) + 4.0 * per_interval(rng);
  std::uniform_int_distribution<int> slot(0, 4 * M);
  std::vector<int> slots;
  const int n_events = std::uniform_int_distribution<int>(0, 8)(rng);
  for (int e = 0; e < n_events; ++e) slots.push_back(slot(rng));
  std::sort(slots.begin(), slots.end());
  for (int sl : slots) {
    ServiceEvent e;
    e.capacity = seats(rng);
    if (threshold) {
      e.threshold = true;
      e.ready = sl * q.step / 4.0;
      e.headway = 60.0 * quarter(rng);
    } else {
      e.time = sl * q.step / 4.0;
    }
    q.events.push_back(e);
  }
  return q;
}

inline ArrivalCurve<double> curve_of(const QueueInstance& q) {
  ArrivalCurve<double> a;
  a.step = q.step;
  a.cumulative = q.cumulative;
  return a;
}

}  // namespace corridor::testing

#endif  // CORRIDOR_TESTS_SUPPORT_HPP
