#ifndef CORRIDOR_QUEUE_HPP
#define CORRIDOR_QUEUE_HPP

#include "corridor/scenario.hpp"

#include <vector>

namespace corridor {

/// Piecewise-linear cumulative passenger arrivals at one station for one mode,
/// stored at the grid boundaries.
template <typename Scalar>
struct ArrivalCurve {
  int station = 0;
  Mode mode = Mode::Bus;
  double step = 300.0;
  VectorX<Scalar> cumulative;  // A(t_0) .. A(t_M)

  int interval_count() const { return static_cast<int>(cumulative.size()) - 1; }
  double horizon() const { return step * interval_count(); }

  Scalar at(double t) const {
    const int M = interval_count();
    if (t <= 0.0) return cumulative(0);
    if (t >= horizon()) return cumulative(M);
    const int m = std::min(static_cast<int>(t / step) + 1, M);
    const double frac = (t - (m - 1) * step) / step;
    return cumulative(m - 1) + (cumulative(m) - cumulative(m - 1)) * frac;
  }

  Scalar in_interval(int m) const { return cumulative(m) - cumulative(m - 1); }
  Scalar total() const { return cumulative(interval_count()); }
};

/// Builds A(t) for (station, mode) from the mode's shares (ods x intervals).
/// ODs whose destination is off the mode's route never join the queue.
template <typename Scalar>
ArrivalCurve<Scalar> build_arrival_curve(const Scenario& s, int station, Mode mode, const MatrixX<Scalar>& shares) {
  const int M = s.interval_count();
  ArrivalCurve<Scalar> a;
  a.station = station;
  a.mode = mode;
  a.step = s.grid.step;
  a.cumulative = VectorX<Scalar>::Zero(M + 1);
  for (int m = 1; m <= M; ++m) {
    Scalar q(0.0);
    for (int i = 0; i < s.od_count(); ++i) {
      if (s.ods[i].origin == station && s.demand(i, m - 1) != 0.0 && s.route_serves(i, mode)) q += s.demand(i, m - 1) * shares(i, m - 1);
    }
    a.cumulative(m) = a.cumulative(m - 1) + q;
  }
  return a;
}

/// A frozen vehicle departure. Scheduled events leave at `time` and board
/// min(queue, capacity). Threshold events leave once `capacity` passengers
/// queue, no earlier than `ready` nor `headway` after the previous event of
/// the same list, and board exactly `capacity`.
struct ServiceEvent {
  double time = 0.0;
  double capacity = 0.0;
  int vehicle = 0;
  bool threshold = false;
  double ready = 0.0;
  double headway = 0.0;
};

/// Step service curve: cumulative boarded passengers after each departure.
template <typename Scalar>
struct ServiceCurve {
  int station = 0;
  Mode mode = Mode::Bus;
  std::vector<Scalar> times;
  std::vector<Scalar> cumulative;

  Scalar total() const { return cumulative.empty() ? Scalar(0.0) : cumulative.back(); }
};

/// Earliest time the arrival curve reaches `level` (value-selected branch,
/// exact inverse within the interval); `horizon` if it never does.
template <typename Scalar>
Scalar arrival_inverse(const ArrivalCurve<Scalar>& a, const Scalar& level) {
  const double lv = value_of(level);
  const int M = a.interval_count();
  if (value_of(a.cumulative(0)) >= lv) return Scalar(0.0);
  for (int m = 1; m <= M; ++m) {
    if (value_of(a.cumulative(m)) < lv) continue;
    return (m - 1) * a.step + (level - a.cumulative(m - 1)) / (a.cumulative(m) - a.cumulative(m - 1)) * a.step;
  }
  return Scalar(a.horizon());
}

/// Serves FIFO at each event in list order. Events at or after `horizon`
/// serve nobody.
template <typename Scalar>
ServiceCurve<Scalar> serve_events(const ArrivalCurve<Scalar>& arrival, const std::vector<ServiceEvent>& events,
                                  double horizon) {
  ServiceCurve<Scalar> curve;
  curve.station = arrival.station;
  curve.mode = arrival.mode;
  Scalar served(0.0);
  Scalar last(-std::numeric_limits<double>::infinity());
  for (const auto& e : events) {
    if (!e.threshold) {
      if (e.time >= horizon) continue;
      if (e.time < value_of(last)) throw ModelError("service events out of order");
      last = Scalar(e.time);
      const Scalar queue = arrival.at(e.time) - served;
      if (value_of(queue) > 0.0 && e.capacity > 0.0) served += smin<Scalar>(queue, e.capacity);
      curve.times.push_back(last);
      curve.cumulative.push_back(served);
      continue;
    }
    const Scalar level = served + e.capacity;
    Scalar t = arrival_inverse(arrival, level);
    t = smax<Scalar>(t, e.ready);
    if (std::isfinite(value_of(last))) t = smax<Scalar>(t, Scalar(last + e.headway));
    if (value_of(t) >= horizon) continue;
    last = t;
    served = level;
    curve.times.push_back(t);
    curve.cumulative.push_back(served);
  }
  return curve;
}

/// Passenger-seconds waited by the passengers arriving in interval m (1-based),
/// FIFO, with unserved passengers waiting until the horizon.
template <typename Scalar>
Scalar waiting_area(const ArrivalCurve<Scalar>& arrival, const ServiceCurve<Scalar>& service, int m) {
  const Scalar& lo = arrival.cumulative(m - 1);
  const Scalar& hi = arrival.cumulative(m);
  const double lo_v = value_of(lo);
  const double hi_v = value_of(hi);
  if (hi_v < lo_v) throw ModelError("arrival curve is decreasing");
  if (hi_v == lo_v) return Scalar(0.0);
  const double horizon = arrival.horizon();

  Scalar area(0.0);
  double prev_v = 0.0;
  Scalar prev(0.0);
  for (std::size_t e = 0; e < service.times.size(); ++e) {
    const Scalar& cur = service.cumulative[e];
    const double cur_v = value_of(cur);
    if (cur_v < prev_v) throw ModelError("service curve is decreasing");
    if (cur_v > lo_v && prev_v < hi_v && cur_v > prev_v) {
      const Scalar top = cur_v < hi_v ? cur : hi;
      const Scalar bottom = prev_v > lo_v ? prev : lo;
      area += (top - bottom) * service.times[e];
    }
    prev = cur;
    prev_v = cur_v;
    if (prev_v >= hi_v) break;
  }
  if (prev_v < hi_v) {
    const Scalar bottom = prev_v > lo_v ? prev : lo;
    area += (hi - bottom) * horizon;
  }
  const double t_mid = (m - 1) * arrival.step + 0.5 * arrival.step;
  return area - (hi - lo) * t_mid;
}

/// Perceived wait eta * W, zero when nobody arrives.
template <typename Scalar>
Scalar perceived_wait(const Scalar& W, const Scalar& arrivals, double eta) {
  if (value_of(arrivals) <= 0.0) return Scalar(0.0);
  return W * eta;
}

/// Average wait W / arrivals (0 when nobody arrives).
inline double average_wait(double W, double arrivals) { return arrivals > 0.0 ? W / arrivals : 0.0; }

}  // namespace corridor

#endif  // CORRIDOR_QUEUE_HPP
