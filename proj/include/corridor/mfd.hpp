#ifndef CORRIDOR_MFD_HPP
#define CORRIDOR_MFD_HPP

#include "corridor/scenario.hpp"

namespace corridor {

/// Linear MFD speed with a floor, capped at `v_cap` (all km/h).
template <typename Scalar>
Scalar speed_of(const Scalar& n, double v_cap, const ModeParams& p) {
  const Scalar linear = v_cap * (1.0 - n / p.n_max);
  return smin(smax(linear, p.v_min), v_cap);
}

inline double speed_of(double n, double v_cap, const ModeParams& p) { return speed_of<double>(n, v_cap, p); }

template <typename Scalar>
struct NetworkState {
  VectorX<Scalar> n;      // corridor cars per interval (background excluded)
  VectorX<Scalar> speed;  // km/h per interval
  VectorX<Scalar> z;      // distance clock at boundaries t_0..t_M (m)
  VectorX<Scalar> q_in;
  VectorX<Scalar> q_out;  // removed at the start of each interval
  Scalar exited_at_horizon{0.0};
  Scalar unfinished{0.0};
  // Boundary index at which cohort (i, m) leaves the network; -1 if unfinished.
  Eigen::MatrixXi exit_boundary;
};

/// One chronological sweep of the accumulation/speed/distance-clock recursion.
/// `x` holds car shares (ods x intervals).
template <typename Scalar>
NetworkState<Scalar> propagate_car_dynamics(const Scenario& s, const MatrixX<Scalar>& x) {
  const int M = s.interval_count();
  const int I = s.od_count();
  const double dt = s.grid.step;
  NetworkState<Scalar> st;
  st.n = VectorX<Scalar>::Zero(M);
  st.speed = VectorX<Scalar>::Zero(M);
  st.z = VectorX<Scalar>::Zero(M + 1);
  st.q_in = VectorX<Scalar>::Zero(M);
  st.q_out = VectorX<Scalar>::Zero(M);
  st.exit_boundary = Eigen::MatrixXi::Constant(I, M, -1);

  std::vector<double> z_value(M + 1, 0.0);
  // Interpolated rule: share of a cohort removed at its first exit boundary.
  std::vector<Scalar> first_share(static_cast<std::size_t>(I) * M, Scalar(1.0));
  const bool interpolate = s.params.interpolated_exits;
  Scalar n_prev(0.0);
  for (int m = 1; m <= M; ++m) {
    Scalar out(0.0);
    for (int i = 0; i < I; ++i) {
      const double l = s.ods[i].length;
      for (int m0 = 1; m0 < m; ++m0) {
        if (s.demand(i, m0 - 1) == 0.0) continue;
        int& eb = st.exit_boundary(i, m0 - 1);
        const Scalar mass = x(i, m0 - 1) * s.demand(i, m0 - 1);
        if (eb >= 0) {
          // Remainder of an interpolated exit leaves one boundary later.
          if (interpolate && eb == m - 2) out += mass * (1.0 - first_share[i * M + m0 - 1]);
          continue;
        }
        if (z_value[m - 1] - z_value[m0 - 1] < l) continue;
        eb = m - 1;
        if (interpolate) {
          // Fraction of the last interval driven after the crossing.
          const Scalar w = (st.z(m - 1) - st.z(m0 - 1) - l) / (st.z(m - 1) - st.z(m - 2));
          first_share[i * M + m0 - 1] = w;
          out += mass * w;
        } else {
          out += mass;
        }
      }
    }
    Scalar in(0.0);
    for (int i = 0; i < I; ++i) {
      if (s.demand(i, m - 1) != 0.0) in += x(i, m - 1) * s.demand(i, m - 1);
    }
    const Scalar n_m = n_prev + in - out;
    st.q_in(m - 1) = in;
    st.q_out(m - 1) = out;
    st.n(m - 1) = n_m;
    st.speed(m - 1) = speed_of<Scalar>(n_m + s.background(m - 1), s.params.v_max_car, s.params);
    st.z(m) = st.z(m - 1) + st.speed(m - 1) * (dt / 3.6);
    z_value[m] = value_of(st.z(m));
    n_prev = n_m;
  }
  for (int i = 0; i < I; ++i) {
    for (int m0 = 1; m0 <= M; ++m0) {
      if (s.demand(i, m0 - 1) == 0.0) continue;
      const Scalar mass = x(i, m0 - 1) * s.demand(i, m0 - 1);
      const int eb = st.exit_boundary(i, m0 - 1);
      if (eb >= 0) {
        if (interpolate && eb == M - 1) st.exited_at_horizon += mass * (1.0 - first_share[i * M + m0 - 1]);
        continue;
      }
      if (z_value[M] - z_value[m0 - 1] >= s.ods[i].length) {
        st.exit_boundary(i, m0 - 1) = M;
        st.exited_at_horizon += mass;
      } else {
        st.unfinished += mass;
      }
    }
  }
  return st;
}

/// Time (s) to cover `distance` m departing at `depart` (s after t_0) over the
/// piecewise-constant speed profile, each interval capped at `cap` km/h. The
/// last interval's speed is extended beyond the horizon.
template <typename Scalar>
Scalar service_travel_time(double depart, double distance, const VectorX<Scalar>& speed, double cap,
                           const TimeGrid& grid) {
  if (distance <= 0.0) return Scalar(0.0);
  const int M = grid.count;
  int m = depart >= grid.horizon() ? M : grid.interval_of(depart);
  double t = depart;
  double covered_value = 0.0;
  Scalar covered(0.0);
  for (;; ++m) {
    const Scalar v = smin<Scalar>(speed(m - 1), cap) * (1.0 / 3.6);
    if (m < M) {
      const double seg = grid.boundary(m) - t;
      const double reach = value_of(v) * seg;
      if (covered_value + reach < distance) {
        covered += v * seg;
        covered_value += reach;
        t = grid.boundary(m);
        continue;
      }
    }
    return (t - depart) + (distance - covered) / v;
  }
}

/// Travel time of every cohort departing at its interval's start boundary,
/// with the mode's speed cap applied per interval.
template <typename Scalar>
MatrixX<Scalar> cohort_travel_times(const Scenario& s, const NetworkState<Scalar>& st, double cap) {
  MatrixX<Scalar> T(s.od_count(), s.interval_count());
  for (int i = 0; i < s.od_count(); ++i) {
    for (int m = 1; m <= s.interval_count(); ++m) {
      T(i, m - 1) = service_travel_time<Scalar>(s.grid.boundary(m - 1), s.ods[i].length, st.speed, cap, s.grid);
    }
  }
  return T;
}

}  // namespace corridor

#endif  // CORRIDOR_MFD_HPP
