#ifndef CORRIDOR_COST_CHOICE_HPP
#define CORRIDOR_COST_CHOICE_HPP

#include "corridor/scenario.hpp"

#include <cmath>
#include <limits>

namespace corridor {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using PerMode = std::array<MatrixX<Scalar>, 3>;

/// Generalized cost per (od, interval, mode), with its components in EUR.
template <typename Scalar>
struct GeneralizedCosts {
  PerMode<Scalar> in_vehicle;
  PerMode<Scalar> waiting;
  PerMode<Scalar> credit;
  PerMode<Scalar> constant;
  PerMode<Scalar> total;  // +inf where the mode is unavailable
  std::array<Mask, 3> available;
};

/// Car: alpha*T + (tau - k)*p + delta_car.
/// Transit: alpha*T + alpha'*PAW - w*k*p + delta. Times in s, PAW in s.
template <typename Scalar>
GeneralizedCosts<Scalar> assemble_costs(const Scenario& s, const PolicyParams& policy,
                                        const PerMode<Scalar>& travel_time, const PerMode<Scalar>& perceived_wait,
                                        const Scalar& price, const std::array<Mask, 3>& available) {
  const auto& p = s.params;
  const int I = s.od_count();
  const int M = s.interval_count();
  const double a = p.alpha_per_second();
  const double aw = p.alpha_wait_per_second();
  const double inf = std::numeric_limits<double>::infinity();
  GeneralizedCosts<Scalar> c;
  c.available = available;
  for (Mode mode : kModes) {
    const int u = index_of(mode);
    c.in_vehicle[u] = travel_time[u] * a;
    c.waiting[u] = mode == Mode::Car ? MatrixX<Scalar>::Zero(I, M) : MatrixX<Scalar>(perceived_wait[u] * aw);
    c.constant[u] = MatrixX<Scalar>::Constant(I, M, Scalar(p.delta[u]));
    const double per_credit = mode == Mode::Car ? static_cast<double>(policy.tau - policy.k)
                                                : -p.redemption[u - 1] * policy.k;
    c.credit[u] = MatrixX<Scalar>::Constant(I, M, Scalar(price * per_credit));
    c.total[u].resize(I, M);
    for (int i = 0; i < I; ++i) {
      for (int m = 0; m < M; ++m) {
        c.total[u](i, m) = available[u](i, m)
                               ? Scalar(c.in_vehicle[u](i, m) + c.waiting[u](i, m) + c.credit[u](i, m) +
                                        c.constant[u](i, m))
                               : Scalar(inf);
      }
    }
  }
  return c;
}

/// Multinomial logit over available modes with max-shift stabilization.
template <typename Scalar>
PerMode<Scalar> logit_probabilities(const PerMode<Scalar>& cost, const std::array<Mask, 3>& available, double theta) {
  using std::exp;
  const auto I = cost[0].rows();
  const auto M = cost[0].cols();
  PerMode<Scalar> prob;
  for (auto& pm : prob) pm = MatrixX<Scalar>::Zero(I, M);
  for (Eigen::Index i = 0; i < I; ++i) {
    for (Eigen::Index m = 0; m < M; ++m) {
      double best = std::numeric_limits<double>::infinity();
      for (int u = 0; u < 3; ++u) {
        if (!available[u](i, m)) continue;
        const double v = value_of(cost[u](i, m));
        if (!std::isfinite(v)) throw ModelError("non-finite generalized cost");
        best = std::min(best, v);
      }
      if (!std::isfinite(best)) throw ModelError("no mode available");
      std::array<Scalar, 3> w;
      Scalar denom(0.0);
      for (int u = 0; u < 3; ++u) {
        if (!available[u](i, m)) continue;
        w[u] = exp((cost[u](i, m) - best) * (-theta));
        denom += w[u];
      }
      for (int u = 0; u < 3; ++u) {
        if (available[u](i, m)) prob[u](i, m) = w[u] / denom;
      }
    }
  }
  return prob;
}

/// Convenience overload: +inf entries mark unavailable modes.
inline PerMode<double> logit_probabilities(const PerMode<double>& cost, double theta) {
  std::array<Mask, 3> available;
  for (int u = 0; u < 3; ++u) {
    if (cost[u].array().isNaN().any()) throw ModelError("non-finite generalized cost");
    available[u] = cost[u].array() < std::numeric_limits<double>::infinity();
  }
  return logit_probabilities<double>(cost, available, theta);
}

}  // namespace corridor

#endif  // CORRIDOR_COST_CHOICE_HPP
