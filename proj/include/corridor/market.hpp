#ifndef CORRIDOR_MARKET_HPP
#define CORRIDOR_MARKET_HPP

#include "corridor/scenario.hpp"

namespace corridor {

struct MarketState {
  double price = 0.0;
  double supply = 0.0;       // credits allocated
  double consumption = 0.0;  // credits spent on car trips
  double residual = 0.0;     // supply - consumption
};

inline double credit_supply(const Scenario& s, const PolicyParams& policy) { return s.total_demand() * policy.k; }

/// Demand-weighted car fraction over the whole horizon.
template <typename Scalar>
Scalar car_fraction(const Scenario& s, const MatrixX<Scalar>& x) {
  Scalar cars(0.0);
  for (int i = 0; i < s.od_count(); ++i) {
    for (int m = 0; m < s.interval_count(); ++m) {
      if (s.demand(i, m) != 0.0) cars += x(i, m) * s.demand(i, m);
    }
  }
  const double total = s.total_demand();
  return total > 0.0 ? Scalar(cars / total) : Scalar(0.0);
}

/// Unused credits: sum q*k - sum q*x*tau.
template <typename Scalar>
Scalar market_residual(const Scenario& s, const PolicyParams& policy, const MatrixX<Scalar>& x) {
  Scalar used(0.0);
  for (int i = 0; i < s.od_count(); ++i) {
    for (int m = 0; m < s.interval_count(); ++m) {
      if (s.demand(i, m) != 0.0) used += x(i, m) * (s.demand(i, m) * policy.tau);
    }
  }
  return credit_supply(s, policy) - used;
}

inline MarketState market_state(const Scenario& s, const PolicyParams& policy, const Matrix& x, double price) {
  MarketState st;
  st.price = price;
  st.supply = credit_supply(s, policy);
  st.residual = market_residual<double>(s, policy, x);
  st.consumption = st.supply - st.residual;
  return st;
}

/// Price component of the solver residual: natural residual of
/// 0 <= p <= cap complementary to (d_max - car fraction). Equals p when no
/// scheme is active.
template <typename Scalar>
Scalar price_residual(const Scenario& s, const PolicyParams& policy, const MatrixX<Scalar>& x, const Scalar& p,
                      double price_cap) {
  if (!policy.tcs_active()) return p;
  const Scalar slack = Scalar(policy.d_max() - car_fraction(s, x));
  return smax<Scalar>(Scalar(p - price_cap), smin<Scalar>(p, slack));
}

}  // namespace corridor

#endif  // CORRIDOR_MARKET_HPP
