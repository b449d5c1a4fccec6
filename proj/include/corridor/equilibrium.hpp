#ifndef CORRIDOR_EQUILIBRIUM_HPP
#define CORRIDOR_EQUILIBRIUM_HPP

#include "corridor/cost_choice.hpp"
#include "corridor/market.hpp"
#include "corridor/mfd.hpp"
#include "corridor/queue.hpp"
#include "corridor/transit.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace corridor {

/// Flat decision vector [x | y | z | p]; block b, od i, interval m (0-based)
/// lives at b*I*M + i*M + m.
struct DecisionLayout {
  int ods = 0;
  int intervals = 0;

  explicit DecisionLayout(const Scenario& s) : ods(s.od_count()), intervals(s.interval_count()) {}

  int block() const { return ods * intervals; }
  int size() const { return 3 * block() + 1; }
  int index(Mode mode, int i, int m) const { return index_of(mode) * block() + i * intervals + m; }
  int price() const { return 3 * block(); }
};

template <typename Scalar>
PerMode<Scalar> unpack_shares(const DecisionLayout& L, const VectorX<Scalar>& lambda) {
  PerMode<Scalar> out;
  for (int u = 0; u < 3; ++u) {
    out[u].resize(L.ods, L.intervals);
    for (int i = 0; i < L.ods; ++i) {
      for (int m = 0; m < L.intervals; ++m) out[u](i, m) = lambda(u * L.block() + i * L.intervals + m);
    }
  }
  return out;
}

Vector pack(const DecisionLayout& L, const PerMode<double>& shares, double price);

/// Which modes each (od, interval) may choose under the policy.
std::array<Mask, 3> mode_availability(const Scenario& s, const PolicyParams& policy);

/// Elementwise projection onto K: shares in [0, 1], price in [0, cap].
Vector project(const DecisionLayout& L, const Vector& lambda, double price_cap);

/// Uniform shares over available modes, zero price.
Vector uniform_start(const Scenario& s, const PolicyParams& policy);

/// Everything computed by one forward pass.
template <typename Scalar>
struct ForwardPass {
  PerMode<Scalar> shares;
  Scalar price{0.0};
  NetworkState<Scalar> network;
  PerMode<Scalar> travel_time;
  // Per station: index 0 bus, 1 DRAS.
  std::vector<std::array<ArrivalCurve<Scalar>, 2>> arrivals;
  std::vector<std::array<ServiceCurve<Scalar>, 2>> service;
  std::vector<std::array<VectorX<Scalar>, 2>> waiting;  // W per interval
  PerMode<Scalar> perceived_wait;                      // PAW at the OD's origin
  GeneralizedCosts<Scalar> costs;
  PerMode<Scalar> probabilities;
  Scalar car_fraction{0.0};
  Scalar market_residual{0.0};
  VectorX<Scalar> residual;
};

/// Full forward pass with service timelines frozen to `supply`.
template <typename Scalar>
ForwardPass<Scalar> forward_pass(const Scenario& s, const PolicyParams& policy, const VectorX<Scalar>& lambda,
                                 const TransitSupply& supply, double price_cap);

extern template ForwardPass<double> forward_pass<double>(const Scenario&, const PolicyParams&, const Vector&,
                                                         const TransitSupply&, double);
extern template ForwardPass<AutoDiff> forward_pass<AutoDiff>(const Scenario&, const PolicyParams&,
                                                             const VectorX<AutoDiff>&, const TransitSupply&, double);

/// Propagates bus and DRAS timelines for the shares in `lambda`.
TransitSupply propagate_supply(const Scenario& s, const PolicyParams& policy, const Vector& lambda);

/// Residual F(lambda) with timelines re-propagated at lambda.
Vector residual(const Scenario& s, const PolicyParams& policy, const Vector& lambda, double price_cap);

/// Merit 0.5*|F|^2 and its gradient J^T F with timelines frozen to `supply`.
double merit(const Scenario& s, const PolicyParams& policy, const Vector& lambda, const TransitSupply& supply,
             double price_cap);
Vector merit_gradient(const Scenario& s, const PolicyParams& policy, const Vector& lambda,
                      const TransitSupply& supply, double price_cap, double* merit_out = nullptr);

/// Jacobian of F with timelines frozen to `supply`; also returns F.
Matrix residual_jacobian(const Scenario& s, const PolicyParams& policy, const Vector& lambda,
                         const TransitSupply& supply, double price_cap, Vector* residual_out = nullptr);

struct Certification {
  double residual_norm = 0.0;
  double max_share_sum_error = 0.0;
  MarketState market;
  double complementarity = 0.0;  // price * residual (credits)
  bool price_at_cap = false;
  bool ok = false;
};

Certification certify(const Scenario& s, const PolicyParams& policy, const Vector& lambda,
                      const ForwardPass<double>& pass, const SolverConfig& cfg);

struct IterationRecord {
  int iteration = 0;
  double merit = 0.0;
  double residual_norm = 0.0;
  double step = 0.0;
  int backtracks = 0;
};

struct EquilibriumResult {
  PolicyParams policy;
  Vector decision;
  Vector initial;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string status;
  Certification certification;
  std::vector<IterationRecord> trace;
  std::vector<std::string> warnings;
};

/// Called after every accepted iterate with the fresh forward pass.
using IterationObserver = std::function<void(int iteration, const ForwardPass<double>&)>;

/// Projected gradient on 0.5*|F|^2 with Armijo backtracking; timelines are
/// frozen inside each gradient/line search and re-propagated after each step.
EquilibriumResult solve_equilibrium(const Scenario& s, const PolicyParams& policy,
                                    const std::optional<Vector>& init, const SolverConfig& cfg,
                                    const IterationObserver& observer = {});

/// Solves the policies in order, each starting from the previous solution.
std::vector<EquilibriumResult> warm_start_chain(const Scenario& s, const std::vector<PolicyParams>& policies,
                                                const SolverConfig& cfg);

/// Fresh double forward pass and supply at a decision vector, for reporting.
struct Snapshot {
  TransitSupply supply;
  ForwardPass<double> pass;
};
Snapshot snapshot(const Scenario& s, const PolicyParams& policy, const Vector& lambda, double price_cap);

}  // namespace corridor

#endif  // CORRIDOR_EQUILIBRIUM_HPP
