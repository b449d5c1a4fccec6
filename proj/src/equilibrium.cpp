#include "corridor/equilibrium.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <random>

namespace corridor {

Vector pack(const DecisionLayout& L, const PerMode<double>& shares, double price) {
  Vector out(L.size());
  for (int u = 0; u < 3; ++u) {
    for (int i = 0; i < L.ods; ++i) {
      for (int m = 0; m < L.intervals; ++m) out(u * L.block() + i * L.intervals + m) = shares[u](i, m);
    }
  }
  out(L.price()) = price;
  return out;
}

std::array<Mask, 3> mode_availability(const Scenario& s, const PolicyParams& policy) {
  const int I = s.od_count();
  const int M = s.interval_count();
  std::array<Mask, 3> a;
  for (auto& m : a) m = Mask::Constant(I, M, true);
  if (!s.params.operational_features) return a;
  for (int i = 0; i < I; ++i) {
    a[1].row(i).setConstant(s.route_serves(i, Mode::Bus));
    a[2].row(i).setConstant(policy.xi > 0 && s.route_serves(i, Mode::Dras));
  }
  return a;
}

Vector project(const DecisionLayout& L, const Vector& lambda, double price_cap) {
  Vector out = lambda;
  out.head(3 * L.block()) = out.head(3 * L.block()).cwiseMax(0.0).cwiseMin(1.0);
  out(L.price()) = std::clamp(out(L.price()), 0.0, price_cap);
  return out;
}

Vector uniform_start(const Scenario& s, const PolicyParams& policy) {
  const DecisionLayout L(s);
  const auto avail = mode_availability(s, policy);
  PerMode<double> shares;
  for (int u = 0; u < 3; ++u) shares[u] = Matrix::Zero(L.ods, L.intervals);
  for (int i = 0; i < L.ods; ++i) {
    for (int m = 0; m < L.intervals; ++m) {
      const int count = avail[0](i, m) + avail[1](i, m) + avail[2](i, m);
      for (int u = 0; u < 3; ++u) shares[u](i, m) = avail[u](i, m) ? 1.0 / count : 0.0;
    }
  }
  return pack(L, shares, 0.0);
}

template <typename Scalar>
ForwardPass<Scalar> forward_pass(const Scenario& s, const PolicyParams& policy, const VectorX<Scalar>& lambda,
                                 const TransitSupply& supply, double price_cap) {
  const DecisionLayout L(s);
  if (lambda.size() != L.size()) throw InputError("decision vector has the wrong length");
  const auto& p = s.params;
  const int I = L.ods;
  const int M = L.intervals;
  const int S = s.station_count();

  ForwardPass<Scalar> f;
  f.shares = unpack_shares(L, lambda);
  f.price = lambda(L.price());
  f.network = propagate_car_dynamics<Scalar>(s, f.shares[0]);
  f.travel_time[0] = cohort_travel_times<Scalar>(s, f.network, p.v_max_car);
  f.travel_time[1] = cohort_travel_times<Scalar>(s, f.network, p.v_max_bus);
  f.travel_time[2] = cohort_travel_times<Scalar>(s, f.network, p.v_max_dras);

  for (auto& w : f.perceived_wait) w = MatrixX<Scalar>::Zero(I, M);
  if (p.operational_features) {
    f.arrivals.resize(S);
    f.service.resize(S);
    f.waiting.resize(S);
    for (int st = 0; st < S; ++st) {
      for (int k = 0; k < 2; ++k) {
        const Mode mode = k == 0 ? Mode::Bus : Mode::Dras;
        f.arrivals[st][k] = build_arrival_curve<Scalar>(s, st, mode, f.shares[k + 1]);
        f.service[st][k] = serve_events<Scalar>(f.arrivals[st][k], supply.events(st, mode), s.grid.horizon());
        f.waiting[st][k] = VectorX<Scalar>::Zero(M);
        for (int m = 1; m <= M; ++m) f.waiting[st][k](m - 1) = waiting_area(f.arrivals[st][k], f.service[st][k], m);
      }
    }
    for (int i = 0; i < I; ++i) {
      const int o = s.ods[i].origin;
      for (int m = 1; m <= M; ++m) {
        for (int k = 0; k < 2; ++k) {
          f.perceived_wait[k + 1](i, m - 1) =
              perceived_wait<Scalar>(f.waiting[o][k](m - 1), f.arrivals[o][k].in_interval(m), p.eta);
        }
      }
    }
  }

  const auto available = mode_availability(s, policy);
  f.costs = assemble_costs<Scalar>(s, policy, f.travel_time, f.perceived_wait, f.price, available);
  f.probabilities = logit_probabilities<Scalar>(f.costs.total, available, p.theta);
  f.car_fraction = car_fraction<Scalar>(s, f.shares[0]);
  f.market_residual = market_residual<Scalar>(s, policy, f.shares[0]);

  f.residual.resize(L.size());
  for (int u = 0; u < 3; ++u) {
    for (int i = 0; i < I; ++i) {
      for (int m = 0; m < M; ++m) {
        f.residual(u * L.block() + i * M + m) = f.shares[u](i, m) - f.probabilities[u](i, m);
      }
    }
  }
  f.residual(L.price()) = price_residual<Scalar>(s, policy, f.shares[0], f.price, price_cap);
  return f;
}

template ForwardPass<double> forward_pass<double>(const Scenario&, const PolicyParams&, const Vector&,
                                                  const TransitSupply&, double);
template ForwardPass<AutoDiff> forward_pass<AutoDiff>(const Scenario&, const PolicyParams&, const VectorX<AutoDiff>&,
                                                      const TransitSupply&, double);

TransitSupply propagate_supply(const Scenario& s, const PolicyParams& policy, const Vector& lambda) {
  const DecisionLayout L(s);
  const auto shares = unpack_shares<double>(L, lambda);
  if (!s.params.operational_features) {
    TransitSupply none;
    none.bus_events.assign(s.station_count(), {});
    none.dras_events.assign(s.station_count(), {});
    return none;
  }
  const auto net = propagate_car_dynamics<double>(s, shares[0]);
  return propagate_transit(s, policy, net, shares[1], shares[2]);
}

Vector residual(const Scenario& s, const PolicyParams& policy, const Vector& lambda, double price_cap) {
  const auto supply = propagate_supply(s, policy, lambda);
  return forward_pass<double>(s, policy, lambda, supply, price_cap).residual;
}

double merit(const Scenario& s, const PolicyParams& policy, const Vector& lambda, const TransitSupply& supply,
             double price_cap) {
  return 0.5 * forward_pass<double>(s, policy, lambda, supply, price_cap).residual.squaredNorm();
}

Matrix residual_jacobian(const Scenario& s, const PolicyParams& policy, const Vector& lambda,
                         const TransitSupply& supply, double price_cap, Vector* residual_out) {
  const auto n = lambda.size();
  VectorX<AutoDiff> ad(n);
  for (Eigen::Index k = 0; k < n; ++k) ad(k) = AutoDiff(lambda(k), n, k);
  const auto f = forward_pass<AutoDiff>(s, policy, ad, supply, price_cap);
  Matrix J = Matrix::Zero(f.residual.size(), n);
  if (residual_out) residual_out->resize(f.residual.size());
  for (Eigen::Index r = 0; r < f.residual.size(); ++r) {
    if (f.residual(r).derivatives().size() == n) J.row(r) = f.residual(r).derivatives().transpose();
    if (residual_out) (*residual_out)(r) = f.residual(r).value();
  }
  return J;
}

Vector merit_gradient(const Scenario& s, const PolicyParams& policy, const Vector& lambda,
                      const TransitSupply& supply, double price_cap, double* merit_out) {
  Vector r;
  const Matrix J = residual_jacobian(s, policy, lambda, supply, price_cap, &r);
  if (merit_out) *merit_out = 0.5 * r.squaredNorm();
  return J.transpose() * r;
}

Certification certify(const Scenario& s, const PolicyParams& policy, const Vector& lambda,
                      const ForwardPass<double>& pass, const SolverConfig& cfg) {
  const DecisionLayout L(s);
  Certification c;
  c.residual_norm = pass.residual.norm();
  const Matrix sums = pass.shares[0] + pass.shares[1] + pass.shares[2];
  c.max_share_sum_error = (sums.array() - 1.0).abs().maxCoeff();
  const double price = lambda(L.price());
  c.market = market_state(s, policy, pass.shares[0], price);
  c.complementarity = price * c.market.residual;
  c.price_at_cap = policy.tcs_active() && price >= cfg.price_cap - 1e-12;
  const double tol = cfg.eps_market * c.market.supply;
  c.ok = c.residual_norm <= cfg.eps_res && c.max_share_sum_error <= cfg.eps_sum && c.market.residual >= -tol &&
         c.complementarity <= tol;
  return c;
}

namespace {

// Search direction: -g, or the Gauss-Newton step on the variables not held
// at a bound by the gradient (those keep -g).
Vector search_direction(const DecisionLayout& L, const Vector& lambda, const Matrix& J, const Vector& g,
                        const SolverConfig& cfg) {
  if (cfg.metric == "gradient") return -g;
  const auto n = lambda.size();
  std::vector<Eigen::Index> free;
  Vector d = -g;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double hi = k == L.price() ? cfg.price_cap : 1.0;
    const bool at_lower = lambda(k) <= 0.0 && g(k) > 0.0;
    const bool at_upper = lambda(k) >= hi && g(k) < 0.0;
    if (!at_lower && !at_upper) free.push_back(k);
  }
  if (free.empty()) return d;
  const auto nf = static_cast<Eigen::Index>(free.size());
  Matrix Jf(J.rows(), nf);
  Vector gf(nf);
  for (Eigen::Index c = 0; c < nf; ++c) {
    Jf.col(c) = J.col(free[c]);
    gf(c) = g(free[c]);
  }
  Matrix H = Jf.transpose() * Jf;
  const double mu = cfg.lm_damping * std::max(1.0, H.diagonal().maxCoeff());
  H.diagonal().array() += mu;
  const Vector df = H.ldlt().solve(-gf);
  if (!df.allFinite()) return d;
  for (Eigen::Index c = 0; c < nf; ++c) d(free[c]) = df(c);
  return d;
}

EquilibriumResult solve_from(const Scenario& s, const PolicyParams& policy, const Vector& start,
                             const SolverConfig& cfg, const IterationObserver& observer) {
  const DecisionLayout L(s);
  const double cap = cfg.price_cap;
  const bool newton = cfg.metric != "gradient";
  EquilibriumResult res;
  res.policy = policy;
  Vector lambda = project(L, start, cap);
  res.initial = lambda;

  TransitSupply supply;
  Vector r;
  Matrix J;
  double phi = 0.0;
  auto linearize = [&] {
    supply = propagate_supply(s, policy, lambda);
    J = residual_jacobian(s, policy, lambda, supply, cap, &r);
    phi = 0.5 * r.squaredNorm();
  };
  linearize();
  double step = newton ? 1.0 : cfg.initial_step;
  Vector best = lambda;
  double best_norm = std::numeric_limits<double>::infinity();
  int damped = 0;

  for (int iter = 0;; ++iter) {
    const auto pass = forward_pass<double>(s, policy, lambda, supply, cap);
    const auto cert = certify(s, policy, lambda, pass, cfg);
    if (observer) observer(iter, pass);
    if (cert.residual_norm < best_norm) {
      best_norm = cert.residual_norm;
      best = lambda;
    }
    res.iterations = iter;
    if (cert.ok) {
      res.converged = true;
      res.status = "converged";
      best = lambda;
      break;
    }
    if (iter >= cfg.max_iter) {
      res.status = "iteration limit reached";
      break;
    }

    const Vector g = J.transpose() * r;
    Vector d = search_direction(L, lambda, J, g, cfg);
    if (newton) step = 1.0;
    Vector cand;
    int backtracks = 0;
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      for (backtracks = 0; backtracks <= cfg.max_backtracks; ++backtracks) {
        cand = project(L, lambda + step * d, cap);
        const double decrease = g.dot(lambda - cand);
        if (!(decrease > 0.0)) break;
        const double phi_cand = merit(s, policy, cand, supply, cap);
        if (phi_cand <= phi - cfg.armijo_c * decrease) {
          accepted = true;
          break;
        }
        step *= cfg.backtrack_beta;
      }
      if (!accepted && newton) {
        // Fall back to the plain projected gradient for this iteration.
        d = -g;
        step = cfg.initial_step;
      } else {
        break;
      }
    }
    res.trace.push_back({iter, phi, cert.residual_norm, step, backtracks});
    if (!accepted) {
      res.status = "no descent step found";
      break;
    }
    if (!newton && backtracks == 0) step = std::min(step * cfg.step_growth, cfg.max_step);

    const Vector previous = lambda;
    const double phi_previous = phi;
    lambda = cand;
    linearize();
    if (phi > phi_previous && cfg.damping > 0.0 && cfg.damping < 1.0) {
      // Timeline update undid the descent: average with the previous iterate.
      lambda = project(L, previous + cfg.damping * (lambda - previous), cap);
      linearize();
      ++damped;
    }
    if (std::abs(phi - phi_previous) <= cfg.eps_loss) {
      const auto p2 = forward_pass<double>(s, policy, lambda, supply, cap);
      if (!certify(s, policy, lambda, p2, cfg).ok) {
        res.iterations = iter + 1;
        res.status = "merit change below tolerance";
        if (p2.residual.norm() < best_norm) best = lambda;
        break;
      }
    }
  }

  // Snap a slack market's price to exactly zero when that keeps the certificate.
  if (res.converged && policy.tcs_active() && best(L.price()) > 0.0) {
    Vector snapped = best;
    snapped(L.price()) = 0.0;
    const auto sup = propagate_supply(s, policy, snapped);
    const auto pass = forward_pass<double>(s, policy, snapped, sup, cap);
    if (pass.market_residual > 0.0 && certify(s, policy, snapped, pass, cfg).ok) best = snapped;
  }

  res.decision = best;
  const auto sup = propagate_supply(s, policy, best);
  const auto pass = forward_pass<double>(s, policy, best, sup, cap);
  res.certification = certify(s, policy, best, pass, cfg);
  res.residual_norm = res.certification.residual_norm;
  res.converged = res.converged && res.certification.ok;
  if (res.certification.price_at_cap) {
    res.warnings.push_back("credit price reached the cap " + std::to_string(cap));
    res.converged = false;
    res.status = "price cap binding";
  }
  if (damped > 0) res.warnings.push_back("timeline damping applied " + std::to_string(damped) + " times");
  return res;
}

Vector random_start(const Scenario& s, const PolicyParams& policy, std::uint64_t seed) {
  const DecisionLayout L(s);
  const auto avail = mode_availability(s, policy);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  PerMode<double> shares;
  for (int u = 0; u < 3; ++u) shares[u] = Matrix::Zero(L.ods, L.intervals);
  for (int i = 0; i < L.ods; ++i) {
    for (int m = 0; m < L.intervals; ++m) {
      double total = 0.0;
      for (int u = 0; u < 3; ++u) {
        if (avail[u](i, m)) total += shares[u](i, m) = unit(rng);
      }
      for (int u = 0; u < 3; ++u) shares[u](i, m) /= total;
    }
  }
  return pack(L, shares, 0.0);
}

bool better(const EquilibriumResult& a, const EquilibriumResult& b) {
  if (a.converged != b.converged) return a.converged;
  return a.residual_norm < b.residual_norm;
}

}  // namespace

EquilibriumResult solve_equilibrium(const Scenario& s, const PolicyParams& policy,
                                    const std::optional<Vector>& init, const SolverConfig& cfg,
                                    const IterationObserver& observer) {
  validate(policy);
  const DecisionLayout L(s);
  if (init && init->size() != L.size()) throw InputError("initial decision vector has the wrong length");
  EquilibriumResult res = solve_from(s, policy, init ? *init : uniform_start(s, policy), cfg, observer);
  if (!init) {
    for (auto seed : cfg.seeds) {
      auto alt = solve_from(s, policy, random_start(s, policy, seed), cfg, observer);
      if (better(alt, res)) res = std::move(alt);
    }
  }
  return res;
}

std::vector<EquilibriumResult> warm_start_chain(const Scenario& s, const std::vector<PolicyParams>& policies,
                                                const SolverConfig& cfg) {
  std::vector<EquilibriumResult> out;
  const DecisionLayout L(s);
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  for (const auto& policy : policies) {
    std::optional<Vector> init;
    if (!out.empty()) {
      Vector v = out.back().decision;
      if (cfg.perturbation > 0.0) {
        for (int k = 0; k < 3 * L.block(); ++k) v(k) += cfg.perturbation * noise(rng);
      }
      init = project(L, v, cfg.price_cap);
    }
    out.push_back(solve_equilibrium(s, policy, init, cfg));
  }
  return out;
}

Snapshot snapshot(const Scenario& s, const PolicyParams& policy, const Vector& lambda, double price_cap) {
  Snapshot snap;
  snap.supply = propagate_supply(s, policy, lambda);
  snap.pass = forward_pass<double>(s, policy, lambda, snap.supply, price_cap);
  return snap;
}

}  // namespace corridor
