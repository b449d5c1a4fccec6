#include "corridor/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace corridor {

using nlohmann::json;

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // no "-0"
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string format_clock(double seconds) {
  const long s = std::lround(seconds);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%02ld:%02ld:%02ld", s / 3600, (s / 60) % 60, s % 60);
  return buf;
}

Csv::Csv(std::vector<std::string> header) : header_(std::move(header)) {}

Csv& Csv::operator<<(double v) { return *this << format_number(v); }

Csv& Csv::operator<<(int v) {
  current_.push_back(std::to_string(v));
  return *this;
}

Csv& Csv::operator<<(const std::string& v) {
  current_.push_back(v);
  return *this;
}

void Csv::end_row() {
  if (current_.size() != header_.size()) throw ModelError("csv row has the wrong number of fields");
  rows_.push_back(std::move(current_));
  current_.clear();
}

namespace {

std::string quoted(const std::string& f) {
  if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_line(std::ostringstream& os, const std::vector<std::string>& fields) {
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (k) os << ',';
    os << quoted(fields[k]);
  }
  os << "\r\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

const char* queue_mode(int k) { return k == 0 ? "bus" : "dras"; }

}  // namespace

std::string Csv::str() const {
  std::ostringstream os;
  write_line(os, header_);
  for (const auto& r : rows_) write_line(os, r);
  return os.str();
}

void Csv::write(const std::filesystem::path& path) const { write_text(path, str()); }

void write_manifest(const RunManifest& m) {
  json j;
  j["command"] = m.command;
  j["scenario"] = m.scenario_path;
  j["overrides"] = m.overrides;
  j["arguments"] = m.arguments;
  j["output_dir"] = m.output_dir.string();
  j["tool_version"] = kToolVersion;
  json t = json::object();
  for (const auto& [name, sec] : m.timings) t[name] = sec;
  j["timings_s"] = t;
  write_text(m.output_dir / "manifest.json", j.dump(2) + "\n");
}

namespace {

std::map<std::string, std::string> key_values(const std::string& text, const std::string& what) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
      throw InputError("malformed " + what + " entry '" + item + "', expected key=value");
    }
    if (!out.emplace(item.substr(0, eq), item.substr(eq + 1)).second) {
      throw InputError("duplicate " + what + " key '" + item.substr(0, eq) + "'");
    }
  }
  if (out.empty()) throw InputError("empty " + what);
  return out;
}

int to_int(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const int r = std::stoi(v, &used);
    if (used == v.size()) return r;
  } catch (const std::exception&) {
  }
  throw InputError("'" + key + "' expects an integer, got '" + v + "'");
}

double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const double r = std::stod(v, &used);
    if (used == v.size()) return r;
  } catch (const std::exception&) {
  }
  throw InputError("'" + key + "' expects a number, got '" + v + "'");
}

}  // namespace

PolicyParams parse_policy(const std::string& text, const PolicyParams& base) {
  PolicyParams p = base;
  for (const auto& [key, value] : key_values(text, "policy")) {
    if (key == "k") {
      p.k = to_int(value, key);
    } else if (key == "tau") {
      p.tau = to_int(value, key);
    } else if (key == "xi") {
      p.xi = to_int(value, key);
    } else {
      throw InputError("unknown policy key '" + key + "' (k, tau, xi)");
    }
  }
  validate(p);
  return p;
}

GridSpec parse_grid(const std::string& text, const GridSpec& base) {
  GridSpec g = base;
  for (const auto& [key, value] : key_values(text, "grid")) {
    if (key == "k") {
      g.k_values = parse_range(value);
    } else if (key == "tau") {
      g.tau_values = parse_range(value);
    } else if (key == "xi") {
      g.xi_values = parse_range(value);
    } else {
      throw InputError("unknown grid axis '" + key + "' (k, tau, xi)");
    }
  }
  if (g.k_values.empty() || g.tau_values.empty() || g.xi_values.empty()) throw InputError("empty grid axis");
  return g;
}

ObjectiveWeights parse_weights(const std::string& text, const ObjectiveWeights& base) {
  ObjectiveWeights w = base;
  for (const auto& [key, value] : key_values(text, "weights")) {
    const double v = to_double(value, key);
    if (v < 0.0) throw InputError("weight '" + key + "' must be non-negative");
    if (key == "tt") {
      w.travel_time = v;
    } else if (key == "em") {
      w.emission = v;
    } else if (key == "as") {
      w.fleet = v;
    } else if (key == "cp") {
      w.price = v;
    } else {
      throw InputError("unknown weight '" + key + "' (tt, em, as, cp)");
    }
  }
  return w;
}

json equilibrium_json(const Scenario& s, const EquilibriumResult& r) {
  const DecisionLayout L(s);
  const auto shares = unpack_shares<double>(L, r.decision);
  const auto start = unpack_shares<double>(L, r.initial);
  auto blocks = [&](const PerMode<double>& sh) {
    json j;
    for (Mode mode : kModes) {
      json rows = json::array();
      for (int i = 0; i < L.ods; ++i) {
        std::vector<double> row;
        for (int m = 0; m < L.intervals; ++m) row.push_back(sh[index_of(mode)](i, m));
        rows.push_back(row);
      }
      j[to_string(mode)] = rows;
    }
    return j;
  };
  const auto& c = r.certification;
  json j;
  j["scenario"] = s.name;
  j["policy"] = {{"k", r.policy.k}, {"tau", r.policy.tau}, {"xi", r.policy.xi}, {"d_max", r.policy.d_max()}};
  j["status"] = r.status;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["residual_norm"] = r.residual_norm;
  j["warnings"] = r.warnings;
  j["certification"] = {{"residual_norm", c.residual_norm},
                        {"max_share_sum_error", c.max_share_sum_error},
                        {"complementarity", c.complementarity},
                        {"price_at_cap", c.price_at_cap},
                        {"ok", c.ok}};
  j["market"] = {{"price", c.market.price},
                 {"supply", c.market.supply},
                 {"consumption", c.market.consumption},
                 {"residual", c.market.residual}};
  std::vector<json> ods;
  for (const auto& od : s.ods) {
    ods.push_back({{"origin", s.stations[od.origin].id},
                   {"destination", s.stations[od.destination].id},
                   {"length", od.length}});
  }
  j["ods"] = ods;
  j["decision"] = blocks(shares);
  j["decision"]["price"] = r.decision(L.price());
  j["initial"] = blocks(start);
  j["initial"]["price"] = r.initial(L.price());
  return j;
}

Csv shares_table(const Scenario& s, const ForwardPass<double>& f) {
  Csv csv({"od", "origin", "destination", "interval", "clock", "demand", "x_car", "y_bus", "z_dras", "p_car",
           "p_bus", "p_dras", "t_car", "t_bus", "t_dras", "paw_bus", "paw_dras"});
  for (int i = 0; i < s.od_count(); ++i) {
    for (int m = 0; m < s.interval_count(); ++m) {
      csv << i << s.stations[s.ods[i].origin].id << s.stations[s.ods[i].destination].id << m + 1
          << format_clock(s.grid.start + s.grid.boundary(m)) << s.demand(i, m);
      for (int u = 0; u < 3; ++u) csv << f.shares[u](i, m);
      for (int u = 0; u < 3; ++u) csv << f.probabilities[u](i, m);
      for (int u = 0; u < 3; ++u) csv << f.travel_time[u](i, m);
      csv << f.perceived_wait[1](i, m) << f.perceived_wait[2](i, m);
      csv.end_row();
    }
  }
  return csv;
}

Csv network_table(const Scenario& s, const ForwardPass<double>& f) {
  Csv csv({"interval", "clock", "accumulation", "background", "speed_kmh", "clock_distance_m", "entries", "exits"});
  const auto& n = f.network;
  for (int m = 0; m < s.interval_count(); ++m) {
    csv << m + 1 << format_clock(s.grid.start + s.grid.boundary(m)) << n.n(m) << s.background(m) << n.speed(m)
        << n.z(m + 1) << n.q_in(m) << n.q_out(m);
    csv.end_row();
  }
  return csv;
}

Csv waiting_table(const Scenario& s, const ForwardPass<double>& f) {
  Csv csv({"station", "mode", "interval", "clock", "arrivals", "waiting_pax_s", "average_wait_s", "perceived_wait_s"});
  for (std::size_t st = 0; st < f.waiting.size(); ++st) {
    for (int k = 0; k < 2; ++k) {
      for (int m = 1; m <= s.interval_count(); ++m) {
        const double arrivals = f.arrivals[st][k].in_interval(m);
        const double W = f.waiting[st][k](m - 1);
        csv << s.stations[st].id << queue_mode(k) << m << format_clock(s.grid.start + s.grid.boundary(m - 1))
            << arrivals << W << average_wait(W, arrivals) << perceived_wait<double>(W, arrivals, s.params.eta);
        csv.end_row();
      }
    }
  }
  return csv;
}

Csv market_table(const Scenario& s, const EquilibriumResult& r, const ForwardPass<double>& f) {
  Csv csv({"k", "tau", "d_max", "price", "credit_supply", "credit_consumption", "residual", "car_fraction",
           "complementarity"});
  const auto m = market_state(s, r.policy, f.shares[0], f.price);
  csv << r.policy.k << r.policy.tau << r.policy.d_max() << m.price << m.supply << m.consumption << m.residual
      << f.car_fraction << m.price * m.residual;
  csv.end_row();
  return csv;
}

Csv trace_table(const EquilibriumResult& r) {
  Csv csv({"iteration", "merit", "residual_norm", "step", "backtracks"});
  for (const auto& t : r.trace) {
    csv << t.iteration << t.merit << t.residual_norm << t.step << t.backtracks;
    csv.end_row();
  }
  return csv;
}

Csv timelines_table(const Scenario& s, const TransitSupply& supply) {
  Csv csv({"mode", "vehicle", "visit", "station", "arrival_s", "departure_s", "boarded", "alighted", "stuck"});
  for (const auto& v : supply.vehicles) {
    for (std::size_t k = 0; k < v.visits.size(); ++k) {
      const auto& vis = v.visits[k];
      const bool stuck = v.stuck && k + 1 == v.visits.size();
      csv << to_string(v.mode) << v.id << static_cast<int>(k) << s.stations[vis.station].id << vis.t_arr << vis.t_dep
          << vis.boarded << vis.alighted << (stuck ? "1" : "0");
      csv.end_row();
    }
  }
  return csv;
}

Csv curves_table(const Scenario& s, const ForwardPass<double>& f) {
  Csv csv({"station", "mode", "curve", "time_s", "cumulative"});
  for (std::size_t st = 0; st < f.arrivals.size(); ++st) {
    for (int k = 0; k < 2; ++k) {
      const auto& a = f.arrivals[st][k];
      for (int m = 0; m <= a.interval_count(); ++m) {
        csv << s.stations[st].id << queue_mode(k) << "arrival" << m * a.step << a.cumulative(m);
        csv.end_row();
      }
      const auto& sv = f.service[st][k];
      for (std::size_t e = 0; e < sv.times.size(); ++e) {
        csv << s.stations[st].id << queue_mode(k) << "service" << sv.times[e] << sv.cumulative[e];
        csv.end_row();
      }
    }
  }
  return csv;
}

Csv costs_table(const Scenario& s, const ForwardPass<double>& f) {
  Csv csv({"od", "interval", "mode", "available", "in_vehicle", "waiting", "credit", "constant", "total"});
  const auto& c = f.costs;
  for (int i = 0; i < s.od_count(); ++i) {
    for (int m = 0; m < s.interval_count(); ++m) {
      for (Mode mode : kModes) {
        const int u = index_of(mode);
        csv << i << m + 1 << to_string(mode) << (c.available[u](i, m) ? "1" : "0") << c.in_vehicle[u](i, m)
            << c.waiting[u](i, m) << c.credit[u](i, m) << c.constant[u](i, m) << c.total[u](i, m);
        csv.end_row();
      }
    }
  }
  return csv;
}

void write_equilibrium_outputs(const std::filesystem::path& dir, const Scenario& s, const EquilibriumResult& r) {
  const auto snap = snapshot(s, r.policy, r.decision, s.solver.price_cap);
  write_text(dir / "equilibrium.json", equilibrium_json(s, r).dump(2) + "\n");
  shares_table(s, snap.pass).write(dir / "shares.csv");
  network_table(s, snap.pass).write(dir / "network.csv");
  waiting_table(s, snap.pass).write(dir / "waiting.csv");
  market_table(s, r, snap.pass).write(dir / "market.csv");
  trace_table(r).write(dir / "trace.csv");
  timelines_table(s, snap.supply).write(dir / "timelines.csv");
  curves_table(s, snap.pass).write(dir / "curves.csv");
  costs_table(s, snap.pass).write(dir / "costs.csv");
}

namespace {

const std::vector<std::string> kPointColumns = {
    "k", "tau", "d_max", "xi", "travel_time_cost", "emission_cost", "fleet_cost", "price_penalty", "total",
    "converged", "feasible", "price", "car_share", "bus_share", "dras_share", "in_vehicle_hours", "waiting_hours",
    "car_km", "residual_norm", "iterations"};

void point_fields(Csv& csv, const PolicyPoint& p) {
  csv << p.policy.k << p.policy.tau << p.d_max() << p.policy.xi << p.travel_time_cost << p.emission_cost
      << p.fleet_cost << p.price_penalty << p.total << (p.converged ? "1" : "0") << (p.feasible ? "1" : "0")
      << p.price << p.mode_share[0] << p.mode_share[1] << p.mode_share[2] << p.in_vehicle_hours << p.waiting_hours
      << p.car_km << p.equilibrium.residual_norm << p.equilibrium.iterations;
}

json point_json(const PolicyPoint& p) {
  auto finite = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"k", p.policy.k},
          {"tau", p.policy.tau},
          {"xi", p.policy.xi},
          {"d_max", p.d_max()},
          {"total", finite(p.total)},
          {"price", p.price},
          {"car_share", p.mode_share[0]},
          {"converged", p.converged}};
}

}  // namespace

Csv sweep_table(const GridResult& g) {
  Csv csv(kPointColumns);
  for (const auto& p : g.points) {
    point_fields(csv, p);
    csv.end_row();
  }
  return csv;
}

json sweep_summary(const GridResult& g) {
  json j;
  j["points"] = g.points.size();
  int failed = 0;
  for (const auto& p : g.points) failed += !p.converged;
  j["non_converged"] = failed;
  j["optimum"] = g.optimum ? point_json(g.points[*g.optimum]) : json(nullptr);
  json per_xi = json::array();
  for (const auto& [xi, idx] : g.best_per_xi) per_xi.push_back(point_json(g.points[idx]));
  j["best_per_xi"] = per_xi;
  json per_d = json::array();
  for (const auto& [d, idx] : g.best_per_d_max) per_d.push_back(point_json(g.points[idx]));
  j["best_per_d_max"] = per_d;
  return j;
}

Csv comparison_table(const std::vector<ComparisonRow>& rows) {
  std::vector<std::string> cols = {"scenario", "charge_per_trip", "travel_time_delta_pct", "distance_delta_pct",
                                   "objective_delta_pct"};
  cols.insert(cols.begin() + 1, kPointColumns.begin(), kPointColumns.end());
  Csv csv(cols);
  for (const auto& r : rows) {
    csv << r.label;
    point_fields(csv, r.point);
    csv << r.charge_per_trip << r.travel_time_delta << r.distance_delta << r.objective_delta;
    csv.end_row();
  }
  return csv;
}

std::string format_comparison(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %4s %4s %4s %12s %10s %12s %10s %8s %8s %7s %14s\n", "scenario", "xi", "k",
                "tau", "travel (h)", "wait (h)", "car (km)", "fleet/day", "price", "charge", "car %", "objective");
  os << line;
  for (const auto& r : rows) {
    const auto& p = r.point;
    std::snprintf(line, sizeof line, "%-12s %4d %4d %4d %12.1f %10.1f %12.1f %10.0f %8.4f %8.2f %7.1f %14.1f%s\n",
                  r.label.c_str(), p.policy.xi, p.policy.k, p.policy.tau, p.in_vehicle_hours, p.waiting_hours,
                  p.car_km, p.fleet_cost_per_day, p.price, r.charge_per_trip, 100.0 * p.mode_share[0], p.total,
                  p.converged ? "" : "  (not converged)");
    os << line;
  }
  return os.str();
}

}  // namespace corridor
