#include "corridor/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace corridor {

using nlohmann::json;

int TimeGrid::interval_of(double t) const {
  const int m = static_cast<int>(std::floor(t / step)) + 1;
  return std::clamp(m, 1, count);
}

double ModeParams::cap_of(Mode m) const {
  switch (m) {
    case Mode::Car: return v_max_car;
    case Mode::Bus: return v_max_bus;
    case Mode::Dras: return v_max_dras;
  }
  return v_max_car;
}

namespace {

// Upper tail of the standard normal.
double upper_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Mass of N(0,1) on [a, b]; evaluated on the tail that keeps mirrored
// intervals bit-identical.
double normal_mass(double a, double b) {
  if (a >= 0.0) return upper_tail(a) - upper_tail(b);
  if (b <= 0.0) return upper_tail(-b) - upper_tail(-a);
  return 1.0 - upper_tail(-a) - upper_tail(b);
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw InputError(path + ": " + what);
}

template <typename T>
T read(const json& obj, const char* key, const std::string& path, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(path + "." + key, e.what());
  }
}

template <typename T>
T require(const json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) fail(path + "." + key, "missing required field");
  return read<T>(obj, key, path, T{});
}

int station_index(const std::vector<Station>& stations, const json& ref, const std::string& path) {
  if (ref.is_number_integer()) {
    const int idx = ref.get<int>();
    if (idx < 0 || idx >= static_cast<int>(stations.size())) fail(path, "station index out of range");
    return idx;
  }
  if (!ref.is_string()) fail(path, "station reference must be an id or index");
  const auto id = ref.get<std::string>();
  for (std::size_t s = 0; s < stations.size(); ++s) {
    if (stations[s].id == id) return static_cast<int>(s);
  }
  fail(path, "unknown station '" + id + "'");
}

std::vector<int> read_int_list(const json& v, const std::string& path) {
  if (v.is_string()) {
    try {
      return parse_range(v.get<std::string>());
    } catch (const InputError& e) {
      fail(path, e.what());
    }
  }
  if (!v.is_array()) fail(path, "expected an array or a range string");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) fail(path, "expected integers");
    out.push_back(e.get<int>());
  }
  return out;
}

ModeParams parse_mode_params(const json& j) {
  const std::string path = "mode_params";
  ModeParams p;
  p.v_max_car = read(j, "v_max_car", path, p.v_max_car);
  p.v_max_bus = read(j, "v_max_bus", path, p.v_max_bus);
  p.v_max_dras = read(j, "v_max_dras", path, p.v_max_dras);
  p.v_min = read(j, "v_min", path, p.v_min);
  p.n_max = read(j, "n_max", path, p.n_max);
  p.alpha = read(j, "alpha", path, p.alpha);
  p.alpha_wait = read(j, "alpha_wait", path, p.alpha_wait);
  p.theta = read(j, "theta", path, p.theta);
  if (!j.contains("delta")) fail(path + ".delta", "missing required field");
  const auto& d = j.at("delta");
  p.delta = {require<double>(d, "car", path + ".delta"), require<double>(d, "bus", path + ".delta"),
             require<double>(d, "dras", path + ".delta")};
  p.eta = require<double>(j, "eta", path);
  p.bus_capacity = read(j, "bus_capacity", path, p.bus_capacity);
  p.bus_interval = read(j, "bus_interval", path, p.bus_interval);
  p.bus_first_departure = read(j, "bus_first_departure", path, p.bus_first_departure);
  p.bus_dwell = read(j, "bus_dwell", path, p.bus_dwell);
  p.dras_capacity = read(j, "dras_capacity", path, p.dras_capacity);
  p.omega = read(j, "omega", path, p.omega);
  p.headway_min = read(j, "headway_min", path, p.headway_min);
  p.dras_launch_gap = read(j, "dras_launch_gap", path, p.dras_launch_gap);
  p.dras_first_launch = read(j, "dras_first_launch", path, p.dras_first_launch);
  p.emission_cost = read(j, "emission_cost", path, p.emission_cost);
  p.fleet_unit_cost = read(j, "fleet_unit_cost", path, p.fleet_unit_cost);
  p.budget = read(j, "budget", path, p.budget);
  if (j.contains("redemption_weights")) {
    const auto& r = j.at("redemption_weights");
    p.redemption = {read(r, "bus", path + ".redemption_weights", 1.0),
                    read(r, "dras", path + ".redemption_weights", 1.0)};
  }
  p.operational_features = read(j, "operational_features", path, p.operational_features);
  p.dras_remaining_seats = read(j, "dras_remaining_seats", path, p.dras_remaining_seats);
  p.interpolated_exits = read(j, "interpolated_exits", path, p.interpolated_exits);
  return p;
}

SolverConfig parse_solver(const json& j) {
  const std::string path = "solver";
  SolverConfig c;
  c.eps_res = read(j, "eps_res", path, c.eps_res);
  c.eps_loss = read(j, "eps_loss", path, c.eps_loss);
  c.max_iter = read(j, "max_iter", path, c.max_iter);
  c.armijo_c = read(j, "armijo_c", path, c.armijo_c);
  c.backtrack_beta = read(j, "backtrack_beta", path, c.backtrack_beta);
  c.initial_step = read(j, "initial_step", path, c.initial_step);
  c.step_growth = read(j, "step_growth", path, c.step_growth);
  c.max_step = read(j, "max_step", path, c.max_step);
  c.max_backtracks = read(j, "max_backtracks", path, c.max_backtracks);
  c.price_cap = read(j, "price_cap", path, c.price_cap);
  c.eps_sum = read(j, "eps_sum", path, c.eps_sum);
  c.eps_market = read(j, "eps_market", path, c.eps_market);
  c.damping = read(j, "damping", path, c.damping);
  c.perturbation = read(j, "perturbation", path, c.perturbation);
  c.seeds = read(j, "seeds", path, c.seeds);
  c.metric = read(j, "metric", path, c.metric);
  c.lm_damping = read(j, "lm_damping", path, c.lm_damping);
  return c;
}

BilevelConfig parse_bilevel(const json& j) {
  const std::string path = "bilevel";
  BilevelConfig b;
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    b.weights.travel_time = read(w, "travel_time", path + ".weights", b.weights.travel_time);
    b.weights.emission = read(w, "emission", path + ".weights", b.weights.emission);
    b.weights.fleet = read(w, "fleet", path + ".weights", b.weights.fleet);
    b.weights.price = read(w, "price", path + ".weights", b.weights.price);
  }
  if (j.contains("k_values")) b.k_values = read_int_list(j.at("k_values"), path + ".k_values");
  if (j.contains("tau_values")) b.tau_values = read_int_list(j.at("tau_values"), path + ".tau_values");
  if (j.contains("xi_values")) b.xi_values = read_int_list(j.at("xi_values"), path + ".xi_values");
  b.include_waiting = read(j, "include_waiting", path, b.include_waiting);
  return b;
}

std::string clock_string(double seconds) {
  const auto total = static_cast<long long>(std::llround(seconds));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld", total / 3600, (total / 60) % 60, total % 60);
  return buf;
}

}  // namespace

double parse_clock(const json& v, const std::string& field) {
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) fail(field, "expected seconds or \"HH:MM[:SS]\"");
  const auto text = v.get<std::string>();
  int h = 0, m = 0, s = 0;
  char extra = 0;
  const int n = std::sscanf(text.c_str(), "%d:%d:%d%c", &h, &m, &s, &extra);
  if (n < 2 || n > 3 || m < 0 || m > 59 || s < 0 || s > 59 || h < 0) {
    fail(field, "malformed clock time '" + text + "'");
  }
  return h * 3600.0 + m * 60.0 + s;
}

std::vector<int> parse_range(const std::string& text) {
  std::vector<long> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stol(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InputError("malformed range '" + text + "'");
    }
  }
  if (parts.empty() || parts.size() > 3) throw InputError("malformed range '" + text + "'");
  const long lo = parts[0];
  const long hi = parts.size() >= 2 ? parts[1] : parts[0];
  const long step = parts.size() == 3 ? parts[2] : 1;
  if (step <= 0) throw InputError("range step must be positive in '" + text + "'");
  if (hi < lo) throw InputError("empty range '" + text + "'");
  std::vector<int> out;
  for (long v = lo; v <= hi; v += step) out.push_back(static_cast<int>(v));
  return out;
}

Vector discretize_demand(double total, double peak_center, double spread, const TimeGrid& grid) {
  if (total < 0.0) throw InputError("demand total must be non-negative");
  if (!(spread > 0.0)) throw InputError("demand spread must be positive");
  const int M = grid.count;
  Vector out = Vector::Zero(M);
  if (total == 0.0) return out;
  const double inf = std::numeric_limits<double>::infinity();
  for (int m = 1; m <= M; ++m) {
    const double lo = m == 1 ? -inf : (grid.start + grid.boundary(m - 1) - peak_center) / spread;
    const double hi = m == M ? inf : (grid.start + grid.boundary(m) - peak_center) / spread;
    out(m - 1) = total * normal_mass(lo, hi);
  }
  return out;
}

Scenario parse_scenario(const json& doc) {
  if (!doc.is_object()) throw InputError("scenario: expected a JSON object");
  Scenario s;
  s.name = read<std::string>(doc, "name", "scenario", "unnamed");

  if (!doc.contains("grid")) fail("grid", "missing required section");
  const auto& g = doc.at("grid");
  s.grid.start = g.contains("start") ? parse_clock(g.at("start"), "grid.start") : 0.0;
  s.grid.step = require<double>(g, "interval_length", "grid");
  s.grid.count = require<int>(g, "interval_count", "grid");
  if (!(s.grid.step > 0.0)) fail("grid.interval_length", "must be positive");
  if (s.grid.count < 1) fail("grid.interval_count", "must be at least 1");
  const int M = s.grid.count;

  if (!doc.contains("stations") || !doc.at("stations").is_array()) fail("stations", "missing station list");
  for (std::size_t k = 0; k < doc.at("stations").size(); ++k) {
    const auto& js = doc.at("stations")[k];
    const std::string path = "stations[" + std::to_string(k) + "]";
    Station st;
    st.id = require<std::string>(js, "id", path);
    st.position = require<double>(js, "position", path);
    if (js.contains("served_by")) {
      const auto modes = read<std::vector<std::string>>(js, "served_by", path, {});
      st.bus = std::find(modes.begin(), modes.end(), "bus") != modes.end();
      st.dras = std::find(modes.begin(), modes.end(), "dras") != modes.end();
      for (const auto& m : modes) {
        if (m != "bus" && m != "dras") fail(path + ".served_by", "unknown mode '" + m + "'");
      }
    }
    s.stations.push_back(st);
  }

  std::map<std::pair<int, int>, int> od_index;
  auto resolve_od = [&](const json& j, const std::string& path, std::optional<double> length) {
    const int o = station_index(s.stations, j.at("origin"), path + ".origin");
    const int d = station_index(s.stations, j.at("destination"), path + ".destination");
    const auto key = std::make_pair(o, d);
    if (auto it = od_index.find(key); it != od_index.end()) {
      if (length && *length != s.ods[it->second].length) fail(path + ".trip_length", "conflicts with earlier value");
      return it->second;
    }
    OdPair od{o, d, length.value_or(s.stations[d].position - s.stations[o].position)};
    s.ods.push_back(od);
    od_index.emplace(key, static_cast<int>(s.ods.size()) - 1);
    return static_cast<int>(s.ods.size()) - 1;
  };
  auto opt_length = [](const json& j) -> std::optional<double> {
    if (j.contains("trip_length")) return j.at("trip_length").get<double>();
    return std::nullopt;
  };
  auto check_od_refs = [](const json& j, const std::string& path) {
    if (!j.contains("origin")) fail(path + ".origin", "missing required field");
    if (!j.contains("destination")) fail(path + ".destination", "missing required field");
  };

  if (doc.contains("od_pairs")) {
    for (std::size_t k = 0; k < doc.at("od_pairs").size(); ++k) {
      const auto& j = doc.at("od_pairs")[k];
      const std::string path = "od_pairs[" + std::to_string(k) + "]";
      check_od_refs(j, path);
      resolve_od(j, path, opt_length(j));
    }
  }

  std::vector<std::pair<int, Vector>> contributions;
  if (doc.contains("demand_profiles")) {
    for (std::size_t k = 0; k < doc.at("demand_profiles").size(); ++k) {
      const auto& j = doc.at("demand_profiles")[k];
      const std::string path = "demand_profiles[" + std::to_string(k) + "]";
      check_od_refs(j, path);
      const int i = resolve_od(j, path, opt_length(j));
      const double total = require<double>(j, "total", path);
      if (!j.contains("center")) fail(path + ".center", "missing required field");
      const double center = parse_clock(j.at("center"), path + ".center");
      const double spread = require<double>(j, "spread", path);
      if (total < 0.0) fail(path + ".total", "must be non-negative");
      if (!(spread > 0.0)) fail(path + ".spread", "must be positive");
      contributions.emplace_back(i, discretize_demand(total, center, spread, s.grid));
    }
  }
  if (doc.contains("demand_groups")) {
    for (std::size_t k = 0; k < doc.at("demand_groups").size(); ++k) {
      const auto& j = doc.at("demand_groups")[k];
      const std::string path = "demand_groups[" + std::to_string(k) + "]";
      check_od_refs(j, path);
      const int i = resolve_od(j, path, opt_length(j));
      if (!j.contains("departure_time")) fail(path + ".departure_time", "missing required field");
      const double rel = parse_clock(j.at("departure_time"), path + ".departure_time") - s.grid.start;
      if (rel < 0.0 || rel >= s.grid.horizon()) fail(path + ".departure_time", "outside the study period");
      const double q = require<double>(j, "demand", path);
      if (q < 0.0) fail(path + ".demand", "must be non-negative");
      Vector v = Vector::Zero(M);
      v(s.grid.interval_of(rel) - 1) = q;
      contributions.emplace_back(i, std::move(v));
    }
  }
  s.demand = Matrix::Zero(s.od_count(), M);
  for (const auto& [i, v] : contributions) s.demand.row(i) += v.transpose();

  s.background = Vector::Zero(M);
  if (doc.contains("background_accumulation")) {
    const auto bg = read<std::vector<double>>(doc, "background_accumulation", "scenario", {});
    if (static_cast<int>(bg.size()) != M) fail("background_accumulation", "length must equal grid.interval_count");
    for (int m = 0; m < M; ++m) s.background(m) = bg[m];
  }

  if (!doc.contains("mode_params")) fail("mode_params", "missing required section");
  s.params = parse_mode_params(doc.at("mode_params"));
  if (doc.contains("policy")) {
    const auto& p = doc.at("policy");
    s.policy.k = read(p, "k", "policy", 0);
    s.policy.tau = read(p, "tau", "policy", 0);
    s.policy.xi = read(p, "xi", "policy", 0);
  }
  if (doc.contains("solver")) s.solver = parse_solver(doc.at("solver"));
  if (doc.contains("bilevel")) s.bilevel = parse_bilevel(doc.at("bilevel"));

  validate(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path.string() + ": cannot open scenario file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return parse_scenario(doc);
}

void validate(const PolicyParams& p) {
  if (p.k < 0) fail("policy.k", "must be non-negative");
  if (p.tau < 0) fail("policy.tau", "must be non-negative");
  if (p.xi < 0) fail("policy.xi", "must be non-negative");
  if (p.tcs_active() && p.tau < p.k) fail("policy.tau", "must be >= k when the credit scheme is active");
}

void validate(const Scenario& s) {
  for (std::size_t k = 0; k < s.stations.size(); ++k) {
    const std::string path = "stations[" + std::to_string(k) + "]";
    if (s.stations[k].position < 0.0) fail(path + ".position", "must be non-negative");
    if (k > 0 && !(s.stations[k].position > s.stations[k - 1].position)) {
      fail(path + ".position", "stations must be strictly increasing along the corridor");
    }
  }
  for (std::size_t i = 0; i < s.ods.size(); ++i) {
    const std::string path = "od_pairs[" + std::to_string(i) + "]";
    if (s.ods[i].origin >= s.ods[i].destination) fail(path, "origin must precede destination along the corridor");
    if (!(s.ods[i].length > 0.0)) fail(path + ".trip_length", "must be positive");
  }
  const auto& p = s.params;
  const std::string mp = "mode_params";
  if (!(p.v_min > 0.0)) fail(mp + ".v_min", "must be positive");
  if (!(p.v_min < p.v_max_dras && p.v_max_dras <= p.v_max_bus && p.v_max_bus <= p.v_max_car)) {
    fail(mp, "speeds must satisfy v_min < v_max_dras <= v_max_bus <= v_max_car");
  }
  if (!(p.n_max > 0.0)) fail(mp + ".n_max", "must be positive");
  if (!(p.theta > 0.0)) fail(mp + ".theta", "must be positive");
  if (!(p.omega > 0.0 && p.omega <= 1.0)) fail(mp + ".omega", "must be in (0, 1]");
  if (!(p.eta > 0.0)) fail(mp + ".eta", "must be positive");
  if (p.bus_capacity < 1.0) fail(mp + ".bus_capacity", "must be at least 1");
  if (p.dras_capacity < 1.0) fail(mp + ".dras_capacity", "must be at least 1");
  if (!(p.bus_interval > 0.0)) fail(mp + ".bus_interval", "must be positive");
  if (p.headway_min < 0.0) fail(mp + ".headway_min", "must be non-negative");
  if (p.dras_launch_gap < 0.0) fail(mp + ".dras_launch_gap", "must be non-negative");
  if (p.alpha < 0.0 || p.alpha_wait < 0.0) fail(mp, "values of time must be non-negative");
  if (p.bus_dwell < 0.0) fail(mp + ".bus_dwell", "must be non-negative");
  validate(s.policy);
  const auto& c = s.solver;
  if (!(c.armijo_c > 0.0 && c.armijo_c < 1.0)) fail("solver.armijo_c", "must be in (0, 1)");
  if (!(c.backtrack_beta > 0.0 && c.backtrack_beta < 1.0)) fail("solver.backtrack_beta", "must be in (0, 1)");
  if (!(c.initial_step > 0.0)) fail("solver.initial_step", "must be positive");
  if (c.max_iter < 0) fail("solver.max_iter", "must be non-negative");
  if (!(c.price_cap > 0.0)) fail("solver.price_cap", "must be positive");
  if (c.metric != "gauss_newton" && c.metric != "gradient") fail("solver.metric", "must be gauss_newton or gradient");
  if (c.lm_damping < 0.0) fail("solver.lm_damping", "must be non-negative");
  if (s.background.size() != s.grid.count) fail("background_accumulation", "length mismatch");
  if ((s.background.array() < 0.0).any()) fail("background_accumulation", "must be non-negative");
}

json to_json(const Scenario& s) {
  json doc;
  doc["name"] = s.name;
  doc["grid"] = {{"start", s.grid.start}, {"interval_length", s.grid.step}, {"interval_count", s.grid.count}};
  for (const auto& st : s.stations) {
    json served = json::array();
    if (st.bus) served.push_back("bus");
    if (st.dras) served.push_back("dras");
    doc["stations"].push_back({{"id", st.id}, {"position", st.position}, {"served_by", served}});
  }
  doc["od_pairs"] = json::array();
  doc["demand_groups"] = json::array();
  for (int i = 0; i < s.od_count(); ++i) {
    const auto& od = s.ods[i];
    doc["od_pairs"].push_back({{"origin", s.stations[od.origin].id},
                               {"destination", s.stations[od.destination].id},
                               {"trip_length", od.length}});
    for (int m = 0; m < s.grid.count; ++m) {
      if (s.demand(i, m) == 0.0) continue;
      doc["demand_groups"].push_back({{"id", "od" + std::to_string(i) + "@" + clock_string(s.grid.start + s.grid.boundary(m))},
                                      {"origin", s.stations[od.origin].id},
                                      {"destination", s.stations[od.destination].id},
                                      {"departure_time", s.grid.start + s.grid.boundary(m)},
                                      {"demand", s.demand(i, m)}});
    }
  }
  doc["background_accumulation"] = std::vector<double>(s.background.data(), s.background.data() + s.background.size());
  const auto& p = s.params;
  doc["mode_params"] = {
      {"v_max_car", p.v_max_car},
      {"v_max_bus", p.v_max_bus},
      {"v_max_dras", p.v_max_dras},
      {"v_min", p.v_min},
      {"n_max", p.n_max},
      {"alpha", p.alpha},
      {"alpha_wait", p.alpha_wait},
      {"theta", p.theta},
      {"delta", {{"car", p.delta[0]}, {"bus", p.delta[1]}, {"dras", p.delta[2]}}},
      {"eta", p.eta},
      {"bus_capacity", p.bus_capacity},
      {"bus_interval", p.bus_interval},
      {"bus_first_departure", p.bus_first_departure},
      {"bus_dwell", p.bus_dwell},
      {"dras_capacity", p.dras_capacity},
      {"omega", p.omega},
      {"headway_min", p.headway_min},
      {"dras_launch_gap", p.dras_launch_gap},
      {"dras_first_launch", p.dras_first_launch},
      {"emission_cost", p.emission_cost},
      {"fleet_unit_cost", p.fleet_unit_cost},
      {"budget", p.budget},
      {"redemption_weights", {{"bus", p.redemption[0]}, {"dras", p.redemption[1]}}},
      {"operational_features", p.operational_features},
      {"dras_remaining_seats", p.dras_remaining_seats},
      {"interpolated_exits", p.interpolated_exits},
  };
  doc["policy"] = {{"k", s.policy.k}, {"tau", s.policy.tau}, {"xi", s.policy.xi}};
  const auto& c = s.solver;
  doc["solver"] = {{"eps_res", c.eps_res},         {"eps_loss", c.eps_loss},
                   {"max_iter", c.max_iter},       {"armijo_c", c.armijo_c},
                   {"backtrack_beta", c.backtrack_beta}, {"initial_step", c.initial_step},
                   {"step_growth", c.step_growth}, {"max_step", c.max_step},
                   {"max_backtracks", c.max_backtracks}, {"price_cap", c.price_cap},
                   {"eps_sum", c.eps_sum},         {"eps_market", c.eps_market},
                   {"damping", c.damping},         {"perturbation", c.perturbation},
                   {"seeds", c.seeds},             {"metric", c.metric},
                   {"lm_damping", c.lm_damping}};
  const auto& b = s.bilevel;
  doc["bilevel"] = {{"weights",
                     {{"travel_time", b.weights.travel_time},
                      {"emission", b.weights.emission},
                      {"fleet", b.weights.fleet},
                      {"price", b.weights.price}}},
                    {"k_values", b.k_values},
                    {"tau_values", b.tau_values},
                    {"xi_values", b.xi_values},
                    {"include_waiting", b.include_waiting}};
  return doc;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw InputError("override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) node = &(*node)[parts[k]];
  (*node)[parts.back()] = value;
}

}  // namespace corridor
