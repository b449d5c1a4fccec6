#include "corridor/transit.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace corridor;

namespace {

NetworkState<double> free_flow(const Scenario& s) {
  return propagate_car_dynamics<double>(s, Matrix::Zero(s.od_count(), s.interval_count()));
}

}  // namespace

TEST_CASE("buses leave on schedule and board up to capacity") {
  // 100 passengers arrive in the first 5 min; buses every 10 min from t = 300.
  auto s = testing::corridor_of({100, 0, 0, 0});
  s.params.bus_first_departure = 300.0;
  const Matrix y = Matrix::Ones(1, 4);
  const auto sup = propagate_bus_timelines(s, free_flow(s), y);
  REQUIRE(sup.bus_events[0].size() == 2);
  CHECK(sup.bus_events[0][0].time == 300.0);
  CHECK(sup.bus_events[0][1].time == 900.0);
  const auto A = build_arrival_curve<double>(s, 0, Mode::Bus, y);
  const auto S = serve_events<double>(A, sup.bus_events[0], s.grid.horizon());
  CHECK(S.cumulative[0] == 60.0);
  CHECK(S.cumulative[1] == 100.0);
  CHECK(sup.vehicles[0].visits[0].boarded == 60.0);
  CHECK(sup.vehicles[1].visits[0].boarded == 40.0);
  // Everyone boarded alights at B.
  CHECK(sup.vehicles[0].visits[1].alighted == 60.0);
  CHECK(check_operational_invariants(s, sup, y, Matrix::Zero(1, 4)).empty());
}

TEST_CASE("bus running time follows the free-flow speed") {
  auto s = testing::corridor_of({10, 10, 10, 10}, 9000.0);
  const auto sup = propagate_bus_timelines(s, free_flow(s), Matrix::Ones(1, 4));
  for (const auto& bus : sup.vehicles) {
    if (bus.visits.size() < 2) continue;
    CHECK(bus.visits[1].t_arr - bus.visits[0].t_dep == doctest::Approx(9000.0 / (90.0 / 3.6)));
  }
}

TEST_CASE("no shuttles without a fleet") {
  auto s = testing::corridor_of({10, 10});
  const auto sup = propagate_dras_timelines(s, PolicyParams{0, 0, 0}, free_flow(s), Matrix::Ones(1, 2));
  CHECK(sup.vehicles.empty());
  CHECK(sup.dras_events[0].empty());
}

TEST_CASE("shuttle leaves at once when the queue already fills the threshold") {
  // 160 arrive in the first 5 min; the first shuttle launches at t = 300.
  auto s = testing::corridor_of({160, 0, 0, 0});
  s.params.dras_first_launch = 300.0;
  const Matrix z = Matrix::Ones(1, 4);
  const auto sup = propagate_dras_timelines(s, PolicyParams{0, 0, 1}, free_flow(s), z);
  REQUIRE(!sup.dras_events[0].empty());
  CHECK(sup.dras_events[0][0].time == 300.0);
  CHECK(sup.vehicles[0].visits[0].boarded == doctest::Approx(16.0));
}

TEST_CASE("shuttle waits for the threshold") {
  // 32 per 5 min: 16 passengers (omega * C) have queued after 150 s.
  auto s = testing::corridor_of({32, 32, 0, 0});
  const Matrix z = Matrix::Ones(1, 4);
  const auto sup = propagate_dras_timelines(s, PolicyParams{0, 0, 1}, free_flow(s), z);
  REQUIRE(!sup.dras_events[0].empty());
  CHECK(sup.dras_events[0][0].time == doctest::Approx(150.0));
}

TEST_CASE("consecutive shuttle departures keep the minimum headway") {
  auto s = testing::corridor_of({600, 600, 600, 600}, 3000.0);
  const Matrix z = Matrix::Ones(1, 4);
  const auto sup = propagate_dras_timelines(s, PolicyParams{0, 0, 6}, free_flow(s), z);
  const auto& ev = sup.dras_events[0];
  REQUIRE(ev.size() > 3);
  for (std::size_t e = 1; e < ev.size(); ++e) CHECK(ev[e].time - ev[e - 1].time >= 60.0 - 1e-9);
  CHECK(check_operational_invariants(s, sup, Matrix::Zero(1, 4), z).empty());
}

TEST_CASE("operational invariants hold on random shares") {
  auto s = load_scenario(testing::scenario_path("a10_multi_od.json"));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix x(s.od_count(), s.interval_count());
    Matrix y(s.od_count(), s.interval_count());
    Matrix z(s.od_count(), s.interval_count());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double a = u(rng), b = u(rng), c = u(rng);
      x(k) = a / (a + b + c);
      y(k) = b / (a + b + c);
      z(k) = c / (a + b + c);
    }
    const auto net = propagate_car_dynamics<double>(s, x);
    const auto sup = propagate_transit(s, PolicyParams{0, 0, 1 + 2 * trial}, net, y, z);
    const auto bad = check_operational_invariants(s, sup, y, z);
    CHECK_MESSAGE(bad.empty(), (bad.empty() ? "" : bad.front()));
  }
}

TEST_CASE("timelines are deterministic") {
  auto s = load_scenario(testing::scenario_path("a10_multi_od.json"));
  const Matrix third = Matrix::Constant(s.od_count(), s.interval_count(), 1.0 / 3.0);
  const auto net = propagate_car_dynamics<double>(s, third);
  const auto a = propagate_transit(s, PolicyParams{0, 0, 6}, net, third, third);
  const auto b = propagate_transit(s, PolicyParams{0, 0, 6}, net, third, third);
  REQUIRE(a.vehicles.size() == b.vehicles.size());
  for (std::size_t v = 0; v < a.vehicles.size(); ++v) {
    REQUIRE(a.vehicles[v].visits.size() == b.vehicles[v].visits.size());
    for (std::size_t k = 0; k < a.vehicles[v].visits.size(); ++k) {
      CHECK(a.vehicles[v].visits[k].t_dep == b.vehicles[v].visits[k].t_dep);
      CHECK(a.vehicles[v].visits[k].boarded == b.vehicles[v].visits[k].boarded);
    }
  }
}

TEST_CASE("boarded passengers are split by destination") {
  nlohmann::json doc = nlohmann::json::parse(R"({
    "grid": {"interval_length": 300, "interval_count": 1},
    "stations": [{"id": "a", "position": 0}, {"id": "b", "position": 5000}, {"id": "c", "position": 9000}],
    "demand_groups": [
      {"origin": "a", "destination": "b", "departure_time": 0, "demand": 30},
      {"origin": "a", "destination": "c", "departure_time": 0, "demand": 90}],
    "mode_params": {"delta": {"car": 0, "bus": 0, "dras": 0}, "eta": 1}
  })");
  const auto s = parse_scenario(doc);
  const auto d = station_demand(s, 0, Mode::Bus, Matrix::Ones(2, 1));
  const auto split = split_by_destination(s, d, 0.0, 60.0);
  CHECK(split[1] == doctest::Approx(15.0));
  CHECK(split[2] == doctest::Approx(45.0));
  CHECK(first_time_reaching(d.curve, 60.0, 0.0).value() == doctest::Approx(150.0));
  CHECK(!first_time_reaching(d.curve, 121.0, 0.0).has_value());
}
