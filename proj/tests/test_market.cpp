#include "corridor/market.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace corridor;

TEST_CASE("credit supply and residual") {
  const auto s = testing::corridor_of({100, 100});
  const PolicyParams policy{5, 8, 0};
  CHECK(credit_supply(s, policy) == 1000.0);
  Matrix x(1, 2);
  x << 0.5, 0.75;
  // 1000 - 8 * (50 + 75).
  CHECK(market_residual<double>(s, policy, x) == 0.0);
  CHECK(car_fraction<double>(s, x) == doctest::Approx(0.625));
  const auto st = market_state(s, policy, x, 0.3);
  CHECK(st.consumption == 1000.0);
  CHECK(st.price == 0.3);
  CHECK(policy.d_max() == doctest::Approx(0.625));
}

TEST_CASE("residual is affine in the car shares") {
  const auto s = testing::corridor_of({40, 70, 10});
  const PolicyParams policy{3, 7, 0};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix x(1, 3);
    x << u(rng), u(rng), u(rng);
    const double r = market_residual<double>(s, policy, x);
    CHECK(r == doctest::Approx(credit_supply(s, policy) - 7.0 * (s.demand.array() * x.array()).sum()));
    const Matrix x1 = x + Matrix::Constant(1, 3, 0.01);
    CHECK(market_residual<double>(s, policy, x1) - r == doctest::Approx(-7.0 * 120.0 * 0.01));
    // Residual over supply is d_max minus the car fraction.
    CHECK(r / (7.0 * 120.0) == doctest::Approx(policy.d_max() - car_fraction<double>(s, x)));
  }
}

TEST_CASE("price residual is the natural complementarity residual") {
  const auto s = testing::corridor_of({100});
  const PolicyParams policy{5, 10, 0};
  Matrix x(1, 1);
  x << 0.3;  // slack 0.2
  CHECK(price_residual<double>(s, policy, x, 0.0, 10.0) == 0.0);
  CHECK(price_residual<double>(s, policy, x, 0.1, 10.0) == doctest::Approx(0.1));
  CHECK(price_residual<double>(s, policy, x, 1.0, 10.0) == doctest::Approx(0.2));
  x << 0.7;  // overdrawn by 0.2
  CHECK(price_residual<double>(s, policy, x, 1.0, 10.0) == doctest::Approx(-0.2));
  CHECK(price_residual<double>(s, policy, x, 10.0, 10.0) == 0.0);
  x << 0.5;
  CHECK(price_residual<double>(s, policy, x, 2.0, 10.0) == doctest::Approx(0.0));
  // Without a scheme the price is pushed to zero.
  CHECK(price_residual<double>(s, PolicyParams{}, x, 0.4, 10.0) == 0.4);
}
