#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "svol/chebyshev.hpp"

using namespace svol;
using Catch::Approx;

TEST_CASE("series fit and eval", "[chebyshev]") {
  auto s = ChebSeries::fit([](double x) { return std::exp(3.0 * x); }, 0.0, 1.0);
  REQUIRE(s.converged);
  for (double x : {0.0, 0.1, 0.37, 0.99, 1.0})
    CHECK(s.eval(x) == Approx(std::exp(3.0 * x)).epsilon(1e-13));
}

TEST_CASE("antiderivative of exp", "[chebyshev]") {
  auto s = ChebSeries::fit([](double x) { return std::exp(x); }, 0.5, 2.0);
  auto F = s.antiderivative();
  for (double x : {0.5, 0.75, 1.3, 2.0})
    CHECK(F.eval(x) == Approx(std::exp(x) - std::exp(0.5)).epsilon(1e-13).margin(1e-14));
}

TEST_CASE("piecewise cumulative across kinks", "[chebyshev]") {
  // |sin| style kink at the breakpoint is fine because we split there.
  auto f = [](double x) { return x < 1.0 ? x * x : 2.0 - x; };
  auto pc = PiecewiseCheb::from_function({0.0, 1.0, 2.0}, f);
  REQUIRE(pc.converged());
  auto F = pc.cumulative();
  CHECK(F.eval(1.0) == Approx(1.0 / 3.0).epsilon(1e-13));
  CHECK(F.eval(2.0) == Approx(1.0 / 3.0 + 0.5).epsilon(1e-13));
  CHECK(pc.integral() == Approx(1.0 / 3.0 + 0.5).epsilon(1e-13));
}

TEST_CASE("stiff exponential still converges", "[chebyshev]") {
  auto s = ChebSeries::fit([](double x) { return std::exp(20.0 * x); }, 0.0, 1.0);
  REQUIRE(s.converged);
  auto F = s.antiderivative();
  CHECK(F.eval(1.0) == Approx((std::exp(20.0) - 1.0) / 20.0).epsilon(1e-12));
}
