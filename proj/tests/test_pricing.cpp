#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "svol/pricing.hpp"
#include "testutil.hpp"

using namespace svol;
using Catch::Approx;

namespace {

ModelParams safe_params(Model model, double rho) {
  MaturityGrid g({0.0, 1.0});
  ModelParams p;
  p.model = model;
  p.v0 = 0.0036;
  p.kappa = PiecewiseCurve(g, 5.0);
  p.theta = PiecewiseCurve(g, 0.019);
  p.lambda = PiecewiseCurve(g, 0.414);
  p.rho = PiecewiseCurve(g, rho);
  return p;
}

MarketState market_state() {
  MaturityGrid g({0.0, 1.0});
  MarketState m;
  m.spot = 100.0;
  m.rd = PiecewiseCurve(g, 0.02);
  m.rf = PiecewiseCurve(g, 0.0);
  return m;
}

// ---------------------------------------------------------------------------
// Quadrature route for the expansion terms, straight from the integral
// expressions (covariances and tilted means integrated numerically), fully
// independent of the operator-key fast path.
// ---------------------------------------------------------------------------

std::vector<double> breaks_to(const MaturityGrid& g, double T) {
  std::vector<double> b;
  for (double t : g.times())
    if (t < T) b.push_back(t);
  b.push_back(T);
  return b;
}

VarianceLaw base_law(const ModelParams& p) {
  VarianceLaw law;
  law.family = p.model == Model::Heston ? VarFamily::CIR : VarFamily::IGa;
  law.v0 = p.v0;
  law.kappa = p.kappa;
  law.theta = p.theta;
  law.lambda = p.lambda;
  return law;
}

double yhat_quad(const ModelParams& p, double T) {
  auto law = base_law(p);
  auto br = breaks_to(p.grid(), T);
  auto f = [&](double t) {
    const double r = p.rho.eval(t);
    return (1.0 - r * r) * mean(law, t, MomentMethod::Quadrature);
  };
  return PiecewiseCheb::from_function(br, f, 1e-12).integral();
}

double varint_quad(const ModelParams& p, double T) {
  auto law = base_law(p);
  auto br = breaks_to(p.grid(), T);
  auto inner_integrand = [&](double s) {
    const double r = p.rho.eval(s);
    return (1.0 - r * r) * std::exp(integrate_curve(law.kappa, 0.0, s)) *
           variance(law, s, MomentMethod::Quadrature);
  };
  PiecewiseCheb cum = PiecewiseCheb::from_function(br, inner_integrand, 1e-12).cumulative();
  auto outer = [&](double t) {
    const double r = p.rho.eval(t);
    return 2.0 * (1.0 - r * r) * std::exp(-integrate_curve(law.kappa, 0.0, t)) * cum.eval(t);
  };
  return PiecewiseCheb::from_function(br, outer, 1e-12).integral();
}

double xi2_quad(const ModelParams& p, double T) {
  auto q2 = heston_shifted_law(p, 2);
  auto br = breaks_to(p.grid(), T);
  auto mean_integrand = [&](double t) {
    const double r = p.rho.eval(t);
    return r * r * mean(q2, t, MomentMethod::Quadrature);
  };
  const double e1 = PiecewiseCheb::from_function(br, mean_integrand, 1e-12).integral();
  auto inner_integrand = [&](double s) {
    const double r = p.rho.eval(s);
    return r * r * std::exp(integrate_curve(q2.kappa, 0.0, s)) *
           variance(q2, s, MomentMethod::Quadrature);
  };
  PiecewiseCheb cum = PiecewiseCheb::from_function(br, inner_integrand, 1e-12).cumulative();
  auto outer = [&](double t) {
    const double r = p.rho.eval(t);
    return r * r * std::exp(-integrate_curve(q2.kappa, 0.0, t)) * cum.eval(t);
  };
  const double c1 = PiecewiseCheb::from_function(br, outer, 1e-12).integral();
  return std::exp(e1) * (1.0 + c1) - 1.0;
}

double mixed_quad(const ModelParams& p, double T) {
  auto law = base_law(p);
  auto q1 = heston_shifted_law(p, 1);
  auto br = breaks_to(p.grid(), T);
  auto f = [&](double t) {
    const double r = p.rho.eval(t);
    return (1.0 - r * r) * (mean(q1, t, MomentMethod::Quadrature) -
                            mean(law, t, MomentMethod::Quadrature));
  };
  return PiecewiseCheb::from_function(br, f, 1e-12).integral();
}

}  // namespace

TEST_CASE("reconstruction identity", "[pricing]") {
  auto mkt = market_state();
  for (auto [model, rho] : {std::pair{Model::Heston, -0.391}, {Model::Heston, 0.3},
                            {Model::Garch, 0.0}}) {
    auto p = safe_params(model, rho);
    OptionSpec opt{100.0, 0.5, OptionKind::Put};
    const PricingResult r = price2(mkt, p, opt);
    BsPoint pt;
    pt.x = r.xhat;
    pt.y = r.yhat;
    pt.strike = opt.strike;
    pt.maturity = opt.maturity;
    pt.rdInt = integrate_curve(mkt.rd, 0.0, opt.maturity);
    pt.rfInt = integrate_curve(mkt.rf, 0.0, opt.maturity);
    const double rebuilt = put_bs(pt) +
                           0.5 * put_bs_partial(pt, 2, 0) * r.xhat * r.xhat * r.termXi2 +
                           0.5 * put_bs_partial(pt, 0, 2) * r.termVarInt +
                           put_bs_partial(pt, 1, 1) * r.xhat * r.termMixed;
    CHECK(r.price == Approx(rebuilt).margin(1e-12));
    CHECK(r.termVarInt >= 0.0);
  }
}

TEST_CASE("rho = 0 collapses the correlated terms exactly", "[pricing]") {
  auto p = safe_params(Model::Heston, 0.0);
  auto mkt = market_state();
  OptionSpec opt{100.0, 0.25, OptionKind::Put};
  const PricingResult r = heston_put2(mkt, p, opt);
  CHECK(r.termXi2 == 0.0);
  CHECK(r.termMixed == 0.0);
  CHECK(r.termVarInt > 0.0);
  CHECK_FALSE(r.xi2Negative);
}

TEST_CASE("lambda = 0 prices are Black-Scholes", "[pricing]") {
  auto mkt = market_state();

  SECTION("heston, rho = 0") {
    auto p = safe_params(Model::Heston, 0.0);
    p.lambda = PiecewiseCurve(p.grid(), 0.0);
    OptionSpec opt{100.0, 0.5, OptionKind::Put};
    const PricingResult r = heston_put2(mkt, p, opt);
    CHECK(r.termXi2 == 0.0);
    CHECK(r.termVarInt == 0.0);
    CHECK(r.termMixed == 0.0);
    CHECK(r.price == Approx(r.zerothOrder).margin(0.0));
    // yhat is the exact deterministic integrated variance
    VarianceLaw law = base_law(p);
    auto br = breaks_to(p.grid(), 0.5);
    const double y = PiecewiseCheb::from_function(br, [&](double t) { return mean(law, t); },
                                                  1e-13)
                         .integral();
    CHECK(r.yhat == Approx(y).epsilon(1e-11));
  }
  SECTION("garch") {
    auto p = safe_params(Model::Garch, 0.0);
    p.lambda = PiecewiseCurve(p.grid(), 0.0);
    OptionSpec opt{95.0, 0.25, OptionKind::Put};
    const PricingResult r = garch_put2(mkt, p, opt);
    CHECK(r.termVarInt == 0.0);
    CHECK(r.price == r.zerothOrder);
  }
  SECTION("heston, rho != 0: variance terms vanish, xi term survives") {
    auto p = safe_params(Model::Heston, -0.391);
    p.lambda = PiecewiseCurve(p.grid(), 0.0);
    OptionSpec opt{100.0, 0.25, OptionKind::Put};
    const PricingResult r = heston_put2(mkt, p, opt);
    CHECK(r.termVarInt == 0.0);
    CHECK(r.termMixed == Approx(0.0).margin(1e-18));
    CHECK(r.termXi2 > 0.0);  // e^{int rho^2 E V} - 1, deterministic variance
  }
}

TEST_CASE("call differs from put only in the zeroth order", "[pricing]") {
  auto mkt = market_state();
  std::mt19937_64 rng(5150);
  std::uniform_real_distribution<double> kd(80.0, 120.0), Td(0.1, 1.0), rd(-0.6, 0.6);
  for (int i = 0; i < 50; ++i) {
    auto p = safe_params(Model::Heston, rd(rng));
    OptionSpec opt{kd(rng), Td(rng), OptionKind::Put};
    const PricingResult put = heston_put2(mkt, p, opt);
    const PricingResult call = price_call2(mkt, p, opt);
    CHECK(call.termXi2 == put.termXi2);
    CHECK(call.termVarInt == put.termVarInt);
    CHECK(call.termMixed == put.termMixed);
    const double fwd = 100.0 * std::exp(-integrate_curve(mkt.rf, 0.0, opt.maturity)) -
                       opt.strike * std::exp(-integrate_curve(mkt.rd, 0.0, opt.maturity));
    CHECK(call.price - put.price == Approx(fwd).margin(1e-12));
  }
}

TEST_CASE("operator fast path matches quadrature of the integral expressions",
          "[pricing][property]") {
  std::mt19937_64 rng(808);
  auto mkt = market_state();

  for (int trial = 0; trial < 4; ++trial) {
    MaturityGrid g = trial == 0 ? MaturityGrid({0.0, 1.0}) : testutil::random_grid(rng, 3, 0.5, 1.2);
    ModelParams p;
    p.model = Model::Heston;
    std::uniform_real_distribution<double> v0d(0.002, 0.05);
    p.v0 = trial == 0 ? 0.0036 : v0d(rng);
    p.kappa = trial == 0 ? PiecewiseCurve(g, 5.0) : testutil::random_curve(rng, g, 0.8, 6.0);
    p.theta = trial == 0 ? PiecewiseCurve(g, 0.019) : testutil::random_curve(rng, g, 0.006, 0.04);
    p.lambda = trial == 0 ? PiecewiseCurve(g, 0.414) : testutil::random_curve(rng, g, 0.1, 0.8);
    p.rho = trial == 0 ? PiecewiseCurve(g, -0.391) : testutil::random_curve(rng, g, -0.8, 0.4);
    const double T = g.horizon();

    const auto t = detail::heston_terms(p, T);
    CHECK(t.yhat == Approx(yhat_quad(p, T)).epsilon(1e-9));
    CHECK(t.varint == Approx(varint_quad(p, T)).epsilon(1e-9));
    CHECK(t.xi2 == Approx(xi2_quad(p, T)).epsilon(1e-9).margin(1e-15));
    CHECK(t.mixed == Approx(mixed_quad(p, T)).epsilon(1e-9).margin(1e-15));
  }

  // GARCH double covariance integral against its quadrature
  for (int trial = 0; trial < 3; ++trial) {
    MaturityGrid g = trial == 0 ? MaturityGrid({0.0, 1.0}) : testutil::random_grid(rng, 3, 0.4, 1.0);
    ModelParams p;
    p.model = Model::Garch;
    std::uniform_real_distribution<double> v0d(0.002, 0.05);
    p.v0 = trial == 0 ? 0.0036 : v0d(rng);
    p.kappa = trial == 0 ? PiecewiseCurve(g, 5.0) : testutil::random_curve(rng, g, 0.8, 6.0);
    p.theta = trial == 0 ? PiecewiseCurve(g, 0.019) : testutil::random_curve(rng, g, 0.006, 0.04);
    p.lambda = trial == 0 ? PiecewiseCurve(g, 0.414) : testutil::random_curve(rng, g, 0.1, 0.8);
    p.rho = PiecewiseCurve(g, 0.0);
    const double T = g.horizon();
    const auto t = detail::garch_terms(p, T);
    CHECK(t.varint == Approx(varint_quad(p, T)).epsilon(1e-9));
    CHECK(t.yhat == Approx(yhat_quad(p, T)).epsilon(1e-9));
  }
}

TEST_CASE("garch preconditions", "[pricing]") {
  auto mkt = market_state();
  auto p = safe_params(Model::Garch, -0.3);
  OptionSpec opt{100.0, 0.5, OptionKind::Put};
  CHECK_THROWS_AS(garch_put2(mkt, p, opt), ModelPreconditionError);
  CHECK_THROWS_AS(garch_error_bound_rho0(mkt, p, opt), ModelPreconditionError);
  auto h = safe_params(Model::Heston, 0.0);
  CHECK_THROWS_AS(garch_put2(mkt, h, opt), ModelPreconditionError);
}

TEST_CASE("garch correction shrinks with mean reversion", "[pricing]") {
  auto mkt = market_state();
  OptionSpec opt{100.0, 0.5, OptionKind::Put};
  double prev = 1e300;
  for (double kappa : {1.0, 2.0, 4.0, 8.0, 16.0}) {
    auto p = safe_params(Model::Garch, 0.0);
    p.kappa = PiecewiseCurve(p.grid(), kappa);
    p.theta = PiecewiseCurve(p.grid(), p.v0);  // variance pinned near v0
    const PricingResult r = garch_put2(mkt, p, opt);
    const double corr = std::abs(r.price - r.zerothOrder);
    CHECK(corr < prev);
    prev = corr;
  }
}

TEST_CASE("greeks match finite differences of the price", "[pricing]") {
  auto mkt = market_state();
  for (auto [model, rho] :
       {std::pair{Model::Heston, -0.391}, {Model::Heston, 0.2}, {Model::Garch, 0.0}}) {
    auto p = safe_params(model, rho);
    OptionSpec opt{100.0, 0.25, OptionKind::Put};
    const Greeks2 g = greeks2(mkt, p, opt);

    auto price_at = [&](double s) {
      MarketState m = mkt;
      m.spot = s;
      return price2(m, p, opt).price;
    };
    const double h = 1e-3 * mkt.spot;
    const double fd_delta = (price_at(mkt.spot + h) - price_at(mkt.spot - h)) / (2.0 * h);
    const double fd_gamma =
        (price_at(mkt.spot + h) - 2.0 * price_at(mkt.spot) + price_at(mkt.spot - h)) / (h * h);
    INFO("model=" << to_string(model) << " rho=" << rho);
    CHECK(g.delta == Approx(fd_delta).epsilon(1e-6));
    CHECK(g.gamma == Approx(fd_gamma).epsilon(1e-5));
  }

  SECTION("degenerate case reduces to the Black-Scholes delta") {
    auto p = safe_params(Model::Heston, 0.0);
    p.lambda = PiecewiseCurve(p.grid(), 0.0);
    OptionSpec opt{100.0, 0.25, OptionKind::Put};
    const Greeks2 g = greeks2(mkt, p, opt);
    const PricingResult r = heston_put2(mkt, p, opt);
    BsPoint pt;
    pt.x = 100.0;
    pt.y = r.yhat;
    pt.strike = 100.0;
    pt.maturity = 0.25;
    pt.rdInt = 0.02 * 0.25;
    pt.rfInt = 0.0;
    CHECK(g.delta == Approx(put_bs_partial(pt, 1, 0)).margin(1e-15));
    CHECK(g.gamma == Approx(put_bs_partial(pt, 2, 0)).margin(1e-15));
  }
}

TEST_CASE("garch error bound", "[pricing]") {
  auto mkt = market_state();
  OptionSpec opt{100.0, 1.0 / 12.0, OptionKind::Put};

  SECTION("zero vol-of-vol gives a vanishing bound") {
    auto p = safe_params(Model::Garch, 0.0);
    p.lambda = PiecewiseCurve(p.grid(), 0.0);
    CHECK(garch_error_bound_rho0(mkt, p, opt) == Approx(0.0).margin(1e-10));
  }
  SECTION("bound is nonnegative and increasing in lambda") {
    double prev = -1.0;
    for (double lam : {0.2, 0.4, 0.6, 0.8}) {
      auto p = safe_params(Model::Garch, 0.0);
      p.lambda = PiecewiseCurve(p.grid(), lam);
      const double b = garch_error_bound_rho0(mkt, p, opt);
      CHECK(b >= 0.0);
      CHECK(b > prev);
      prev = b;
    }
  }
}

TEST_CASE("maturity beyond grid is rejected", "[pricing]") {
  auto mkt = market_state();
  auto p = safe_params(Model::Heston, -0.391);
  OptionSpec opt{100.0, 2.0, OptionKind::Put};
  CHECK_THROWS_AS(heston_put2(mkt, p, opt), std::out_of_range);
}
