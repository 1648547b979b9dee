#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "svol/montecarlo.hpp"
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

VarianceLaw law_of(const ModelParams& p) {
  VarianceLaw law;
  law.family = p.model == Model::Heston ? VarFamily::CIR : VarFamily::IGa;
  law.v0 = p.v0;
  law.kappa = p.kappa;
  law.theta = p.theta;
  law.lambda = p.lambda;
  return law;
}

MCConfig quick_cfg(std::size_t paths = 20000) {
  MCConfig cfg;
  cfg.paths = paths;
  cfg.seed = 777;
  return cfg;
}

}  // namespace

TEST_CASE("determinism across runs and thread counts", "[montecarlo]") {
  auto p = safe_params(Model::Heston, -0.391);
  auto mkt = market_state();
  OptionSpec opt{100.0, 1.0 / 12.0, OptionKind::Put};
  MCConfig cfg = quick_cfg(8000);

  cfg.threads = 1;
  const MCEstimate a = mixing_mc_put(mkt, p, opt, cfg);
  const MCEstimate b = mixing_mc_put(mkt, p, opt, cfg);
  cfg.threads = 2;
  const MCEstimate c = mixing_mc_put(mkt, p, opt, cfg);
  CHECK(a.value == b.value);
  CHECK(a.stderr_ == b.stderr_);
  CHECK(a.value == c.value);
  CHECK(a.stderr_ == c.stderr_);
}

TEST_CASE("deterministic variance at lambda = 0", "[montecarlo]") {
  auto p = safe_params(Model::Heston, 0.0);
  p.lambda = PiecewiseCurve(p.grid(), 0.0);
  auto law = law_of(p);
  MCConfig cfg = quick_cfg(64);
  const double T = 1.0 / 12.0;

  auto ens = simulate_variance(law, cfg, T);
  for (const auto& st : ens.paths) {
    CHECK(st.v_end == ens.paths[0].v_end);  // no noise source left
    CHECK(st.truncations == 0);
  }
  // Euler tracks the ODE mean path to O(dt)
  CHECK(ens.paths[0].v_end == Approx(mean(law, T)).epsilon(2e-4));

  // mixing estimator collapses to a single deterministic value
  auto mkt = market_state();
  OptionSpec opt{100.0, T, OptionKind::Put};
  const MCEstimate est = mixing_mc_put(mkt, p, opt, cfg);
  CHECK(est.stderr_ == 0.0);
  BsPoint q;
  q.x = 100.0;
  q.strike = 100.0;
  q.maturity = T;
  q.rdInt = 0.02 * T;
  q.rfInt = 0.0;
  q.y = ens.paths[0].int_v;
  CHECK(est.value == Approx(put_bs(q)).epsilon(1e-12));
}

TEST_CASE("CIR sample mean within three standard errors", "[montecarlo]") {
  auto law = law_of(safe_params(Model::Heston, 0.0));
  MCConfig cfg = quick_cfg(40000);
  const double T = 1.0 / 12.0;
  const MCEstimate est = moment_estimate(law, cfg, T, 1);
  CHECK(std::abs(est.value - mean(law, T)) <= 3.0 * est.stderr_);
}

TEST_CASE("IGa explicit scheme second moment", "[montecarlo]") {
  auto law = law_of(safe_params(Model::Garch, 0.0));
  MCConfig cfg = quick_cfg(40000);
  cfg.scheme = MCScheme::IGaExplicit;
  const double T = 0.25;
  const MCEstimate est = moment_estimate(law, cfg, T, 2);
  CHECK(std::abs(est.value - moment_n(law, T, 2)) <= 3.0 * est.stderr_);

  // scheme pairing is validated
  auto cir = law_of(safe_params(Model::Heston, 0.0));
  CHECK_THROWS_AS(simulate_variance(cir, cfg, T), std::invalid_argument);
}

TEST_CASE("direct MC converges to Black-Scholes when variance is flat", "[montecarlo]") {
  auto p = safe_params(Model::Heston, -0.5);  // rho irrelevant once lambda = 0
  p.lambda = PiecewiseCurve(p.grid(), 0.0);
  p.theta = PiecewiseCurve(p.grid(), 0.0036);  // pins V at v0
  auto mkt = market_state();
  const double T = 1.0 / 12.0;
  OptionSpec opt{100.0, T, OptionKind::Put};
  MCConfig cfg = quick_cfg(40000);

  const MCEstimate est = direct_mc_put(mkt, p, opt, cfg);
  BsPoint q;
  q.x = 100.0;
  q.strike = 100.0;
  q.maturity = T;
  q.rdInt = 0.02 * T;
  q.rfInt = 0.0;
  q.y = 0.0036 * T;
  CHECK(std::abs(est.value - put_bs(q)) <= 3.0 * est.stderr_);
}

TEST_CASE("mixing and direct estimators agree", "[montecarlo]") {
  auto p = safe_params(Model::Heston, -0.391);
  auto mkt = market_state();
  OptionSpec opt{100.0, 1.0 / 12.0, OptionKind::Put};
  MCConfig cfg = quick_cfg(30000);

  const MCEstimate mix = mixing_mc_put(mkt, p, opt, cfg);
  MCConfig cfg2 = cfg;
  cfg2.seed = 778;
  const MCEstimate dir = direct_mc_put(mkt, p, opt, cfg2);
  const double se = std::hypot(mix.stderr_, dir.stderr_);
  CHECK(std::abs(mix.value - dir.value) <= 3.0 * se);
  CHECK(mix.stderr_ < dir.stderr_);  // conditioning removes the spot noise
}

TEST_CASE("direct put-call parity on shared paths", "[montecarlo]") {
  auto p = safe_params(Model::Heston, -0.391);
  auto mkt = market_state();
  const double T = 0.25;
  OptionSpec opt{100.0, T, OptionKind::Put};
  MCConfig cfg = quick_cfg(30000);

  const PutCallEstimate pc = direct_mc_put_call(mkt, p, opt, cfg);
  const double fwd = 100.0 * std::exp(-integrate_curve(mkt.rf, 0.0, T)) -
                     100.0 * std::exp(-integrate_curve(mkt.rd, 0.0, T));
  const double se = std::hypot(pc.put.stderr_, pc.call.stderr_);
  CHECK(std::abs(pc.call.value - pc.put.value - fwd) <= 3.0 * se);
}

TEST_CASE("truncation events are counted, never NaN", "[montecarlo]") {
  auto p = safe_params(Model::Heston, 0.0);
  p.kappa = PiecewiseCurve(p.grid(), 1.0);
  p.lambda = PiecewiseCurve(p.grid(), 0.9);  // Feller badly violated
  auto law = law_of(p);
  MCConfig cfg = quick_cfg(2000);
  auto ens = simulate_variance(law, cfg, 0.5);
  std::uint64_t truncs = 0;
  for (const auto& st : ens.paths) {
    REQUIRE(std::isfinite(st.v_end));
    REQUIRE(st.v_end >= 0.0);
    truncs += st.truncations;
  }
  CHECK(truncs > 0);
}

TEST_CASE("grid sampling and antithetic flag", "[montecarlo]") {
  MaturityGrid g({0.0, 0.25, 0.5, 1.0});
  ModelParams p;
  p.model = Model::Heston;
  p.v0 = 0.0036;
  p.kappa = PiecewiseCurve(g, 5.0);
  p.theta = PiecewiseCurve(g, {0.019, 0.011, 0.009});
  p.lambda = PiecewiseCurve(g, 0.414);
  p.rho = PiecewiseCurve(g, 0.0);
  auto law = law_of(p);

  MCConfig cfg = quick_cfg(1000);
  auto ens = simulate_variance(law, cfg, 1.0, true);
  REQUIRE(ens.grid_cols == 3);
  REQUIRE(ens.grid_values.size() == 3000);
  for (std::size_t p2 = 0; p2 < 5; ++p2)
    CHECK(ens.grid_values[p2 * 3 + 2] == ens.paths[p2].v_end);

  cfg.antithetic = true;
  auto anti = simulate_variance(law, cfg, 1.0);
  CHECK(anti.paths.size() == 1000);
  // antithetic halves share the driving noise with flipped sign, so the
  // sample mean over pairs is smoother than independent sampling
  MCEstimate m1 = moment_estimate(law, cfg, 1.0, 1);
  CHECK(std::abs(m1.value - mean(law, 1.0)) <= 4.0 * m1.stderr_ + 1e-6);
}

TEST_CASE("seed independence of correctness", "[montecarlo]") {
  auto law = law_of(safe_params(Model::Heston, 0.0));
  const double T = 1.0 / 12.0;
  int hits = 0;
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull, 6ull, 7ull, 8ull, 9ull, 10ull}) {
    MCConfig cfg = quick_cfg(15000);
    cfg.seed = seed;
    const MCEstimate est = moment_estimate(law, cfg, T, 1);
    if (std::abs(est.value - mean(law, T)) <= 3.0 * est.stderr_) ++hits;
  }
  CHECK(hits >= 9);
}
