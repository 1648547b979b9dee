// Second-order expansion prices for the Heston and GARCH diffusion models
// with piecewise-constant parameters, assembled from closed-form integral
// operator combinations. Exposes the expansion point, the three expectation
// terms, second-order Delta/Gamma, and a computable error bound for the
// uncorrelated GARCH case.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "svol/blackscholes.hpp"
#include "svol/chebyshev.hpp"
#include "svol/core.hpp"
#include "svol/moments.hpp"
#include "svol/operators.hpp"

namespace svol {

/// Price plus the expansion ingredients, exposed for diagnostics. The price
/// always reconstructs as
///   zerothOrder + 1/2 dxx S0^2 termXi2 + 1/2 dyy termVarInt
///               + dxy S0 termMixed.
struct PricingResult {
  double price = 0.0;
  double xhat = 0.0;
  double yhat = 0.0;
  double termXi2 = 0.0;     // E(xi_T - 1)^2 (second-order exponential expansion)
  double termVarInt = 0.0;  // E(int (1-rho^2)(V - EV) dt)^2
  double termMixed = 0.0;   // E{(xi_T - 1) int (1-rho^2)(V - EV) dt}
  double zerothOrder = 0.0;
  bool xi2Negative = false;
  std::vector<std::string> warnings;
};

struct Greeks2 {
  double delta = 0.0;
  double gamma = 0.0;
};

namespace detail {

using Pairs = KeyPairs;

struct ExpansionTerms {
  double yhat = 0.0, xi2 = 0.0, varint = 0.0, mixed = 0.0;
  bool xi2Negative = false;
};

inline double omega(const Pairs& pairs, double T) { return omega_value(OperatorKey(pairs), T); }

/// Heston expansion terms via the closed-form operator combinations.
inline ExpansionTerms heston_terms(const ModelParams& p, double T) {
  const double v0 = p.v0;
  auto mul = [](const PiecewiseCurve& a, const PiecewiseCurve& b) {
    return curve_transform(a, b, [](double x, double y) { return x * y; });
  };
  const PiecewiseCurve kt = mul(p.kappa, p.theta);
  const PiecewiseCurve l2 = mul(p.lambda, p.lambda);
  const PiecewiseCurve r2 = mul(p.rho, p.rho);
  const PiecewiseCurve omr2 = curve_transform(r2, [](double x) { return 1.0 - x; });
  const PiecewiseCurve lr = mul(p.lambda, p.rho);
  const PiecewiseCurve negk = curve_transform(p.kappa, [](double k) { return -k; });
  // tilted mean reversions kappa - 2 lambda rho and kappa - lambda rho
  const PiecewiseCurve k2t = curve_transform(p.kappa, lr, [](double k, double x) { return k - 2.0 * x; });
  const PiecewiseCurve k1t = curve_transform(p.kappa, lr, [](double k, double x) { return k - x; });
  const PiecewiseCurve negk2t = curve_transform(k2t, [](double k) { return -k; });
  const PiecewiseCurve negk1t = curve_transform(k1t, [](double k) { return -k; });

  ExpansionTerms t;
  t.yhat = v0 * omega({{negk, omr2}}, T) + omega({{negk, omr2}, {p.kappa, kt}}, T);

  const double e1 = v0 * omega({{negk2t, r2}}, T) + omega({{negk2t, r2}, {k2t, kt}}, T);
  const double c1 = v0 * omega({{negk2t, r2}, {negk2t, r2}, {k2t, l2}}, T) +
                    omega({{negk2t, r2}, {negk2t, r2}, {k2t, l2}, {k2t, kt}}, T);
  t.xi2 = std::exp(e1) * (1.0 + c1) - 1.0;
  t.xi2Negative = t.xi2 < 0.0;

  t.varint = 2.0 * v0 * omega({{negk, omr2}, {negk, omr2}, {p.kappa, l2}}, T) +
             2.0 * omega({{negk, omr2}, {negk, omr2}, {p.kappa, l2}, {p.kappa, kt}}, T);

  t.mixed = v0 * (omega({{negk1t, omr2}}, T) - omega({{negk, omr2}}, T)) +
            omega({{negk1t, omr2}, {k1t, kt}}, T) - omega({{negk, omr2}, {p.kappa, kt}}, T);
  return t;
}

/// GARCH (rho = 0) expansion terms: only the integrated-variance variance
/// survives, through the 3-, 4- and 5-fold keys.
inline ExpansionTerms garch_terms(const ModelParams& p, double T) {
  const double v0 = p.v0;
  auto mul = [](const PiecewiseCurve& a, const PiecewiseCurve& b) {
    return curve_transform(a, b, [](double x, double y) { return x * y; });
  };
  const PiecewiseCurve kt = mul(p.kappa, p.theta);
  const PiecewiseCurve l2 = mul(p.lambda, p.lambda);
  const PiecewiseCurve one(p.grid(), 1.0);
  const PiecewiseCurve negk = curve_transform(p.kappa, [](double k) { return -k; });
  const PiecewiseCurve kml2 = curve_transform(p.kappa, l2, [](double k, double x) { return k - x; });

  ExpansionTerms t;
  t.yhat = v0 * omega({{negk, one}}, T) + omega({{negk, one}, {p.kappa, kt}}, T);
  const double cov2 =
      v0 * v0 * omega({{negk, one}, {negk, one}, {l2, l2}}, T) +
      2.0 * v0 * omega({{negk, one}, {negk, one}, {l2, l2}, {kml2, kt}}, T) +
      2.0 * omega({{negk, one}, {negk, one}, {l2, l2}, {kml2, kt}, {p.kappa, kt}}, T);
  t.varint = 2.0 * cov2;  // E(int (V - EV) dt)^2 = 2 * double covariance integral
  return t;
}

inline BsPoint expansion_point(const MarketState& market, const OptionSpec& opt, double yhat) {
  BsPoint pt;
  pt.x = market.spot;
  pt.y = yhat;
  pt.strike = opt.strike;
  pt.maturity = opt.maturity;
  pt.rdInt = integrate_curve(market.rd, 0.0, opt.maturity);
  pt.rfInt = integrate_curve(market.rf, 0.0, opt.maturity);
  return pt;
}

inline ExpansionTerms expansion_terms(const ModelParams& params, const OptionSpec& opt) {
  const ModelParams rp = restrict_params(params, opt.maturity);
  if (params.model == Model::Heston) return heston_terms(rp, opt.maturity);
  if (!params.rho_is_zero())
    throw ModelPreconditionError(
        "garch pricing requires rho = 0 on every interval; the tilted variance law is "
        "intractable otherwise");
  return garch_terms(rp, opt.maturity);
}

inline PricingResult assemble(const MarketState& market, const ModelParams& params,
                              const OptionSpec& opt) {
  market.validate();
  params.validate();
  opt.validate();
  if (opt.maturity > params.horizon())
    throw std::out_of_range("pricing: option maturity beyond parameter grid");

  const ExpansionTerms t = expansion_terms(params, opt);
  const BsPoint pt = expansion_point(market, opt, t.yhat);
  const double s0 = market.spot;

  PricingResult r;
  r.xhat = s0;
  r.yhat = t.yhat;
  r.termXi2 = t.xi2;
  r.termVarInt = t.varint;
  r.termMixed = t.mixed;
  r.xi2Negative = t.xi2Negative;
  if (t.xi2Negative)
    r.warnings.push_back("termXi2 negative: exponential expansion left the moment cone");
  r.zerothOrder = price_bs(pt, opt.kind);
  r.price = r.zerothOrder + 0.5 * put_bs_partial(pt, 2, 0) * s0 * s0 * r.termXi2 +
            0.5 * put_bs_partial(pt, 0, 2) * r.termVarInt +
            put_bs_partial(pt, 1, 1) * s0 * r.termMixed;

  const double dfd = std::exp(-pt.rdInt), dff = std::exp(-pt.rfInt);
  const double intrinsic = opt.kind == OptionKind::Put
                               ? std::max(opt.strike * dfd - s0 * dff, 0.0)
                               : std::max(s0 * dff - opt.strike * dfd, 0.0);
  if (r.price < intrinsic - 1e-12 * std::max(1.0, opt.strike))
    r.warnings.push_back("price below discounted intrinsic value: expansion degraded");
  return r;
}

}  // namespace detail

inline PricingResult heston_put2(const MarketState& market, const ModelParams& params,
                                 const OptionSpec& opt) {
  if (params.model != Model::Heston)
    throw ModelPreconditionError("heston_put2: parameter set is not Heston");
  OptionSpec p = opt;
  p.kind = OptionKind::Put;
  return detail::assemble(market, params, p);
}

inline PricingResult garch_put2(const MarketState& market, const ModelParams& params,
                                const OptionSpec& opt) {
  if (params.model != Model::Garch)
    throw ModelPreconditionError("garch_put2: parameter set is not GARCH");
  OptionSpec p = opt;
  p.kind = OptionKind::Put;
  return detail::assemble(market, params, p);
}

/// Call price by the shared expansion: identical terms, zeroth order from
/// the call kernel (put-call parity shifts only the zeroth order).
inline PricingResult price_call2(const MarketState& market, const ModelParams& params,
                                 const OptionSpec& opt) {
  OptionSpec c = opt;
  c.kind = OptionKind::Call;
  return detail::assemble(market, params, c);
}

/// Dispatch on model and option kind.
inline PricingResult price2(const MarketState& market, const ModelParams& params,
                            const OptionSpec& opt) {
  return detail::assemble(market, params, opt);
}

/// Second-order Delta and Gamma: derivatives of the expansion price in the
/// spot; the expectation terms do not depend on it.
inline Greeks2 greeks2(const MarketState& market, const ModelParams& params,
                       const OptionSpec& opt) {
  market.validate();
  params.validate();
  opt.validate();
  const detail::ExpansionTerms t = detail::expansion_terms(params, opt);
  const BsPoint pt = detail::expansion_point(market, opt, t.yhat);
  const double s0 = market.spot;
  const double A = t.xi2, B = t.varint, C = t.mixed;

  auto d = [&](int ax, int ay) { return put_bs_partial(pt, ax, ay); };
  Greeks2 g;
  g.delta = d(1, 0) + 0.5 * (2.0 * s0 * d(2, 0) + s0 * s0 * d(3, 0)) * A +
            0.5 * d(1, 2) * B + (d(1, 1) + s0 * d(2, 1)) * C;
  g.gamma = d(2, 0) + 0.5 * (2.0 * d(2, 0) + 4.0 * s0 * d(3, 0) + s0 * s0 * d(4, 0)) * A +
            0.5 * d(2, 2) * B + (2.0 * d(2, 1) + s0 * d(3, 1)) * C;
  return g;
}

/// Computable upper bound on |Put - Put^(2)| for the uncorrelated GARCH
/// model:  (1/6) sup_y |d_yyy Put_BS(S0, y)| T^2 int_0^T E|V - EV|^3 dt,
/// with E|X|^3 replaced by the Lyapunov surrogate (E X^4)^{3/4} and the
/// supremum taken numerically over a wide integrated-variance range.
inline double garch_error_bound_rho0(const MarketState& market, const ModelParams& params,
                                     const OptionSpec& opt) {
  market.validate();
  params.validate();
  opt.validate();
  if (params.model != Model::Garch)
    throw ModelPreconditionError("garch_error_bound_rho0: parameter set is not GARCH");
  if (!params.rho_is_zero())
    throw ModelPreconditionError("garch_error_bound_rho0: requires rho = 0");

  const double T = opt.maturity;
  const ModelParams rp = restrict_params(params, T);
  const detail::ExpansionTerms t = detail::garch_terms(rp, T);
  BsPoint pt = detail::expansion_point(market, opt, t.yhat);

  // numerical supremum of |d_yyy| over y in [yhat*1e-3, yhat*1e3]
  double msup = 0.0;
  const int n = 241;
  for (int i = 0; i < n; ++i) {
    BsPoint q = pt;
    q.y = t.yhat * std::pow(10.0, -3.0 + 6.0 * i / (n - 1.0));
    msup = std::max(msup, std::abs(put_bs_partial(q, 0, 3)));
  }

  VarianceLaw law;
  law.family = VarFamily::IGa;
  law.v0 = rp.v0;
  law.kappa = rp.kappa;
  law.theta = rp.theta;
  law.lambda = rp.lambda;

  std::vector<double> breaks;
  for (double b : rp.grid().times())
    if (b < T) breaks.push_back(b);
  breaks.push_back(T);
  auto absm3 = [&](double u) {
    const double c4 = std::max(central_moment4(law, u), 0.0);
    return std::pow(c4, 0.75);
  };
  const double integral = PiecewiseCheb::from_function(breaks, absm3, 1e-10).integral();
  return (1.0 / 6.0) * msup * T * T * integral;
}

}  // namespace svol
