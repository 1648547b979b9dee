// Black-Scholes put kernel parametrised by integrated variance, its partial
// derivatives up to fourth order, implied volatility inversion and the
// delta-to-strike conversion used for FX moneyness ladders.
//
// The x argument is an effective spot (spot times a stochastic factor in the
// mixing representation), y is total integrated variance over the option
// life. Rates enter only through their integrals over [0, T].
#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include "svol/core.hpp"

namespace svol {

inline double norm_pdf(double x) { return 0.3989422804014326779 * std::exp(-0.5 * x * x); }

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

/// Inverse standard normal CDF (Wichura's AS241, double precision).
inline double norm_ppf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("norm_ppf: p must lie in (0, 1)");
  const double q = p - 0.5;
  double r;
  if (std::abs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
            3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
          4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
          2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
          5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -v : v;
}

/// Evaluation point of the integrated-variance Black-Scholes kernel.
struct BsPoint {
  double x = 0.0;       // effective spot argument
  double y = 0.0;       // integrated variance over [0, T]
  double strike = 0.0;  // K
  double maturity = 0.0;
  double rdInt = 0.0;  // int_0^T r^d dt
  double rfInt = 0.0;  // int_0^T r^f dt
};

// Below this integrated variance, price functions return the y -> 0 limit
// (discounted intrinsic value) rather than evaluating d+-.
inline constexpr double kDegenerateY = 1e-12;

inline std::pair<double, double> d_pm(const BsPoint& p) {
  if (!(p.y > 0.0)) throw std::domain_error("d_pm: integrated variance must be positive");
  if (!(p.x > 0.0 && p.strike > 0.0)) throw std::domain_error("d_pm: x and strike must be positive");
  const double sy = std::sqrt(p.y);
  const double m = std::log(p.x / p.strike) + p.rdInt - p.rfInt;
  return {m / sy + 0.5 * sy, m / sy - 0.5 * sy};
}

inline double put_bs(const BsPoint& p) {
  if (!(p.x > 0.0 && p.strike > 0.0)) throw std::domain_error("put_bs: x and strike must be positive");
  const double dfd = std::exp(-p.rdInt), dff = std::exp(-p.rfInt);
  if (p.y <= kDegenerateY) return std::max(p.strike * dfd - p.x * dff, 0.0);
  const auto [dp, dm] = d_pm(p);
  return p.strike * dfd * norm_cdf(-dm) - p.x * dff * norm_cdf(-dp);
}

inline double call_bs(const BsPoint& p) {
  if (!(p.x > 0.0 && p.strike > 0.0)) throw std::domain_error("call_bs: x and strike must be positive");
  const double dfd = std::exp(-p.rdInt), dff = std::exp(-p.rfInt);
  if (p.y <= kDegenerateY) return std::max(p.x * dff - p.strike * dfd, 0.0);
  const auto [dp, dm] = d_pm(p);
  return p.x * dff * norm_cdf(dp) - p.strike * dfd * norm_cdf(dm);
}

inline double price_bs(const BsPoint& p, OptionKind kind) {
  return kind == OptionKind::Put ? put_bs(p) : call_bs(p);
}

/// Closed-form partial d^(ax+ay) Put_BS / dx^ax dy^ay for the tabulated
/// orders (all first through fourth order combinations with ax + ay <= 4).
inline double put_bs_partial(const BsPoint& p, int ax, int ay) {
  if (!(p.y > 0.0)) throw std::domain_error("put_bs_partial: y must be positive");
  const auto [dp, dm] = d_pm(p);
  const double x = p.x, y = p.y, sy = std::sqrt(p.y);
  const double dff = std::exp(-p.rfInt);
  const double ph = norm_pdf(dp);
  const double pp = dp * dm;  // recurring product d+ d-
  const double ds = dp + dm;  // recurring sum

  switch (ax * 10 + ay) {
    case 10:  // d/dx
      return dff * (norm_cdf(dp) - 1.0);
    case 1:  // d/dy
      return x * dff * ph / (2.0 * sy);
    case 20:
      return dff * ph / (x * sy);
    case 2:
      return x * dff * ph / (4.0 * y * sy) * (pp - 1.0);
    case 11:
      return -dff * ph * dm / (2.0 * y);
    case 30:
      return -dff * ph / (x * x * y) * (dp + sy);
    case 21:
      return dff * ph / (2.0 * x * y * sy) * (pp - 1.0);
    case 12:
      return -dff * ph / (2.0 * y * y) * (0.5 * dm * dm * dp - 0.5 * dp - dm);
    case 3:
      return x * dff * ph / (8.0 * y * y * sy) * ((pp - 1.0) * (pp - 1.0) - ds * ds + 2.0);
    case 40:
      return dff * ph / (x * x * x * y * sy) * (dp * dp + 3.0 * dp * sy + 2.0 * y - 1.0);
    case 31:
      return -dff * ph * dp / (2.0 * x * x * y * y) * (dm * (dp + sy) - 3.0);
    case 22:
      return -dff * ph / (2.0 * x * y * y * sy) *
             (0.5 * ds * ds + pp * (1.0 - 0.5 * pp) - 1.5);
    case 13:
      return dff * ph / (8.0 * y * y * y) *
             ((sy - dp) * ((pp - 1.0) * (pp - 1.0) - ds * ds + 2.0) +
              2.0 * ds * (pp - 3.0));
    case 4:
      return x * dff * ph / (16.0 * y * y * y * sy) *
             ((pp - 5.0) * (pp - 1.0) * (pp - 1.0) - 3.0 * (pp - 3.0) * ds * ds +
              4.0 * pp * pp - 2.0 * pp - 10.0);
    default:
      throw std::invalid_argument("put_bs_partial: derivative order not tabulated");
  }
}

/// Volatility sigma such that the Black-Scholes price with y = sigma^2 T
/// reproduces `price`. Safeguarded Newton with a bisection fallback on
/// [1e-9, 5]; prices at the intrinsic lower bound return 0.
inline double implied_vol(double price, const BsPoint& point, OptionKind kind) {
  if (!(point.maturity > 0.0)) throw std::domain_error("implied_vol: maturity must be positive");
  const double dfd = std::exp(-point.rdInt), dff = std::exp(-point.rfInt);
  const double intrinsic = kind == OptionKind::Put
                               ? std::max(point.strike * dfd - point.x * dff, 0.0)
                               : std::max(point.x * dff - point.strike * dfd, 0.0);
  const double upper = kind == OptionKind::Put ? point.strike * dfd : point.x * dff;
  const double tol = 1e-12 * std::max(1.0, point.strike);
  if (price < intrinsic - tol || price > upper + tol)
    throw std::domain_error("implied_vol: price outside no-arbitrage bounds");
  if (price <= intrinsic + tol) return 0.0;

  const double T = point.maturity;
  double lo = 1e-9, hi = 5.0;
  auto value = [&](double sigma) {
    BsPoint q = point;
    q.y = sigma * sigma * T;
    return price_bs(q, kind) - price;
  };
  if (value(hi) < 0.0) throw std::domain_error("implied_vol: price above sigma = 5 bound");

  double sigma = std::sqrt(std::max(point.y / T, 0.04));  // start from point.y if caller set it
  if (!(sigma > lo && sigma < hi)) sigma = 0.2;
  for (int it = 0; it < 200; ++it) {
    BsPoint q = point;
    q.y = sigma * sigma * T;
    const double f = price_bs(q, kind) - price;
    if (std::abs(f) <= 1e-15 * std::max(1.0, price)) return sigma;
    if (f > 0.0)
      hi = std::min(hi, sigma);
    else
      lo = std::max(lo, sigma);
    // vega in sigma units; put and call vegas coincide
    const double vega = q.y > kDegenerateY ? put_bs_partial(q, 0, 1) * 2.0 * sigma * T : 0.0;
    double next = vega > 1e-300 ? sigma - f / vega : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - sigma) <= 1e-13 * std::max(1.0, sigma)) return next;
    sigma = next;
  }
  if (hi - lo < 1e-10) return 0.5 * (lo + hi);
  throw NumericError("implied_vol: no convergence");
}

/// Strike with Black-Scholes spot put delta |d Put/d x| = delta at the given
/// volatility. ATM by this library's convention is the forward, delta such
/// that N(-d+) e^{-rfInt} = delta.
inline double strike_from_put_delta(double delta, double sigma, const MarketState& market,
                                    double T) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("strike_from_put_delta: delta in (0,1)");
  if (!(sigma > 0.0)) throw std::domain_error("strike_from_put_delta: sigma must be positive");
  const double rdInt = integrate_curve(market.rd, 0.0, T);
  const double rfInt = integrate_curve(market.rf, 0.0, T);
  const double q = delta * std::exp(rfInt);
  if (!(q > 0.0 && q < 1.0))
    throw NumericError("strike_from_put_delta: delta not attainable at this foreign rate");
  const double z = norm_ppf(q);  // -d+ = z
  const double sT = sigma * std::sqrt(T);
  return market.spot * std::exp(rdInt - rfInt + z * sT + 0.5 * sT * sT);
}

/// Forward strike, the ATM convention used throughout.
inline double atm_forward_strike(const MarketState& market, double T) {
  return market.spot *
         std::exp(integrate_curve(market.rd, 0.0, T) - integrate_curve(market.rf, 0.0, T));
}

}  // namespace svol
