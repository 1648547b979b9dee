// Moments, variances, covariances and mixed moments of the CIR and
// inverse-Gamma variance processes with time-dependent parameters, plus the
// Heston measure-shift map. Every quantity is available on two routes:
//
//   OperatorKeys - the moment recursions unrolled into n-fold integral
//                  operator combinations, evaluated in closed form;
//   Quadrature   - the same recursions integrated numerically level by
//                  level (independent of the operator recursion, used for
//                  cross-checks and for orders too deep for the fast path).
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "svol/chebyshev.hpp"
#include "svol/core.hpp"
#include "svol/operators.hpp"

namespace svol {

enum class VarFamily { CIR, IGa };

enum class MomentMethod { Auto, OperatorKeys, Quadrature };

/// Mean-reverting variance law dV = kappa (theta - V) dt + lambda V^mu dB
/// with mu = 1/2 (CIR) or 1 (IGa). Measure-shifted laws may carry a
/// non-positive mean-reversion curve; the drift level kappa*theta is then
/// kept as an explicit product so it stays finite and exact.
struct VarianceLaw {
  VarFamily family = VarFamily::CIR;
  double v0 = 0.0;
  PiecewiseCurve kappa, theta, lambda;
  std::optional<PiecewiseCurve> driftLevel;  // kappa*theta override for shifted laws

  PiecewiseCurve kappa_theta() const {
    if (driftLevel) return *driftLevel;
    return curve_transform(kappa, theta, [](double k, double t) { return k * t; });
  }

  const MaturityGrid& grid() const { return kappa.grid(); }
  double horizon() const { return grid().horizon(); }

  /// Feller condition 2 kappa theta > lambda^2, per interval. Reported only;
  /// calibrated parameters violate it routinely.
  std::vector<bool> feller_ok() const {
    const PiecewiseCurve kt = kappa_theta();
    std::vector<bool> ok(grid().intervals());
    for (std::size_t i = 0; i < ok.size(); ++i)
      ok[i] = 2.0 * kt.value(i) > lambda.value(i) * lambda.value(i);
    return ok;
  }

  bool mean_reversion_nonpositive() const {
    for (double k : kappa.values())
      if (k <= 0.0) return true;
    return false;
  }

  void validate() const {
    if (!(v0 > 0.0)) throw std::invalid_argument("VarianceLaw: v0 must be positive");
    if (theta.grid() != kappa.grid() || lambda.grid() != kappa.grid())
      throw std::invalid_argument("VarianceLaw: curves must share one grid");
    for (double l : lambda.values())
      if (l < 0.0) throw std::invalid_argument("VarianceLaw: lambda must be nonnegative");
  }
};

/// Variance law of a Heston model under the n-th tilted measure: mean
/// reversion kappa - n lambda rho, drift level preserved at kappa theta.
inline VarianceLaw heston_shifted_law(const ModelParams& params, int n) {
  if (params.model != Model::Heston)
    throw ModelPreconditionError("heston_shifted_law: requires a Heston parameter set");
  if (n < 0 || n > 2) throw std::invalid_argument("heston_shifted_law: n must be 0, 1 or 2");
  VarianceLaw law;
  law.family = VarFamily::CIR;
  law.v0 = params.v0;
  law.lambda = params.lambda;
  const double fn = static_cast<double>(n);
  law.kappa = curve_transform(params.kappa,
                              curve_transform(params.lambda, params.rho,
                                              [](double l, double r) { return l * r; }),
                              [fn](double k, double lr) { return k - fn * lr; });
  law.driftLevel =
      curve_transform(params.kappa, params.theta, [](double k, double t) { return k * t; });
  // theta is the drift level divided by the shifted mean reversion; it can be
  // huge or infinite when the shift crosses zero, which is why the product is
  // the authoritative field.
  law.theta = curve_transform(*law.driftLevel, law.kappa,
                              [](double kt, double k) { return k != 0.0 ? kt / k : HUGE_VAL; });
  return law;
}

namespace detail {

using KeyPairs = std::vector<std::pair<PiecewiseCurve, PiecewiseCurve>>;

/// Linear combination  c0 + sum_i c_i omega_t^{K_i}  used to unroll the
/// moment recursions into operator keys.
struct KeyCombo {
  double c0 = 0.0;
  std::vector<std::pair<double, KeyPairs>> terms;

  double eval(double t) const {
    double v = c0;
    for (const auto& [c, pairs] : terms) v += c * omega_value(OperatorKey(pairs), t);
    return v;
  }

  std::size_t max_depth() const {
    std::size_t d = 0;
    for (const auto& [c, pairs] : terms) d = std::max(d, pairs.size());
    return d;
  }

  /// int_0^t l e^{int k} (this)(u) du as a new combination.
  KeyCombo apply_outer(const PiecewiseCurve& k, const PiecewiseCurve& l) const {
    KeyCombo out;
    if (c0 != 0.0) out.terms.push_back({c0, KeyPairs{{k, l}}});
    for (const auto& [c, pairs] : terms) {
      KeyPairs np{{k, l}};
      np.insert(np.end(), pairs.begin(), pairs.end());
      out.terms.push_back({c, std::move(np)});
    }
    return out;
  }
};

/// Per-family drift/diffusion ingredients for the moment recursions.
/// CIR:  E(V_t^n) = e^{-n int kappa} (v0^n + int e^{int kappa} g_n E(V^{n-1}))
///       with g_n = n kappa theta + n(n-1)/2 lambda^2, outer pair (kappa, g_n).
/// IGa:  E(V_t^n) = e^{int a_n} (v0^n + int e^{int (kappa - (n-1) lambda^2)}
///       n kappa theta E(V^{n-1})), a_n = n(n-1)/2 lambda^2 - n kappa.
struct MomentScheme {
  const VarianceLaw& law;

  PiecewiseCurve exponent(int n) const {  // E(V^n) = e^{int exponent} * (...)
    const double fn = n;
    if (law.family == VarFamily::CIR)
      return curve_transform(law.kappa, [fn](double k) { return -fn * k; });
    return curve_transform(law.lambda, law.kappa, [fn](double l, double k) {
      return 0.5 * fn * (fn - 1.0) * l * l - fn * k;
    });
  }

  PiecewiseCurve outer_k(int n) const {
    if (law.family == VarFamily::CIR) return law.kappa;
    const double fn = n;
    return curve_transform(law.kappa, law.lambda,
                           [fn](double k, double l) { return k - (fn - 1.0) * l * l; });
  }

  PiecewiseCurve outer_l(int n) const {
    const double fn = n;
    if (law.family == VarFamily::CIR) {
      const PiecewiseCurve kt = law.kappa_theta();
      return curve_transform(kt, law.lambda, [fn](double kt_, double l) {
        return fn * kt_ + 0.5 * fn * (fn - 1.0) * l * l;
      });
    }
    return curve_transform(law.kappa_theta(), [fn](double kt_) { return fn * kt_; });
  }
};

inline KeyCombo moment_combo(const VarianceLaw& law, int n) {
  MomentScheme s{law};
  KeyCombo combo;
  combo.c0 = law.v0;
  combo.terms.push_back({1.0, KeyPairs{{s.outer_k(1), s.outer_l(1)}}});
  for (int j = 2; j <= n; ++j) {
    combo = combo.apply_outer(s.outer_k(j), s.outer_l(j));
    combo.c0 = std::pow(law.v0, j);
  }
  return combo;
}

/// Chebyshev representation of u -> E(V_u^j) for j = 1..n on [0, t].
inline std::vector<PiecewiseCheb> moment_cheb_levels(const VarianceLaw& law, double t, int n) {
  MomentScheme s{law};
  std::vector<double> breaks;
  for (double b : law.grid().times())
    if (b < t) breaks.push_back(b);
  breaks.push_back(t);

  std::vector<PiecewiseCheb> levels;
  for (int j = 1; j <= n; ++j) {
    const PiecewiseCurve ex = s.exponent(j);
    const PiecewiseCurve ok = s.outer_k(j);
    const PiecewiseCurve ol = s.outer_l(j);
    // integrand e^{int (outer_k - exponent_{j-1})}... expressed directly:
    // I_j(u) = int_0^u e^{-int_0^z exponent_j} * ol(z) * E(V^{j-1})(z) dz
    // with the identity exponent_{j-1} - exponent_j = outer_k (both families).
    const PiecewiseCheb* prev = j >= 2 ? &levels[j - 2] : nullptr;
    auto integrand = [&](double z) {
      const double w = std::exp(-integrate_curve(ex, 0.0, z)) * ol.eval(z);
      if (!prev) return w;  // E(V^0) = 1
      return w * prev->eval(z);
    };
    PiecewiseCheb cum = PiecewiseCheb::from_function(breaks, integrand, 1e-13).cumulative();
    const double v0j = std::pow(law.v0, j);
    // E(V^j)(u) = e^{int exponent_j}(v0^j + cum(u)); wrap as a PiecewiseCheb.
    auto value = [&, v0j](double u) {
      return std::exp(integrate_curve(ex, 0.0, u)) * (v0j + cum.eval(u));
    };
    levels.push_back(PiecewiseCheb::from_function(breaks, value, 1e-13));
  }
  return levels;
}

inline bool use_fast(const VarianceLaw& law, int depth, MomentMethod m) {
  (void)law;
  if (m == MomentMethod::OperatorKeys) {
    if (depth > static_cast<int>(kMaxFoldDepth))
      throw std::invalid_argument("moments: operator fast path capped at 5-fold keys");
    return true;
  }
  if (m == MomentMethod::Quadrature) return false;
  return depth <= static_cast<int>(kMaxFoldDepth);
}

}  // namespace detail

/// E(V_t^n), n <= 6.
inline double moment_n(const VarianceLaw& law, double t, int n,
                       MomentMethod method = MomentMethod::Auto) {
  if (n < 1 || n > 6) throw std::invalid_argument("moment_n: order must be in [1, 6]");
  if (t < 0.0 || t > law.horizon()) throw std::out_of_range("moment_n: time outside grid");
  if (t == 0.0) return std::pow(law.v0, n);
  detail::MomentScheme s{law};
  const double ex = std::exp(integrate_curve(s.exponent(n), 0.0, t));
  if (detail::use_fast(law, n, method)) return ex * detail::moment_combo(law, n).eval(t);
  auto levels = detail::moment_cheb_levels(law, t, n);
  return levels[n - 1].eval(t);
}

inline double mean(const VarianceLaw& law, double t, MomentMethod method = MomentMethod::Auto) {
  return moment_n(law, t, 1, method);
}

inline double variance(const VarianceLaw& law, double t,
                       MomentMethod method = MomentMethod::Auto) {
  if (t < 0.0 || t > law.horizon()) throw std::out_of_range("variance: time outside grid");
  if (t == 0.0) return 0.0;
  const PiecewiseCurve lam2 =
      curve_transform(law.lambda, [](double l) { return l * l; });
  const PiecewiseCurve kt = law.kappa_theta();
  const double damp = std::exp(-2.0 * integrate_curve(law.kappa, 0.0, t));

  if (law.family == VarFamily::CIR) {
    if (detail::use_fast(law, 2, method)) {
      detail::KeyPairs k1{{law.kappa, lam2}};
      detail::KeyPairs k2{{law.kappa, lam2}, {law.kappa, kt}};
      return damp * (law.v0 * omega_value(OperatorKey(k1), t) + omega_value(OperatorKey(k2), t));
    }
    // Var(t) = e^{-2 int kappa} int_0^t e^{2 int_0^u kappa} lambda^2 E(V_u) du
    auto levels = detail::moment_cheb_levels(law, t, 1);
    std::vector<double> breaks;
    for (double b : law.grid().times())
      if (b < t) breaks.push_back(b);
    breaks.push_back(t);
    auto integrand = [&](double u) {
      const double l = lam2.eval(u);
      return l * std::exp(2.0 * integrate_curve(law.kappa, 0.0, u)) * levels[0].eval(u);
    };
    return damp * PiecewiseCheb::from_function(breaks, integrand, 1e-13).integral();
  }

  // IGa: Var(t) = e^{-2 int kappa} int_0^t lambda^2 E(V_u^2) e^{2 int kappa} du
  if (detail::use_fast(law, 3, method)) {
    const PiecewiseCurve kml2 = curve_transform(
        law.kappa, lam2, [](double k, double l2) { return k - l2; });
    detail::KeyPairs k1{{lam2, lam2}};
    detail::KeyPairs k2{{lam2, lam2}, {kml2, kt}};
    detail::KeyPairs k3{{lam2, lam2}, {kml2, kt}, {law.kappa, kt}};
    return damp * (law.v0 * law.v0 * omega_value(OperatorKey(k1), t) +
                   2.0 * law.v0 * omega_value(OperatorKey(k2), t) +
                   2.0 * omega_value(OperatorKey(k3), t));
  }
  auto levels = detail::moment_cheb_levels(law, t, 2);
  std::vector<double> breaks;
  for (double b : law.grid().times())
    if (b < t) breaks.push_back(b);
  breaks.push_back(t);
  auto integrand = [&](double u) {
    return lam2.eval(u) * std::exp(2.0 * integrate_curve(law.kappa, 0.0, u)) *
           levels[1].eval(u);
  };
  return damp * PiecewiseCheb::from_function(breaks, integrand, 1e-13).integral();
}

/// Cov(V_s, V_t); arguments in either order (the formula symmetrizes).
inline double covariance(const VarianceLaw& law, double s, double t,
                         MomentMethod method = MomentMethod::Auto) {
  if (s > t) std::swap(s, t);
  const double var = variance(law, s, method);
  return var * std::exp(-integrate_curve(law.kappa, s, t));
}

/// Fourth central moment E(V_t - E V_t)^4, assembled from raw moments.
inline double central_moment4(const VarianceLaw& law, double t,
                              MomentMethod method = MomentMethod::Auto) {
  const double m1 = moment_n(law, t, 1, method);
  const double m2 = moment_n(law, t, 2, method);
  const double m3 = moment_n(law, t, 3, method);
  const double m4 = moment_n(law, t, 4, method);
  return m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1 * m1 * m1 * m1;
}

/// E(V_s^m V_t^n) for s <= t, m + n <= 6, via the forward recursion in n.
inline double mixed_moment(const VarianceLaw& law, double s, double t, int m, int n,
                           MomentMethod method = MomentMethod::Auto) {
  if (m < 1 || n < 1 || m + n > 6) throw std::invalid_argument("mixed_moment: need m,n >= 1, m+n <= 6");
  if (s > t) throw std::invalid_argument("mixed_moment: requires s <= t");
  if (s == t) return moment_n(law, s, m + n, method);
  detail::MomentScheme sc{law};

  // The recursion depth in t is n <= 5, so the operator route is always
  // available; seed moments of order 6 fall back to quadrature on their own.
  const bool fast = method != MomentMethod::Quadrature;

  std::vector<double> seed(n + 1);
  for (int j = 0; j <= n; ++j)
    seed[j] = moment_n(law, s, m + j, fast ? MomentMethod::Auto : method);

  if (fast) {
    // R_j(t) = A_j + int_s^t e^{int_0^u outer_k(j)} outer_l(j) R_{j-1}(u) du,
    // A_j = e^{-int_0^s exponent_j} E(V_s^{m+j}); result e^{int_0^t exponent_n} R_n.
    // Shifted combinations: value(t) = c0 + sum c_i (omega_t^{K_i} - omega_s^{K_i}).
    struct Shifted {
      double c0 = 0.0;
      std::vector<std::pair<double, detail::KeyPairs>> terms;
    };
    Shifted r;
    r.c0 = seed[0];
    for (int j = 1; j <= n; ++j) {
      const PiecewiseCurve ok = sc.outer_k(j);
      const PiecewiseCurve ol = sc.outer_l(j);
      Shifted next;
      next.c0 = std::exp(-integrate_curve(sc.exponent(j), 0.0, s)) * seed[j];
      if (r.c0 != 0.0) next.terms.push_back({r.c0, detail::KeyPairs{{ok, ol}}});
      for (const auto& [c, pairs] : r.terms) {
        detail::KeyPairs np{{ok, ol}};
        np.insert(np.end(), pairs.begin(), pairs.end());
        next.terms.push_back({c, std::move(np)});
        const double ws = omega_value(OperatorKey(pairs), s);
        if (ws != 0.0) next.terms.push_back({-c * ws, detail::KeyPairs{{ok, ol}}});
      }
      r = std::move(next);
    }
    double v = r.c0;
    for (const auto& [c, pairs] : r.terms) {
      OperatorKey key(pairs);
      v += c * (omega_value(key, t) - omega_value(key, s));
    }
    return std::exp(integrate_curve(sc.exponent(n), 0.0, t)) * v;
  }

  // Quadrature route: integrate the recursion on [s, t] level by level.
  std::vector<double> breaks{s};
  for (double b : law.grid().times())
    if (b > s && b < t) breaks.push_back(b);
  breaks.push_back(t);
  PiecewiseCheb prev;  // E(V_s^m V_u^{j-1}) as a function of u
  for (int j = 1; j <= n; ++j) {
    const PiecewiseCurve ex = sc.exponent(j);
    const PiecewiseCurve ol = sc.outer_l(j);
    auto integrand = [&, j](double u) {
      const double w = std::exp(-integrate_curve(ex, 0.0, u)) * ol.eval(u);
      return j >= 2 ? w * prev.eval(u) : w * seed[0];
    };
    PiecewiseCheb cum = PiecewiseCheb::from_function(breaks, integrand, 1e-13).cumulative();
    const double a = std::exp(-integrate_curve(ex, 0.0, s)) * seed[j];
    auto value = [&, a](double u) {
      return std::exp(integrate_curve(ex, 0.0, u)) * (a + cum.eval(u));
    };
    prev = PiecewiseCheb::from_function(breaks, value, 1e-13);
  }
  return prev.eval(t);
}

}  // namespace svol
