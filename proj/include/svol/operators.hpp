// Iterated integral operators over piecewise-constant curves.
//
// The n-fold operator
//   omega_T^{(k_n,l_n),...,(k_1,l_1)}
//     = int_0^T l_n(u) e^{int_0^u k_n} omega_u^{(k_{n-1},l_{n-1}),...} du
// (pairs listed outermost-first, omega of depth zero identically one) is the
// building block of every closed-form price term in this library. With
// piecewise-constant k and l it advances from one grid date to the next in
// closed form through the helper families
//   e_t^{(k_n,...,k_j)}   - exponentials of summed k integrals,
//   phi_{T_i,t}^{(k,p),...} - polynomially weighted exponential integrals on
//                             a single interval,
// so pricing and calibration never integrate numerically. A Chebyshev
// quadrature reference is provided as an independent oracle.
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "svol/chebyshev.hpp"
#include "svol/core.hpp"

namespace svol {

inline constexpr std::size_t kMaxFoldDepth = 5;

/// Specification of an n-fold integral operator; pairs listed outermost-first.
struct OperatorKey {
  std::vector<std::pair<PiecewiseCurve, PiecewiseCurve>> pairs;

  OperatorKey() = default;
  explicit OperatorKey(std::vector<std::pair<PiecewiseCurve, PiecewiseCurve>> p)
      : pairs(std::move(p)) {
    if (pairs.empty() || pairs.size() > kMaxFoldDepth)
      throw std::invalid_argument("OperatorKey: fold depth must be in [1, 5]");
    const MaturityGrid& g = pairs.front().first.grid();
    for (const auto& [k, l] : pairs)
      if (k.grid() != g || l.grid() != g)
        throw std::invalid_argument("OperatorKey: all curves must share one grid");
  }

  std::size_t depth() const { return pairs.size(); }
  const MaturityGrid& grid() const { return pairs.front().first.grid(); }

  std::string canonical() const {
    std::ostringstream os;
    os.precision(17);
    for (const auto& [k, l] : pairs) {
      os << "(";
      for (double v : k.values().empty() ? std::vector<double>{} : k.values()) os << v << ",";
      os << "|";
      for (double v : l.values()) os << v << ",";
      os << ")";
    }
    return os.str();
  }
};

namespace detail {

// Zero-detection threshold for the k_i = 0 branch of the phi recursion.
inline constexpr double kZeroK = 1e-12;

/// I_p(a, g) = int_0^g s^p e^{a s} ds. Series for small |a| (no cancellation,
/// exact at a = 0), upward recursion from expm1 otherwise.
inline double poly_exp_integral(double a, int p, double g) {
  if (g == 0.0) return 0.0;
  if (std::abs(a) * std::max(g, 1.0) <= 2.0) {
    double term = std::pow(g, p + 1);  // a^j g^{p+j+1} / j!
    double sum = term / (p + 1);
    for (int j = 1; j < 64; ++j) {
      term *= a * g / j;
      const double add = term / (p + j + 1);
      sum += add;
      if (std::abs(add) <= 1e-17 * std::abs(sum)) break;
    }
    return sum;
  }
  double ip = std::expm1(a * g) / a;
  for (int q = 1; q <= p; ++q) ip = (std::pow(g, q) * std::exp(a * g) - q * ip) / a;
  return ip;
}

inline double phi_interval(std::span<const double> ks, std::span<const int> ps, double dt,
                           double g);

// The recursion that peels levels is exact algebraically but divides by the
// outer k, which destroys digits once |k dt gamma| is small. In that regime
// every exponential in sight admits a rapidly convergent series, so the
// integral is evaluated as a truncated polynomial built level by level.
inline constexpr int kPhiPolyDegree = 64;

inline double phi_poly_dp(std::span<const double> ks, std::span<const int> ps, double dt,
                          double g) {
  const std::size_t n = ks.size();
  std::vector<double> F(kPhiPolyDegree + 1, 0.0), G(kPhiPolyDegree + 1, 0.0);
  F[0] = 1.0;
  for (std::size_t jj = n; jj-- > 0;) {  // innermost level first
    const double a = ks[jj] * dt;
    std::fill(G.begin(), G.end(), 0.0);
    double em = 1.0;  // a^m / m!
    for (int m = 0; m <= kPhiPolyDegree; ++m) {
      if (m > 0) {
        em *= a / m;
        if (em == 0.0) break;
      }
      for (int c = 0; c + m <= kPhiPolyDegree; ++c)
        if (F[c] != 0.0) G[c + m] += em * F[c];
    }
    // shift by the gamma power, then integrate term by term
    std::fill(F.begin(), F.end(), 0.0);
    for (int c = 0; c <= kPhiPolyDegree; ++c) {
      const int t = c + ps[jj] + 1;
      if (t <= kPhiPolyDegree && G[c] != 0.0) F[t] = G[c] / t;
    }
  }
  double v = 0.0;
  for (int c = kPhiPolyDegree; c >= 0; --c) v = v * g + F[c];
  return v * std::pow(dt, static_cast<double>(n));
}

// Exact zero-k branch for the outer level: drops it and boosts the exponent
// of the next level.
inline double phi_zero_outer(int q, std::span<const double> kr, std::span<const int> pr,
                             double dt, double g, double inner) {
  std::vector<int> pm(pr.begin(), pr.end());
  pm[0] = q + pr[0] + 1;
  const double merged = phi_interval(kr, pm, dt, g);
  return dt / (q + 1) * (std::pow(g, q + 1) * inner - merged);
}

// Stability fallback: nested spectral integration of all remaining levels on
// the single interval. Used only where the peel recursion would amplify
// rounding (large outer exponent together with a positive gamma power).
inline double phi_cheb_pipeline(std::span<const double> ks, std::span<const int> ps, double dt,
                                double g) {
  const std::size_t n = ks.size();
  ChebSeries inner;  // starts as the constant 1
  inner.a = 0.0;
  inner.b = g;
  inner.coef = {1.0};
  for (std::size_t jj = n; jj-- > 0;) {
    const double a = ks[jj] * dt;
    const int p = ps[jj];
    const ChebSeries prev = inner;
    ChebSeries fit = ChebSeries::fit(
        [&](double s) { return std::pow(s, p) * std::exp(a * s) * prev.eval(s); }, 0.0, g,
        1e-15);
    inner = fit.antiderivative();
  }
  return inner.eval(g) * std::pow(dt, static_cast<double>(n));
}

/// n-fold phi_{T_i,t} with levels outermost-first: specs (k_j, p_j) stored at
/// indices 0..n-1, dt the full interval width, g = gamma_i(t) in [0, 1].
///
/// The paper's three-case peel recursion is used where it is well
/// conditioned; regimes in which it would divide away significant digits
/// route to series evaluation (the n-fold analogue of expanding
/// (e^{k dt} - 1)/k for small k) or to the spectral fallback.
inline double phi_interval(std::span<const double> ks, std::span<const int> ps, double dt,
                           double g) {
  const std::size_t n = ks.size();
  if (n == 0 || ps.size() != n) throw std::invalid_argument("phi_interval: bad spec");
  if (g == 0.0) return 0.0;
  if (n == 1) return dt * poly_exp_integral(ks[0] * dt, ps[0], g);

  double amax = 0.0, asum = 0.0;
  for (double k : ks) {
    const double a = std::abs(k) * dt * g;
    amax = std::max(amax, a);
    asum += a;
  }
  if (amax <= 2.0 && asum <= 6.0) return phi_poly_dp(ks, ps, dt, g);

  const double k = ks[0];
  const int p = ps[0];
  std::span<const double> kr = ks.subspan(1);
  std::span<const int> pr = ps.subspan(1);

  if (std::abs(k) * dt * g <= 2.0) {
    // Outer exponential expanded in series; each term uses the exact
    // zero-k reduction. Exact at k = 0, stable for small |k dt g|.
    const double inner = phi_interval(kr, pr, dt, g);
    const double a = k * dt;
    double acc = 0.0, am = 1.0;
    for (int m = 0; m <= 64; ++m) {
      if (m > 0) am *= a / m;
      const double term = am * phi_zero_outer(p + m, kr, pr, dt, g, inner);
      acc += term;
      if (m >= 2 && std::abs(term) <= 1e-17 * std::abs(acc)) break;
      if (am == 0.0) break;
    }
    return acc;
  }

  if (p == 0) {
    // Large |k dt g|, zero gamma power: the paper's peel is well conditioned.
    const double inner = phi_interval(kr, pr, dt, g);
    std::vector<double> km(kr.begin(), kr.end());
    std::vector<int> pm(pr.begin(), pr.end());
    km[0] = k + kr[0];
    const double merged = phi_interval(km, pm, dt, g);
    return (std::exp(k * dt * g) * inner - merged) / k;
  }

  // Large exponent with p >= 1: the descending-p peel multiplies rounding by
  // p/|k dt| per step, so integrate spectrally instead.
  return phi_cheb_pipeline(ks, ps, dt, g);
}

/// All-p-zero phi of the outer `m` levels starting at `off`.
inline double phi_outer(std::span<const double> ks, std::size_t off, std::size_t m, double dt,
                        double g) {
  std::vector<int> ps(m, 0);
  return phi_interval(ks.subspan(off, m), ps, dt, g);
}

}  // namespace detail

/// Committed values of one key at a grid date: omega[d] is the operator of
/// the deepest d pairs (omega[0] = 1), kint[j] = int_0^{T_i} k_j for the
/// level at position j (outermost-first). The e-factors of any contiguous
/// outer run of levels are exponentials of partial sums of kint.
struct KeyFrontier {
  std::vector<double> omega;  // size depth + 1
  std::vector<double> kint;   // size depth

  static KeyFrontier initial(std::size_t depth) {
    KeyFrontier f;
    f.omega.assign(depth + 1, 0.0);
    f.omega[0] = 1.0;
    f.kint.assign(depth, 0.0);
    return f;
  }
  std::size_t depth() const { return kint.size(); }
};

namespace detail {

/// One-interval advance: from values at T_i to values at T_i + gamma * dt,
/// with per-interval scalars k, l (outermost-first, full key depth).
inline KeyFrontier advance_frontier(const KeyFrontier& in, std::span<const double> k,
                                    std::span<const double> l, double dt, double gamma = 1.0) {
  const std::size_t n = in.depth();
  if (k.size() != n || l.size() != n) throw std::invalid_argument("advance_frontier: size mismatch");
  KeyFrontier out;
  out.omega.assign(n + 1, 0.0);
  out.omega[0] = 1.0;
  out.kint.resize(n);
  for (std::size_t j = 0; j < n; ++j) out.kint[j] = in.kint[j] + k[j] * dt * gamma;

  for (std::size_t d = 1; d <= n; ++d) {
    const std::size_t off = n - d;  // suffix of depth d starts here
    double acc = in.omega[d];       // m = 1 term
    double lprod = 1.0, ksum = 0.0;
    for (std::size_t m = 2; m <= d + 1; ++m) {
      lprod *= l[off + m - 2];
      ksum += in.kint[off + m - 2];
      acc += in.omega[d - m + 1] * lprod * std::exp(ksum) *
             detail::phi_outer(k, off, m - 1, dt, gamma);
    }
    out.omega[d] = acc;
  }
  return out;
}

}  // namespace detail

/// e_t^{(k_n,...,k_1)} = exp of the exact piecewise integral of sum_j k_j.
inline double e_factor(double t, std::span<const PiecewiseCurve> ks) {
  double s = 0.0;
  for (const auto& k : ks) s += integrate_curve(k, 0.0, t);
  return std::exp(s);
}

/// One-shot evaluation of omega_T for a key; no shared state, safe to call
/// concurrently. T may fall inside a grid interval.
inline double omega_value(const OperatorKey& key, double T) {
  const MaturityGrid& g = key.grid();
  if (T < 0.0 || T > g.horizon()) throw std::out_of_range("omega_value: T outside grid");
  const std::size_t n = key.depth();
  KeyFrontier f = KeyFrontier::initial(n);
  std::vector<double> k(n), l(n);
  for (std::size_t i = 0; i < g.intervals() && g.time(i) < T; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      k[j] = key.pairs[j].first.value(i);
      l[j] = key.pairs[j].second.value(i);
    }
    const double gamma = std::min(1.0, (T - g.time(i)) / g.dt(i));
    f = detail::advance_frontier(f, k, l, g.dt(i), gamma);
  }
  return f.omega[n];
}

struct QuadratureResult {
  double value = 0.0;
  bool accurate = true;
};

/// Independent oracle: evaluates the iterated integral by nested adaptive
/// Chebyshev quadrature, splitting at grid dates where integrands kink.
inline QuadratureResult quadrature_reference(const OperatorKey& key, double T,
                                             double tol = 1e-11) {
  const MaturityGrid& g = key.grid();
  if (T < 0.0 || T > g.horizon()) throw std::out_of_range("quadrature_reference: T outside grid");
  if (T == 0.0) return {0.0, true};
  std::vector<double> breaks;
  for (double t : g.times())
    if (t < T) breaks.push_back(t);
  breaks.push_back(T);

  bool accurate = true;
  std::optional<PiecewiseCheb> inner;
  for (std::size_t j = key.depth(); j-- > 0;) {
    const PiecewiseCurve& kc = key.pairs[j].first;
    const PiecewiseCurve& lc = key.pairs[j].second;
    auto integrand = [&](double u) {
      const double base = lc.eval(u) * std::exp(integrate_curve(kc, 0.0, u));
      return inner ? base * inner->eval(u) : base;
    };
    PiecewiseCheb fit = PiecewiseCheb::from_function(breaks, integrand, 0.01 * tol);
    accurate = accurate && fit.converged();
    inner = fit.cumulative();
  }
  return {inner->eval(T), accurate};
}

/// Append-only cache of operator values at committed grid dates. A single
/// writer advances and commits; committed frontiers never change, so readers
/// may price off them concurrently. Scratch advances (candidate parameter
/// values during calibration) leave the committed state untouched.
class OperatorState {
 public:
  explicit OperatorState(MaturityGrid grid)
      : grid_(std::move(grid)), advance_count_(grid_.intervals(), 0) {}

  const MaturityGrid& grid() const { return grid_; }

  /// Register a key shape of the given depth; values are supplied per advance.
  int register_shape(std::size_t depth) {
    if (depth == 0 || depth > kMaxFoldDepth)
      throw std::invalid_argument("OperatorState: fold depth must be in [1, 5]");
    entries_.push_back(Entry{std::nullopt, {KeyFrontier::initial(depth)}});
    return static_cast<int>(entries_.size() - 1);
  }

  /// Register a concrete key (content-memoized).
  int register_key(const OperatorKey& key) {
    if (key.grid() != grid_) throw std::invalid_argument("OperatorState: key grid mismatch");
    const std::string id = key.canonical();
    if (auto it = by_canonical_.find(id); it != by_canonical_.end()) return it->second;
    entries_.push_back(Entry{key, {KeyFrontier::initial(key.depth())}});
    const int h = static_cast<int>(entries_.size() - 1);
    by_canonical_.emplace(id, h);
    return h;
  }

  std::size_t committed(int h) const { return entry(h).history.size() - 1; }

  const KeyFrontier& frontier_at(int h, std::size_t grid_index) const {
    const Entry& e = entry(h);
    if (grid_index >= e.history.size())
      throw std::logic_error("OperatorState: grid date not committed yet");
    return e.history[grid_index];
  }

  /// Scratch advance of the frontier interval with explicit per-interval
  /// values; committed data is not modified.
  KeyFrontier staged_advance(int h, std::span<const double> k, std::span<const double> l,
                             double gamma = 1.0) const {
    const Entry& e = entry(h);
    const std::size_t i = e.history.size() - 1;
    if (i >= grid_.intervals()) throw std::logic_error("OperatorState: past final grid date");
    ++advance_count_[i];
    return detail::advance_frontier(e.history.back(), k, l, grid_.dt(i), gamma);
  }

  void commit(int h, KeyFrontier f) {
    Entry& e = entry(h);
    if (f.depth() != e.history.back().depth())
      throw std::invalid_argument("OperatorState: commit depth mismatch");
    e.history.push_back(std::move(f));
  }

  /// Advance one committed interval using the registered key's own curves.
  double advance_from_curves(int h) {
    Entry& e = entry(h);
    if (!e.key) throw std::logic_error("OperatorState: shape-only key has no curves");
    const std::size_t i = e.history.size() - 1;
    const std::size_t n = e.key->depth();
    std::vector<double> k(n), l(n);
    for (std::size_t j = 0; j < n; ++j) {
      k[j] = e.key->pairs[j].first.value(i);
      l[j] = e.key->pairs[j].second.value(i);
    }
    commit(h, staged_advance(h, k, l));
    return e.history.back().omega[n];
  }

  /// omega_{T_{i+1}} for the key, computed from the cached T_i values.
  /// Already-committed intervals return the cached value unchanged.
  double omega_advance(const OperatorKey& key, std::size_t i) {
    const int h = register_key(key);
    const Entry& e = entry(h);
    if (i >= grid_.intervals()) throw std::out_of_range("omega_advance: interval out of range");
    if (i + 1 < e.history.size()) return e.history[i + 1].omega[key.depth()];
    if (i >= e.history.size())
      throw std::logic_error("omega_advance: prerequisite grid date not committed");
    return advance_from_curves(h);
  }

  /// omega at time t, folding committed advances up to the enclosing grid
  /// date and finishing with a scratch partial advance if t is interior.
  double omega_at(const OperatorKey& key, double t) {
    if (t < 0.0 || t > grid_.horizon()) throw std::out_of_range("omega_at: time outside grid");
    const int h = register_key(key);
    if (t == 0.0) return 0.0;
    const std::size_t n = key.depth();
    const auto& times = grid_.times();
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (times[j] == t) {  // grid date: fold committed advances up to it
        while (committed(h) < j) advance_from_curves(h);
        return entry(h).history[j].omega[n];
      }
    }
    // Interior t: commit full intervals below it, then scratch-advance from
    // the frontier of the interval containing t.
    const std::size_t i = grid_.interval_of(t);
    while (committed(h) < i) advance_from_curves(h);
    std::vector<double> k(n), l(n);
    for (std::size_t j = 0; j < n; ++j) {
      k[j] = key.pairs[j].first.value(i);
      l[j] = key.pairs[j].second.value(i);
    }
    const double gamma = (t - grid_.time(i)) / grid_.dt(i);
    ++advance_count_[i];
    return detail::advance_frontier(frontier_at(h, i), k, l, grid_.dt(i), gamma).omega[n];
  }

  /// Discard all state committed beyond grid index `to` (histories keep
  /// entries for T_0..T_to).
  void rollback(std::size_t to) {
    for (Entry& e : entries_)
      if (e.history.size() > to + 1) e.history.resize(to + 1);
  }

  const std::vector<std::uint64_t>& advance_counts() const { return advance_count_; }
  void reset_advance_counts() { advance_count_.assign(grid_.intervals(), 0); }

 private:
  struct Entry {
    std::optional<OperatorKey> key;
    std::vector<KeyFrontier> history;  // history[j] = frontier at T_j
  };

  const Entry& entry(int h) const {
    if (h < 0 || static_cast<std::size_t>(h) >= entries_.size())
      throw std::out_of_range("OperatorState: bad key handle");
    return entries_[static_cast<std::size_t>(h)];
  }
  Entry& entry(int h) {
    return const_cast<Entry&>(static_cast<const OperatorState*>(this)->entry(h));
  }

  MaturityGrid grid_;
  std::vector<Entry> entries_;
  std::map<std::string, int> by_canonical_;
  mutable std::vector<std::uint64_t> advance_count_;
};

}  // namespace svol
