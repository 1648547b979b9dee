// Term structures, market state and option specifications shared by the
// whole library. Parameters are piecewise-constant on a maturity grid;
// integrals of such curves are exact sums, which keeps every downstream
// formula closed-form.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace svol {

// Thrown when a model-level precondition is violated (e.g. pricing a GARCH
// diffusion with nonzero correlation). The CLI maps this to exit code 3.
class ModelPreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when an iterative numerical routine fails to converge.
// The CLI maps this to exit code 4.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered maturity dates {0 = T_0 < T_1 < ... < T_N = horizon}.
class MaturityGrid {
 public:
  MaturityGrid() = default;

  explicit MaturityGrid(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2) throw std::invalid_argument("MaturityGrid: need at least two dates");
    if (times_.front() != 0.0) throw std::invalid_argument("MaturityGrid: first date must be 0");
    for (std::size_t i = 0; i + 1 < times_.size(); ++i)
      if (!(times_[i] < times_[i + 1]))
        throw std::invalid_argument("MaturityGrid: dates must be strictly increasing");
  }

  const std::vector<double>& times() const { return times_; }
  std::size_t intervals() const { return times_.size() - 1; }
  double horizon() const { return times_.back(); }
  double time(std::size_t i) const { return times_.at(i); }
  double dt(std::size_t i) const { return times_.at(i + 1) - times_.at(i); }

  /// Index i such that t lies in [T_i, T_{i+1}); t = horizon maps to the last interval.
  std::size_t interval_of(double t) const {
    if (t < 0.0 || t > horizon()) throw std::out_of_range("MaturityGrid: time outside [0, horizon]");
    if (t == horizon()) return intervals() - 1;
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    return static_cast<std::size_t>(it - times_.begin()) - 1;
  }

  bool operator==(const MaturityGrid& o) const { return times_ == o.times_; }
  bool operator!=(const MaturityGrid& o) const { return !(*this == o); }

 private:
  std::vector<double> times_{0.0, 1.0};
};

/// Deterministic piecewise-constant function of time: value v_i on [T_i, T_{i+1}).
class PiecewiseCurve {
 public:
  PiecewiseCurve() = default;

  PiecewiseCurve(MaturityGrid grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.intervals())
      throw std::invalid_argument("PiecewiseCurve: one value per grid interval required");
  }

  /// Constant curve on the given grid.
  PiecewiseCurve(MaturityGrid grid, double value)
      : PiecewiseCurve(std::move(grid), std::vector<double>(grid.intervals(), value)) {}

  const MaturityGrid& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  double value(std::size_t i) const { return values_.at(i); }

  double eval(double t) const { return values_[grid_.interval_of(t)]; }

  bool positive() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v > 0.0; });
  }

 private:
  MaturityGrid grid_;
  std::vector<double> values_;
};

/// Exact integral of a piecewise-constant curve over [a, b].
inline double integrate_curve(const PiecewiseCurve& c, double a, double b) {
  const auto& t = c.grid().times();
  if (a < 0.0 || b > c.grid().horizon() || a > b)
    throw std::out_of_range("integrate_curve: bounds outside [0, horizon] or a > b");
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    const double lo = std::max(a, t[i]);
    const double hi = std::min(b, t[i + 1]);
    if (hi > lo) sum += c.value(i) * (hi - lo);
  }
  return sum;
}

/// e^{-int_0^T c_t dt}; with c a short-rate curve this is the discount factor.
inline double discount_factor(const PiecewiseCurve& c, double T) {
  return std::exp(-integrate_curve(c, 0.0, T));
}

enum class Model { Heston, Garch };

inline std::string to_string(Model m) { return m == Model::Heston ? "heston" : "garch"; }

/// Full parameter term structure of one variance model on a common grid.
struct ModelParams {
  Model model = Model::Heston;
  PiecewiseCurve kappa, theta, lambda, rho;
  double v0 = 0.0;

  void validate() const {
    const MaturityGrid& g = kappa.grid();
    if (theta.grid() != g || lambda.grid() != g || rho.grid() != g)
      throw std::invalid_argument("ModelParams: curves must share one grid");
    if (!(v0 > 0.0)) throw std::invalid_argument("ModelParams: v0 must be positive");
    if (!kappa.positive() || !theta.positive())
      throw std::invalid_argument("ModelParams: kappa and theta must be strictly positive");
    // lambda = 0 is admitted as the deterministic-variance degenerate case
    for (double l : lambda.values())
      if (l < 0.0) throw std::invalid_argument("ModelParams: lambda must be nonnegative");
    for (double r : rho.values())
      if (r < -1.0 || r > 1.0) throw std::invalid_argument("ModelParams: rho must lie in [-1, 1]");
  }

  const MaturityGrid& grid() const { return kappa.grid(); }
  double horizon() const { return grid().horizon(); }

  bool rho_is_zero() const {
    return std::all_of(rho.values().begin(), rho.values().end(),
                       [](double r) { return r == 0.0; });
  }
};

/// Spot level plus deterministic domestic/foreign short-rate curves.
struct MarketState {
  double spot = 0.0;
  PiecewiseCurve rd, rf;

  void validate() const {
    if (!(spot > 0.0)) throw std::invalid_argument("MarketState: spot must be positive");
  }
};

enum class OptionKind { Put, Call };

struct OptionSpec {
  double strike = 0.0;
  double maturity = 0.0;
  OptionKind kind = OptionKind::Put;

  void validate() const {
    if (!(strike > 0.0)) throw std::invalid_argument("OptionSpec: strike must be positive");
    if (!(maturity > 0.0)) throw std::invalid_argument("OptionSpec: maturity must be positive");
  }
};

namespace detail {

inline MaturityGrid truncate_grid(const MaturityGrid& g, double T) {
  std::vector<double> times;
  for (double t : g.times()) {
    if (t < T) times.push_back(t);
  }
  times.push_back(T);
  return MaturityGrid(std::move(times));
}

inline PiecewiseCurve truncate_curve(const PiecewiseCurve& c, const MaturityGrid& g) {
  std::vector<double> values(g.intervals());
  for (std::size_t i = 0; i < g.intervals(); ++i) values[i] = c.eval(g.time(i));
  return PiecewiseCurve(g, std::move(values));
}

}  // namespace detail

/// Truncate the parameter grid at T; an interval containing T is split and
/// keeps its value, so eval agrees with the original on [0, T].
inline ModelParams restrict_params(const ModelParams& p, double T) {
  if (!(T > 0.0)) throw std::out_of_range("restrict_params: T must be positive");
  if (T > p.horizon()) throw std::out_of_range("restrict_params: T beyond grid horizon");
  if (T == p.horizon()) return p;
  MaturityGrid g = detail::truncate_grid(p.grid(), T);
  ModelParams out;
  out.model = p.model;
  out.v0 = p.v0;
  out.kappa = detail::truncate_curve(p.kappa, g);
  out.theta = detail::truncate_curve(p.theta, g);
  out.lambda = detail::truncate_curve(p.lambda, g);
  out.rho = detail::truncate_curve(p.rho, g);
  return out;
}

/// Same truncation for a standalone curve (rate curves at option maturity).
inline PiecewiseCurve restrict_curve(const PiecewiseCurve& c, double T) {
  if (!(T > 0.0)) throw std::out_of_range("restrict_curve: T must be positive");
  if (T > c.grid().horizon()) throw std::out_of_range("restrict_curve: T beyond grid horizon");
  if (T == c.grid().horizon()) return c;
  MaturityGrid g = detail::truncate_grid(c.grid(), T);
  return detail::truncate_curve(c, g);
}

/// Map interval values of one or more curves through a function; the result
/// lives on the same grid. Used to build derived curves such as kappa*theta.
template <typename F>
PiecewiseCurve curve_transform(const PiecewiseCurve& a, F&& f) {
  std::vector<double> v(a.grid().intervals());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(a.value(i));
  return PiecewiseCurve(a.grid(), std::move(v));
}

template <typename F>
PiecewiseCurve curve_transform(const PiecewiseCurve& a, const PiecewiseCurve& b, F&& f) {
  if (a.grid() != b.grid()) throw std::invalid_argument("curve_transform: grid mismatch");
  std::vector<double> v(a.grid().intervals());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(a.value(i), b.value(i));
  return PiecewiseCurve(a.grid(), std::move(v));
}

}  // namespace svol
