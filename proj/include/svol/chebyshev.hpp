// Piecewise Chebyshev representation of smooth-per-interval functions.
// This is the quadrature backend used by the oracle paths: integrands built
// from piecewise-constant parameters are analytic between grid dates, so a
// Chebyshev fit per interval converges spectrally and cumulative integrals
// come straight out of the series coefficients.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace svol {

/// Chebyshev series on [a, b]: f(x) = sum_j c_j T_j(u), u = (2x - a - b)/(b - a).
struct ChebSeries {
  double a = 0.0, b = 1.0;
  std::vector<double> coef{0.0};
  bool converged = true;

  double eval(double x) const {
    const double u = (2.0 * x - a - b) / (b - a);
    double b1 = 0.0, b2 = 0.0;
    for (std::size_t j = coef.size(); j-- > 1;) {
      const double t = 2.0 * u * b1 - b2 + coef[j];
      b2 = b1;
      b1 = t;
    }
    return u * b1 - b2 + coef[0];
  }

  /// Antiderivative series vanishing at x = a.
  ChebSeries antiderivative() const {
    const std::size_t n = coef.size();
    const double s = 0.5 * (b - a);  // dx/du
    ChebSeries out;
    out.a = a;
    out.b = b;
    out.converged = converged;
    out.coef.assign(n + 2, 0.0);
    auto c = [&](std::size_t j) { return j < n ? coef[j] : 0.0; };
    out.coef[1] = s * (c(0) - 0.5 * c(2));
    for (std::size_t m = 2; m <= n; ++m)
      out.coef[m] = s * (c(m - 1) - c(m + 1)) / (2.0 * static_cast<double>(m));
    double at_a = 0.0;  // value at u = -1 before fixing the constant term
    for (std::size_t m = 1; m < out.coef.size(); ++m)
      at_a += (m % 2 == 0 ? out.coef[m] : -out.coef[m]);
    out.coef[0] = -at_a;
    return out;
  }

  /// Fit f on [a, b] by adaptive degree doubling until the coefficient tail
  /// drops below tol relative to the largest coefficient.
  static ChebSeries fit(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-13, std::size_t max_degree = 1024) {
    ChebSeries best;
    best.a = a;
    best.b = b;
    for (std::size_t n = 16; n <= max_degree; n *= 2) {
      std::vector<double> fv(n);
      for (std::size_t k = 0; k < n; ++k) {
        const double u = std::cos(M_PI * (static_cast<double>(k) + 0.5) / static_cast<double>(n));
        fv[k] = f(a + 0.5 * (u + 1.0) * (b - a));
      }
      std::vector<double> c(n, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k)
          s += fv[k] * std::cos(static_cast<double>(j) * M_PI *
                                (static_cast<double>(k) + 0.5) / static_cast<double>(n));
        c[j] = (j == 0 ? 1.0 : 2.0) * s / static_cast<double>(n);
      }
      double scale = 0.0;
      for (double v : c) scale = std::max(scale, std::abs(v));
      const double tail = std::max(std::abs(c[n - 1]), std::abs(c[n - 2]));
      best.coef = std::move(c);
      best.converged = (scale == 0.0) || tail <= tol * std::max(scale, 1e-300);
      if (best.converged) break;
    }
    return best;
  }
};

/// Function represented piecewise by Chebyshev series between breakpoints.
class PiecewiseCheb {
 public:
  PiecewiseCheb() = default;

  static PiecewiseCheb from_function(const std::vector<double>& breaks,
                                     const std::function<double(double)>& f,
                                     double tol = 1e-13) {
    if (breaks.size() < 2) throw std::invalid_argument("PiecewiseCheb: need >= 2 breakpoints");
    PiecewiseCheb out;
    out.breaks_ = breaks;
    out.pieces_.reserve(breaks.size() - 1);
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i)
      out.pieces_.push_back(ChebSeries::fit(f, breaks[i], breaks[i + 1], tol));
    return out;
  }

  double eval(double x) const {
    const std::size_t i = piece_of(x);
    return pieces_[i].eval(x);
  }

  /// Cumulative integral from the first breakpoint, as a PiecewiseCheb.
  PiecewiseCheb cumulative() const {
    PiecewiseCheb out;
    out.breaks_ = breaks_;
    out.pieces_.reserve(pieces_.size());
    double running = 0.0;
    for (const auto& p : pieces_) {
      ChebSeries q = p.antiderivative();
      q.coef[0] += running;
      running = q.eval(q.b);
      out.pieces_.push_back(std::move(q));
    }
    return out;
  }

  /// Total integral over the full breakpoint range.
  double integral() const {
    double sum = 0.0;
    for (const auto& p : pieces_) {
      ChebSeries q = p.antiderivative();
      sum += q.eval(q.b);
    }
    return sum;
  }

  bool converged() const {
    for (const auto& p : pieces_)
      if (!p.converged) return false;
    return true;
  }

  const std::vector<double>& breaks() const { return breaks_; }

 private:
  std::size_t piece_of(double x) const {
    if (x < breaks_.front() || x > breaks_.back())
      throw std::out_of_range("PiecewiseCheb: point outside range");
    std::size_t i = 0;
    while (i + 2 < breaks_.size() && x >= breaks_[i + 1]) ++i;
    return i;
  }

  std::vector<double> breaks_;
  std::vector<ChebSeries> pieces_;
};

}  // namespace svol
