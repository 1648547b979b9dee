// Monte Carlo verification oracle: variance-path simulation for the CIR and
// IGa processes, direct joint simulation of spot and variance, and the
// variance-reduced conditional estimator that averages the Black-Scholes
// kernel over volatility paths.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "svol/blackscholes.hpp"
#include "svol/core.hpp"
#include "svol/moments.hpp"
#include "svol/rng.hpp"

namespace svol {

enum class MCScheme { Auto, FullTruncationEuler, IGaExplicit };

struct MCConfig {
  std::size_t paths = 200000;
  int stepsPerDay = 0;  // 0: 24 for T <= 3/12, 8 beyond (desk default)
  std::uint64_t seed = 12345;
  MCScheme scheme = MCScheme::Auto;
  bool antithetic = false;
  int threads = 0;  // 0: hardware concurrency

  int steps_per_day_for(double T) const {
    if (stepsPerDay > 0) return stepsPerDay;
    return T <= 0.25 + 1e-12 ? 24 : 8;
  }
  void validate() const {
    if (paths < 2) throw std::invalid_argument("MCConfig: need at least 2 paths");
    if (stepsPerDay < 0) throw std::invalid_argument("MCConfig: stepsPerDay must be >= 0");
  }
};

struct MCEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t paths = 0;
};

/// Terminal statistics of one simulated variance path. Grid values are the
/// process sampled at the maturity-grid dates (not every step).
struct VariancePathStats {
  double v_end = 0.0;
  double int_v = 0.0;           // int_0^T V dt
  double int_v_1mrho2 = 0.0;    // int_0^T V (1 - rho^2) dt
  double int_rho_sqrtv_db = 0.0;  // int_0^T rho sqrt(V) dB (Ito, left point)
  double int_rho2_v = 0.0;      // int_0^T rho^2 V dt
  std::uint32_t truncations = 0;

  double log_xi() const { return int_rho_sqrtv_db - 0.5 * int_rho2_v; }
};

struct VarianceEnsemble {
  std::vector<VariancePathStats> paths;
  std::vector<double> grid_values;  // row-major paths x grid dates, optional
  std::size_t grid_cols = 0;
};

namespace detail {

struct StepPlan {
  std::vector<double> dt;          // per step
  std::vector<std::size_t> ivl;    // grid interval index per step
  std::vector<std::size_t> grid_mark;  // steps after which a grid date is hit
};

inline StepPlan make_step_plan(const MaturityGrid& g, double T, int steps_per_day) {
  StepPlan plan;
  for (std::size_t i = 0; i < g.intervals() && g.time(i) < T; ++i) {
    const double a = g.time(i);
    const double b = std::min(g.time(i + 1), T);
    const double len = b - a;
    const auto n = static_cast<std::size_t>(
        std::max(1.0, std::ceil(len * 365.0 * steps_per_day)));
    for (std::size_t s = 0; s < n; ++s) {
      plan.dt.push_back(len / static_cast<double>(n));
      plan.ivl.push_back(i);
    }
    plan.grid_mark.push_back(plan.dt.size());
  }
  return plan;
}

/// Deterministic parallel for over path blocks: each worker claims blocks by
/// atomic counter but writes only to its own index range, so the result is
/// independent of scheduling.
template <typename Body>
void parallel_paths(std::size_t paths, int threads, Body&& body) {
  const std::size_t block = 8192;
  const std::size_t nblocks = (paths + block - 1) / block;
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const unsigned nthreads =
      threads > 0 ? static_cast<unsigned>(threads) : std::min<unsigned>(hw, 8);
  if (nthreads <= 1 || nblocks <= 1) {
    for (std::size_t p = 0; p < paths; ++p) body(p);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= nblocks) break;
      const std::size_t lo = b * block, hi = std::min(paths, lo + block);
      for (std::size_t p = lo; p < hi; ++p) body(p);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

/// Sum of a per-path vector in fixed pairwise block order (scheduling
/// independent and better conditioned than a running sum).
inline double block_sum(const std::vector<double>& v) {
  const std::size_t block = 4096;
  double total = 0.0;
  for (std::size_t lo = 0; lo < v.size(); lo += block) {
    const std::size_t hi = std::min(v.size(), lo + block);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    total += s;
  }
  return total;
}

inline MCEstimate estimate_from(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  const double mean = block_sum(v) / n;
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
  const double var = block_sum(sq) / (n - 1.0);
  return {mean, std::sqrt(var / n), v.size()};
}

struct PathContext {
  const VarianceLaw& law;
  const PiecewiseCurve& rho;
  const StepPlan& plan;
  MCScheme scheme;
  std::uint64_t seed;
  bool antithetic;
  std::size_t paths;

  /// Simulate one variance path; z2 per step is handed to `spot` for the
  /// orthogonal spot noise (ignored for variance-only runs). `on_grid` is
  /// called at each maturity-grid date with the current variance.
  template <typename SpotStep, typename GridHook>
  VariancePathStats run(std::size_t pidx, SpotStep&& spot, GridHook&& on_grid) const {
    const bool mirror = antithetic && pidx >= (paths + 1) / 2;
    const std::uint64_t stream = mirror ? pidx - (paths + 1) / 2 : pidx;
    const PiecewiseCurve& kap = law.kappa;
    const PiecewiseCurve kt = law.kappa_theta();
    const PiecewiseCurve& lam = law.lambda;

    VariancePathStats st;
    const bool iga_explicit =
        law.family == VarFamily::IGa && scheme != MCScheme::FullTruncationEuler;
    double v = law.v0;
    double log_y = 0.0, y = 1.0;  // IGa explicit: homogeneous GBM factor
    double kt_over_y = 0.0;       // IGa explicit: int_0^t kappa theta / Y

    std::size_t next_mark = 0;
    for (std::size_t s = 0; s < plan.dt.size(); ++s) {
      const double dt = plan.dt[s];
      const std::size_t i = plan.ivl[s];
      const double k = kap.value(i), drift = kt.value(i), l = lam.value(i), r = rho.value(i);
      NormalPair z = normals_at(seed, stream, s);
      if (mirror) {
        z.z1 = -z.z1;
        z.z2 = -z.z2;
      }
      const double sdt = std::sqrt(dt);
      const double db = sdt * z.z1;

      const double v_prev = std::max(v, 0.0);
      double v_next;
      if (iga_explicit) {
        // V = Y (v0 + int kappa theta / Y), Y a GBM(1; -kappa, lambda)
        log_y += (-k - 0.5 * l * l) * dt + l * db;
        const double y_next = std::exp(log_y);
        kt_over_y += 0.5 * drift * (1.0 / y + 1.0 / y_next) * dt;
        y = y_next;
        v_next = y * (law.v0 + kt_over_y);
      } else {
        // full-truncation Euler: drift and diffusion read off max(V, 0)
        v_next = v + (drift - k * v_prev) * dt +
                 (law.family == VarFamily::CIR ? l * std::sqrt(v_prev) : l * v_prev) * db;
        if (v_next < 0.0) ++st.truncations;
      }

      const double v_next_pos = std::max(v_next, 0.0);
      st.int_v += 0.5 * (v_prev + v_next_pos) * dt;
      st.int_v_1mrho2 += (1.0 - r * r) * 0.5 * (v_prev + v_next_pos) * dt;
      st.int_rho2_v += r * r * 0.5 * (v_prev + v_next_pos) * dt;
      st.int_rho_sqrtv_db += r * std::sqrt(v_prev) * db;

      spot(s, i, dt, v_prev, z, db);
      v = v_next;
      while (next_mark < plan.grid_mark.size() && plan.grid_mark[next_mark] == s + 1) {
        on_grid(std::max(v, 0.0));
        ++next_mark;
      }
    }
    st.v_end = std::max(v, 0.0);
    return st;
  }
};

}  // namespace detail

/// Simulate variance paths to time T. The returned ensemble holds terminal
/// accumulators per path and, when record_grid is set, the process sampled
/// at the maturity-grid dates.
inline VarianceEnsemble simulate_variance(const VarianceLaw& law, const PiecewiseCurve& rho,
                                          const MCConfig& cfg, double T,
                                          bool record_grid = false) {
  cfg.validate();
  law.validate();
  if (T <= 0.0 || T > law.horizon())
    throw std::out_of_range("simulate_variance: T outside (0, horizon]");
  if (law.family == VarFamily::CIR && cfg.scheme == MCScheme::IGaExplicit)
    throw std::invalid_argument("simulate_variance: IGaExplicit scheme requires an IGa law");

  const detail::StepPlan plan = detail::make_step_plan(law.grid(), T, cfg.steps_per_day_for(T));
  detail::PathContext ctx{law, rho, plan, cfg.scheme, cfg.seed, cfg.antithetic, cfg.paths};

  VarianceEnsemble out;
  out.paths.resize(cfg.paths);
  out.grid_cols = record_grid ? plan.grid_mark.size() : 0;
  if (record_grid) out.grid_values.assign(cfg.paths * out.grid_cols, 0.0);

  detail::parallel_paths(cfg.paths, cfg.threads, [&](std::size_t p) {
    std::size_t col = 0;
    auto on_grid = [&](double v) {
      if (record_grid) out.grid_values[p * out.grid_cols + col] = v;
      ++col;
    };
    out.paths[p] = ctx.run(
        p, [](std::size_t, std::size_t, double, double, const NormalPair&, double) {}, on_grid);
  });
  return out;
}

inline VarianceEnsemble simulate_variance(const VarianceLaw& law, const MCConfig& cfg, double T,
                                          bool record_grid = false) {
  return simulate_variance(law, PiecewiseCurve(law.grid(), 0.0), cfg, T, record_grid);
}

namespace detail {

inline VarianceLaw law_of(const ModelParams& params) {
  VarianceLaw law;
  law.family = params.model == Model::Heston ? VarFamily::CIR : VarFamily::IGa;
  law.v0 = params.v0;
  law.kappa = params.kappa;
  law.theta = params.theta;
  law.lambda = params.lambda;
  return law;
}

}  // namespace detail

/// Conditional (mixing) Monte Carlo price: averages the Black-Scholes kernel
/// over volatility paths. The low-variance estimator of record.
inline MCEstimate mixing_mc_price(const MarketState& market, const ModelParams& params,
                                  const OptionSpec& opt, const MCConfig& cfg) {
  market.validate();
  params.validate();
  opt.validate();
  const ModelParams rp = restrict_params(params, opt.maturity);
  const VarianceLaw law = detail::law_of(rp);
  const detail::StepPlan plan =
      detail::make_step_plan(rp.grid(), opt.maturity, cfg.steps_per_day_for(opt.maturity));
  detail::PathContext ctx{law, rp.rho, plan, cfg.scheme, cfg.seed, cfg.antithetic, cfg.paths};

  BsPoint base;
  base.strike = opt.strike;
  base.maturity = opt.maturity;
  base.rdInt = integrate_curve(market.rd, 0.0, opt.maturity);
  base.rfInt = integrate_curve(market.rf, 0.0, opt.maturity);

  std::vector<double> vals(cfg.paths);
  detail::parallel_paths(cfg.paths, cfg.threads, [&](std::size_t p) {
    const VariancePathStats st = ctx.run(
        p, [](std::size_t, std::size_t, double, double, const NormalPair&, double) {},
        [](double) {});
    BsPoint q = base;
    q.x = market.spot * std::exp(st.log_xi());
    q.y = st.int_v_1mrho2;
    vals[p] = price_bs(q, opt.kind);
  });
  return detail::estimate_from(vals);
}

inline MCEstimate mixing_mc_put(const MarketState& market, const ModelParams& params,
                                const OptionSpec& opt, const MCConfig& cfg) {
  OptionSpec p = opt;
  p.kind = OptionKind::Put;
  return mixing_mc_price(market, params, p, cfg);
}

struct PutCallEstimate {
  MCEstimate put, call;
};

/// Joint Euler simulation of log-spot and variance with correlated noise;
/// put and call payoffs are evaluated on the same paths.
inline PutCallEstimate direct_mc_put_call(const MarketState& market, const ModelParams& params,
                                          const OptionSpec& opt, const MCConfig& cfg) {
  market.validate();
  params.validate();
  opt.validate();
  const ModelParams rp = restrict_params(params, opt.maturity);
  const VarianceLaw law = detail::law_of(rp);
  const detail::StepPlan plan =
      detail::make_step_plan(rp.grid(), opt.maturity, cfg.steps_per_day_for(opt.maturity));
  detail::PathContext ctx{law, rp.rho, plan, cfg.scheme, cfg.seed, cfg.antithetic, cfg.paths};

  const PiecewiseCurve rdr = restrict_curve(market.rd, opt.maturity);
  const PiecewiseCurve rfr = restrict_curve(market.rf, opt.maturity);
  const double dfd = std::exp(-integrate_curve(market.rd, 0.0, opt.maturity));

  std::vector<double> puts(cfg.paths), calls(cfg.paths);
  detail::parallel_paths(cfg.paths, cfg.threads, [&](std::size_t p) {
    double log_s = std::log(market.spot);
    auto spot_step = [&](std::size_t, std::size_t i, double dt, double v_prev,
                         const NormalPair& z, double db) {
      const double r = rp.rho.value(i);
      const double dw = r * db + std::sqrt((1.0 - r * r) * dt) * z.z2;
      const double drift = rdr.value(i) - rfr.value(i);
      log_s += (drift - 0.5 * v_prev) * dt + std::sqrt(v_prev) * dw;
    };
    ctx.run(p, spot_step, [](double) {});
    const double sT = std::exp(log_s);
    puts[p] = dfd * std::max(opt.strike - sT, 0.0);
    calls[p] = dfd * std::max(sT - opt.strike, 0.0);
  });
  return {detail::estimate_from(puts), detail::estimate_from(calls)};
}

inline MCEstimate direct_mc_put(const MarketState& market, const ModelParams& params,
                                const OptionSpec& opt, const MCConfig& cfg) {
  return direct_mc_put_call(market, params, opt, cfg).put;
}

/// Sample estimate of E(V_t^n).
inline MCEstimate moment_estimate(const VarianceLaw& law, const MCConfig& cfg, double t, int n) {
  if (n < 1 || n > 6) throw std::invalid_argument("moment_estimate: order must be in [1, 6]");
  VarianceEnsemble ens = simulate_variance(law, cfg, t);
  std::vector<double> vals(ens.paths.size());
  for (std::size_t p = 0; p < vals.size(); ++p)
    vals[p] = std::pow(ens.paths[p].v_end, n);
  return detail::estimate_from(vals);
}

}  // namespace svol
