#pragma once

// Variance-minimizing hyperparameter search on top of the state evolution:
// a self-contained Nelder-Mead simplex, per-cell optimization over
// (mu_B, lambda, gamma) in log/logit coordinates, the mu_B = +inf baseline,
// and the (rho, alpha) phase-diagram sweep.

#include "ampr/state_evolution.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

namespace ampr {

struct NelderMeadOptions {
  int max_iters = 500;
  double diameter_tol = 1e-6;
  double initial_step = 0.5;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double fval = std::numeric_limits<double>::infinity();
  int iters = 0;
  bool converged = false;
};

// Standard simplex method: reflection 1, expansion 2, contraction 1/2,
// shrink 1/2. Non-finite objective values rank as +inf, so infeasible
// regions repel the simplex.
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                                    const Eigen::VectorXd& x0, const NelderMeadOptions& opts = {}) {
  const int d = static_cast<int>(x0.size());
  if (d < 1) throw std::invalid_argument("nelder_mead: dimension must be >= 1");
  auto eval = [&](const Eigen::VectorXd& x) {
    const double f = objective(x);
    return std::isnan(f) ? std::numeric_limits<double>::infinity() : f;
  };

  std::vector<Eigen::VectorXd> xs(d + 1, x0);
  std::vector<double> fs(d + 1);
  for (int i = 0; i < d; ++i) xs[i + 1][i] += opts.initial_step;
  bool any_finite = false;
  for (int i = 0; i <= d; ++i) {
    fs[i] = eval(xs[i]);
    any_finite = any_finite || std::isfinite(fs[i]);
  }
  if (!any_finite)
    throw std::invalid_argument("nelder_mead: objective is non-finite at every initial vertex");

  auto order = [&]() {
    for (int i = 1; i <= d; ++i)
      for (int j = i; j > 0 && fs[j] < fs[j - 1]; --j) {
        std::swap(fs[j], fs[j - 1]);
        std::swap(xs[j], xs[j - 1]);
      }
  };

  NelderMeadResult out;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    order();
    double diameter = 0;
    for (int i = 1; i <= d; ++i) diameter = std::max(diameter, (xs[i] - xs[0]).norm());
    if (diameter < opts.diameter_tol) {
      out.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) centroid += xs[i];
    centroid /= d;

    const Eigen::VectorXd xr = centroid + (centroid - xs[d]);
    const double fr = eval(xr);
    if (fr < fs[0]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (xr - centroid);
      const double fe = eval(xe);
      if (fe < fr) {
        xs[d] = xe;
        fs[d] = fe;
      } else {
        xs[d] = xr;
        fs[d] = fr;
      }
    } else if (fr < fs[d - 1]) {
      xs[d] = xr;
      fs[d] = fr;
    } else {
      const bool outside = fr < fs[d];
      const Eigen::VectorXd xc = outside ? centroid + 0.5 * (xr - centroid)
                                         : centroid + 0.5 * (xs[d] - centroid);
      const double fc = eval(xc);
      if (fc < (outside ? fr : fs[d])) {
        xs[d] = xc;
        fs[d] = fc;
      } else {
        for (int i = 1; i <= d; ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = eval(xs[i]);
        }
      }
    }
  }
  order();
  out.x = xs[0];
  out.fval = fs[0];
  out.iters = it;
  return out;
}

struct GammaMode {
  bool free = false;
  double value = 1.0;  // used when fixed

  static GammaMode fixed(double g) { return {false, g}; }
  static GammaMode optimized() { return {true, 0.5}; }
};

// Search box. lambda has a hard floor of 1e-7; the finite mu_B box is
// searched by Nelder-Mead while mu_B = +inf is handled as its own
// sub-problem so the non-bootstrap baseline is exact.
struct OptDomain {
  double mu_b_log_lo = std::log(1e-2);
  double mu_b_log_hi = std::log(1e3);
  double lambda_lo = 1e-7;
  double lambda_hi = 1e2;
  GammaMode gamma = GammaMode::fixed(1.0);

  void validate() const {
    if (!(mu_b_log_lo < mu_b_log_hi) || !std::isfinite(mu_b_log_hi))
      throw std::invalid_argument("OptDomain: finite mu_B search box required");
    if (lambda_lo != 1e-7) throw std::invalid_argument("OptDomain: lambda floor is pinned at 1e-7");
    if (!(lambda_hi > lambda_lo)) throw std::invalid_argument("OptDomain: lambda_hi must exceed the floor");
    if (!gamma.free && (!(gamma.value >= 0.0) || !(gamma.value <= 1.0)))
      throw std::invalid_argument("OptDomain: fixed gamma must lie in [0,1]");
  }
};

struct InfeasibleDomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One phase-diagram cell: the optimum over (mu_B, lambda, gamma), the
// non-bootstrap baseline, their ratio, and the unique-sample fraction
// alpha (1 - exp(-mu_B*)).
struct SweepRecord {
  double rho = 0, alpha = 0;
  double mu_b_star = 0, lambda_star = 0, gamma_star = 0;
  double sigma2_star = 0, s2_star = 0, ratio = 0, unique_frac = 0;
  bool interpolator = false;
  bool converged = false;
};

inline double unique_sample_fraction(double alpha, double mu_b) {
  return std::isinf(mu_b) ? alpha : alpha * (1.0 - std::exp(-mu_b));
}

namespace detail {

inline double halton(int index, int base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * (index % base);
    index /= base;
  }
  return r;
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double inv_logit(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// Variance objective over transformed coordinates with clamping plus a
// quadratic out-of-box penalty; non-converged SE evaluations are +inf.
struct VarianceObjective {
  double alpha, delta;
  SignalPrior<double> prior;
  double mu_b_fixed;  // +inf for the baseline sub-problem, NaN when mu_B is a coordinate
  OptDomain domain;
  SeOptions<double> se_opts;

  int dims() const {
    int d = std::isnan(mu_b_fixed) ? 2 : 1;  // (log mu_B,) log lambda
    if (domain.gamma.free) ++d;
    return d;
  }

  Eigen::VectorXd lower() const {
    Eigen::VectorXd lo(dims());
    int k = 0;
    if (std::isnan(mu_b_fixed)) lo[k++] = domain.mu_b_log_lo;
    lo[k++] = std::log(domain.lambda_lo);
    if (domain.gamma.free) lo[k++] = logit(1e-3);
    return lo;
  }

  Eigen::VectorXd upper() const {
    Eigen::VectorXd hi(dims());
    int k = 0;
    if (std::isnan(mu_b_fixed)) hi[k++] = domain.mu_b_log_hi;
    hi[k++] = std::log(domain.lambda_hi);
    if (domain.gamma.free) hi[k++] = logit(1.0 - 1e-3);
    return hi;
  }

  void decode(const Eigen::VectorXd& u, double& mu_b, DenoiserParams<double>& params) const {
    int k = 0;
    mu_b = std::isnan(mu_b_fixed) ? std::exp(u[k++]) : mu_b_fixed;
    params.lambda = std::exp(u[k++]);
    params.gamma = domain.gamma.free ? inv_logit(u[k++]) : domain.gamma.value;
  }

  double operator()(const Eigen::VectorXd& u) const {
    const Eigen::VectorXd lo = lower(), hi = upper();
    Eigen::VectorXd uc = u.cwiseMax(lo).cwiseMin(hi);
    const double excess = (u - uc).squaredNorm();
    double mu_b;
    DenoiserParams<double> params{0.1, 1.0};
    decode(uc, mu_b, params);
    const SeState<double> st = run_se(alpha, delta, prior, params, mu_b, SeInit<double>{}, se_opts);
    if (st.status != SolveStatus::Converged) return std::numeric_limits<double>::infinity();
    return se_variance(st) + 100.0 * excess;
  }
};

struct SubOptimum {
  double fval = std::numeric_limits<double>::infinity();
  double mu_b = 0, lambda = 0, gamma = 0;
  bool found = false;
};

inline SubOptimum multistart_minimize(const VarianceObjective& obj, int restarts,
                                      const NelderMeadOptions& nm_opts) {
  static const int primes[3] = {2, 3, 5};
  const Eigen::VectorXd lo = obj.lower(), hi = obj.upper();
  const int d = obj.dims();
  SubOptimum best;
  for (int s = 0; s < restarts; ++s) {
    Eigen::VectorXd x0(d);
    for (int i = 0; i < d; ++i) {
      const double frac = halton(s + 1, primes[i]);
      x0[i] = lo[i] + frac * (hi[i] - lo[i]);
    }
    NelderMeadResult res;
    try {
      res = nelder_mead([&obj](const Eigen::VectorXd& u) { return obj(u); }, x0, nm_opts);
    } catch (const std::invalid_argument&) {
      continue;  // no feasible vertex near this start
    }
    if (!std::isfinite(res.fval)) continue;
    // Strip the penalty: clamp and re-evaluate at the reported point.
    Eigen::VectorXd xc = res.x.cwiseMax(lo).cwiseMin(hi);
    const double fval = obj(xc);
    if (std::isfinite(fval) && fval < best.fval) {
      best.fval = fval;
      DenoiserParams<double> params{0.1, 1.0};
      obj.decode(xc, best.mu_b, params);
      best.lambda = params.lambda;
      best.gamma = params.gamma;
      best.found = true;
    }
  }
  return best;
}

}  // namespace detail

// Optimal (mu_B*, lambda*, gamma*) for one (rho, alpha) cell, together with
// the mu_B = +inf baseline s^2. When the finite-mu_B search cannot beat the
// baseline, the baseline itself is the reported optimum (mu_B* = +inf), so
// ratio <= 1 by construction.
inline SweepRecord minimize_variance(double alpha, double delta, const SignalPrior<double>& prior,
                                     const OptDomain& domain, int restarts = 5,
                                     const SeOptions<double>& se_opts = {},
                                     const NelderMeadOptions& nm_opts = {}) {
  domain.validate();
  prior.validate();
  if (restarts < 1) throw std::invalid_argument("minimize_variance: restarts must be >= 1");
  const double inf = std::numeric_limits<double>::infinity();

  detail::VarianceObjective boot{alpha, delta, prior, std::numeric_limits<double>::quiet_NaN(),
                                 domain, se_opts};
  detail::VarianceObjective base{alpha, delta, prior, inf, domain, se_opts};
  const detail::SubOptimum opt_boot = detail::multistart_minimize(boot, restarts, nm_opts);
  const detail::SubOptimum opt_base = detail::multistart_minimize(base, restarts, nm_opts);
  if (!opt_base.found && !opt_boot.found)
    throw InfeasibleDomainError("minimize_variance: no feasible SE fixed point at any start");

  SweepRecord rec;
  rec.rho = prior.rho;
  rec.alpha = alpha;
  rec.converged = opt_base.found && opt_boot.found;
  rec.s2_star = opt_base.found ? opt_base.fval : inf;

  const bool boot_wins = opt_boot.found && (!opt_base.found || opt_boot.fval <= opt_base.fval);
  if (boot_wins) {
    rec.mu_b_star = opt_boot.mu_b;
    rec.lambda_star = opt_boot.lambda;
    rec.gamma_star = opt_boot.gamma;
    rec.sigma2_star = opt_boot.fval;
  } else {
    rec.mu_b_star = inf;
    rec.lambda_star = opt_base.lambda;
    rec.gamma_star = opt_base.gamma;
    rec.sigma2_star = opt_base.fval;
  }
  rec.ratio = opt_base.found ? rec.sigma2_star / rec.s2_star : std::numeric_limits<double>::quiet_NaN();
  rec.unique_frac = unique_sample_fraction(alpha, rec.mu_b_star);
  rec.interpolator = rec.lambda_star <= 2e-7 && rec.unique_frac < 1.0;
  return rec;
}

// Grid sweep; cells are independent and may be evaluated concurrently, and
// the output is ordered by (rho index, alpha index) regardless of thread
// count. Per-cell failures are recorded in the row.
inline std::vector<SweepRecord> sweep_phase_diagram(const std::vector<double>& rho_grid,
                                                    const std::vector<double>& alpha_grid,
                                                    double delta, const OptDomain& domain,
                                                    int restarts = 5,
                                                    const SeOptions<double>& se_opts = {},
                                                    int threads = 1) {
  if (rho_grid.empty() || alpha_grid.empty())
    throw std::invalid_argument("sweep_phase_diagram: grids must be non-empty");
  const size_t cells = rho_grid.size() * alpha_grid.size();
  std::vector<SweepRecord> records(cells);
  std::atomic<size_t> next{0};

  auto worker = [&]() {
    for (;;) {
      const size_t idx = next.fetch_add(1);
      if (idx >= cells) return;
      const double rho = rho_grid[idx / alpha_grid.size()];
      const double alpha = alpha_grid[idx % alpha_grid.size()];
      SweepRecord rec;
      try {
        rec = minimize_variance(alpha, delta, SignalPrior<double>{rho}, domain, restarts, se_opts);
      } catch (const std::exception&) {
        rec.rho = rho;
        rec.alpha = alpha;
        rec.converged = false;
        rec.mu_b_star = rec.lambda_star = rec.gamma_star = std::numeric_limits<double>::quiet_NaN();
        rec.sigma2_star = rec.s2_star = rec.ratio = rec.unique_frac =
            std::numeric_limits<double>::quiet_NaN();
      }
      records[idx] = rec;
    }
  };

  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return records;
}

}  // namespace ampr
