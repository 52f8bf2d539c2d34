#pragma once

// Statistical validation utilities: Q-Q tables against a centered normal,
// a Kolmogorov-Smirnov statistic (statistic only, not a calibrated test),
// ordinary least squares slope/intercept, and the decoupling consistency
// check between a finite-size run and its state evolution fixed point.

#include "ampr/ampr_solver.hpp"
#include "ampr/math.hpp"
#include "ampr/state_evolution.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace ampr {

template <typename Scalar>
struct QqTable {
  Vector<Scalar> theoretical;  // sorted normal quantiles at (i - 0.5)/n
  Vector<Scalar> sample;       // order statistics of the sample
  Scalar slope = 0;
  Scalar intercept = 0;
};

template <typename Scalar>
struct LinearFit {
  Scalar slope = 0;
  Scalar intercept = 0;
};

template <typename Scalar>
inline LinearFit<Scalar> least_squares_fit(const Vector<Scalar>& x, const Vector<Scalar>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("least_squares_fit: need two equally sized samples");
  const Scalar mx = x.mean(), my = y.mean();
  const Scalar sxx = (x.array() - mx).square().sum();
  if (!(sxx > Scalar(0))) throw std::invalid_argument("least_squares_fit: degenerate regressor");
  const Scalar sxy = ((x.array() - mx) * (y.array() - my)).sum();
  LinearFit<Scalar> fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

// Sample quantiles at plotting positions (i - 0.5)/n against the quantiles
// of N(0, variance). The slope/intercept fit uses the central 98% of the
// positions so end quantiles cannot dominate it.
template <typename Scalar>
inline QqTable<Scalar> qq_against_normal(const Vector<Scalar>& sample, Scalar variance) {
  const Eigen::Index n = sample.size();
  if (n < 100) throw std::invalid_argument("qq_against_normal: sample length must be >= 100");
  if (!(variance > Scalar(0)) || !std::isfinite(variance))
    throw std::invalid_argument("qq_against_normal: variance must be positive and finite");
  QqTable<Scalar> table;
  table.sample = sample;
  std::sort(table.sample.begin(), table.sample.end());
  if (table.sample[0] == table.sample[n - 1])
    throw std::invalid_argument("qq_against_normal: degenerate (constant) sample");
  const Scalar sd = std::sqrt(variance);
  table.theoretical.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar p = (Scalar(i) + Scalar(0.5)) / Scalar(n);
    table.theoretical[i] = sd * normal_quantile(p);
  }
  // Central 98% window.
  std::vector<Scalar> tx, ty;
  tx.reserve(n);
  ty.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar p = (Scalar(i) + Scalar(0.5)) / Scalar(n);
    if (p >= Scalar(0.01) && p <= Scalar(0.99)) {
      tx.push_back(table.theoretical[i]);
      ty.push_back(table.sample[i]);
    }
  }
  Vector<Scalar> vx = Eigen::Map<Vector<Scalar>>(tx.data(), static_cast<Eigen::Index>(tx.size()));
  Vector<Scalar> vy = Eigen::Map<Vector<Scalar>>(ty.data(), static_cast<Eigen::Index>(ty.size()));
  const LinearFit<Scalar> fit = least_squares_fit(vx, vy);
  table.slope = fit.slope;
  table.intercept = fit.intercept;
  return table;
}

// sup_x |ECDF(x) - Phi(x / sd)|.
template <typename Scalar>
inline Scalar ks_statistic(const Vector<Scalar>& sample, Scalar variance) {
  const Eigen::Index n = sample.size();
  if (n < 1) throw std::invalid_argument("ks_statistic: empty sample");
  if (!(variance > Scalar(0))) throw std::invalid_argument("ks_statistic: variance must be positive");
  Vector<Scalar> s = sample;
  std::sort(s.begin(), s.end());
  const Scalar sd = std::sqrt(variance);
  Scalar stat = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar cdf = normal_cdf(s[i] / sd);
    stat = std::max(stat, std::abs(cdf - Scalar(i + 1) / Scalar(n)));
    stat = std::max(stat, std::abs(cdf - Scalar(i) / Scalar(n)));
  }
  return stat;
}

enum class OuterStat { Identity, Square };   // phi
enum class InnerStat { Identity, Square };   // psi

// Both sides of the decoupling relation: the empirical average
//   N^-1 sum_i phi(E_eta[psi(g(h_i + sqrt(vhat) eta, Qhat))])
// from a converged run (no access to w0), and the same functional under the
// state evolution field Qhat w0 + sqrt(chihat) xi + sqrt(vhat) eta.
// Supported selectors: (id, id), (square, id), (id, square).
template <typename Scalar>
inline std::pair<Scalar, Scalar> decoupling_check(const AmprState<Scalar>& state,
                                                  const SeState<Scalar>& se,
                                                  const SignalPrior<Scalar>& prior,
                                                  OuterStat phi, InnerStat psi,
                                                  int quadrature_nodes = 120) {
  if (phi == OuterStat::Square && psi == InnerStat::Square)
    throw std::invalid_argument("decoupling_check: (square, square) selector unsupported");
  if (!(state.qhat > Scalar(0)) || !(se.qhat > Scalar(0)))
    throw std::invalid_argument("decoupling_check: converged states required");
  prior.validate();

  auto inner_run = [&](Scalar h) {
    const SmoothedMoments<Scalar> m = smoothed_moments(h, state.vhat, state.qhat, state.params);
    return psi == InnerStat::Identity ? m.m1 : m.m2;
  };
  auto outer = [&](Scalar x) { return phi == OuterStat::Identity ? x : x * x; };

  Scalar lhs = 0;
  for (Eigen::Index i = 0; i < state.h.size(); ++i) lhs += outer(inner_run(state.h[i]));
  lhs /= Scalar(state.h.size());

  auto inner_se = [&](Scalar h) {
    const SmoothedMoments<Scalar> m = smoothed_moments(h, se.vhat, se.qhat, state.params);
    return psi == InnerStat::Identity ? m.m1 : m.m2;
  };
  const QuadratureRule<Scalar>& rule = cached_gauss_hermite<Scalar>(quadrature_nodes);
  const Scalar sd0 = std::sqrt(se.chihat);
  const Scalar sd1 = std::sqrt(se.qhat * se.qhat * prior.nonzero_variance + se.chihat);
  Scalar zero_atom = 0, gauss_atom = 0;
  for (int k = 0; k < quadrature_nodes; ++k) {
    zero_atom += rule.weights[k] * outer(inner_se(sd0 * rule.nodes[k]));
    gauss_atom += rule.weights[k] * outer(inner_se(sd1 * rule.nodes[k]));
  }
  const Scalar rhs = (Scalar(1) - prior.rho) * zero_atom + prior.rho * gauss_atom;
  return {lhs, rhs};
}

}  // namespace ampr
