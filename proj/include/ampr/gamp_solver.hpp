#pragma once

// Per-realization message passing for the (optionally weighted) elastic net
// objective
//   sum_mu (r_mu/2)(y_mu - x_mu^T w)^2 + sum_i lambda (gamma |w_i| + (1-gamma)/2 w_i^2),
// plus a cyclic coordinate descent reference solver for the same objective.

#include "ampr/scalar_kernels.hpp"
#include "ampr/solver_common.hpp"
#include "ampr/synthetic_data.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ampr {

template <typename Scalar>
struct GampState {
  Vector<Scalar> h;
  Vector<Scalar> a;
  Vector<Scalar> w_hat;
  Scalar qhat = 1;
  Scalar chi = 0;
  int iter = 0;
  SolveStatus status = SolveStatus::MaxIters;
  DenoiserParams<Scalar> params{1, 1};
};

namespace detail {

template <typename Scalar>
inline bool all_finite(const Vector<Scalar>& v) {
  return v.allFinite();
}

}  // namespace detail

// Weighted GAMP. The per-sample factor r/(1 + r chi) replaces the resampling
// average of the bootstrap-averaged solver, and at a fixed point
// a_mu = r_mu (y_mu - x_mu^T w_hat), which is the stationarity condition of
// the weighted objective. Empty `weights` means uniform (all ones).
template <typename Scalar>
inline GampState<Scalar> run_gamp(const ProblemInstance<Scalar>& instance,
                                  const DenoiserParams<Scalar>& params,
                                  const Vector<Scalar>& weights,
                                  const SolverOptions<Scalar>& opts) {
  params.validate();
  opts.validate();
  const Eigen::Index m = instance.m, n = instance.n;
  Vector<Scalar> r = weights;
  if (r.size() == 0) r = Vector<Scalar>::Ones(m);
  if (r.size() != m) throw std::invalid_argument("run_gamp: weights length must equal m");
  if ((r.array() < Scalar(0)).any()) throw std::invalid_argument("run_gamp: weights must be nonnegative");

  const Scalar alpha_n = instance.alpha_n();
  GampState<Scalar> st;
  st.params = params;
  st.h = opts.init_h.size() ? opts.init_h : Vector<Scalar>::Zero(n);
  if (st.h.size() != n) throw std::invalid_argument("run_gamp: init_h length must equal n");
  st.a = Vector<Scalar>::Zero(m);
  st.qhat = opts.init_qhat;
  st.w_hat = Vector<Scalar>::Zero(n);

  Vector<Scalar> w_prev = Vector<Scalar>::Zero(n);
  const Scalar d = opts.damping;
  for (int t = 0; t < opts.max_iters; ++t) {
    Vector<Scalar> w_new(n);
    Scalar chi_new = 0;
    if (st.qhat > Scalar(0)) {
      Scalar deriv_sum = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        w_new[i] = denoise(st.h[i], st.qhat, params);
        deriv_sum += denoise_deriv(st.h[i], st.qhat, params);
      }
      chi_new = deriv_sum / Scalar(n);
    } else {
      // Degenerate data term (all weights zero): the minimizer is w = 0.
      w_new.setZero();
    }
    if (d > Scalar(0) && t > 0) w_new = (Scalar(1) - d) * w_new + d * st.w_hat;

    const Vector<Scalar> k = (r.array() / (Scalar(1) + r.array() * chi_new)).matrix();
    const Scalar qhat_new = alpha_n * k.mean();
    Vector<Scalar> a_new = (k.array() * (instance.y - instance.x * w_new + chi_new * st.a).array()).matrix();
    if (d > Scalar(0) && t > 0) a_new = (Scalar(1) - d) * a_new + d * st.a;
    Vector<Scalar> h_new = instance.x.transpose() * a_new + qhat_new * w_new;
    if (d > Scalar(0) && t > 0) h_new = (Scalar(1) - d) * h_new + d * st.h;

    if (!detail::all_finite(w_new) || !detail::all_finite(a_new) || !detail::all_finite(h_new) ||
        !std::isfinite(qhat_new) || !std::isfinite(chi_new)) {
      st.status = SolveStatus::Diverged;
      st.iter = t;
      return st;
    }

    const Scalar change = relative_change(w_new, w_prev);
    st.w_hat = w_new;
    st.chi = chi_new;
    st.qhat = qhat_new;
    st.a = a_new;
    st.h = h_new;
    st.iter = t + 1;
    w_prev = w_new;
    if (t > 0 && change < opts.tol) {
      st.status = SolveStatus::Converged;
      return st;
    }
  }
  st.status = SolveStatus::MaxIters;
  return st;
}

template <typename Scalar>
inline GampState<Scalar> run_gamp(const ProblemInstance<Scalar>& instance,
                                  const DenoiserParams<Scalar>& params,
                                  const SolverOptions<Scalar>& opts) {
  return run_gamp(instance, params, Vector<Scalar>(), opts);
}

template <typename Scalar>
inline UnbiasedEstimate<Scalar> gamp_unbiased_estimate(const GampState<Scalar>& state, Scalar alpha) {
  if (!(state.qhat > Scalar(0))) throw std::invalid_argument("gamp_unbiased_estimate: qhat must be positive");
  UnbiasedEstimate<Scalar> est;
  est.r_hat = state.h / state.qhat;
  est.sigma2 = alpha * (state.a.squaredNorm() / Scalar(state.a.size())) / (state.qhat * state.qhat);
  est.vhat_over_qhat2 = 0;
  return est;
}

// Batched GAMP over many weight realizations at once; the per-iteration
// matrix products become level-3 BLAS. Columns evolve exactly as independent
// run_gamp calls would, except that the per-column scalars live in arrays.
// Column j of `ratios` holds the weights of realization j.
template <typename Scalar>
struct GampBatchResult {
  Matrix<Scalar> h;           // n x B cavity fields at the per-column stop
  Vector<Scalar> qhat;        // B
  Vector<Scalar> chi;         // B
  std::vector<SolveStatus> status;
  std::vector<int> iters;
};

template <typename Scalar>
inline GampBatchResult<Scalar> run_gamp_batch(const ProblemInstance<Scalar>& instance,
                                              const DenoiserParams<Scalar>& params,
                                              const Matrix<Scalar>& ratios,
                                              const SolverOptions<Scalar>& opts) {
  params.validate();
  opts.validate();
  const Eigen::Index m = instance.m, n = instance.n;
  const Eigen::Index nb = ratios.cols();
  if (ratios.rows() != m) throw std::invalid_argument("run_gamp_batch: ratios rows must equal m");
  const Scalar alpha_n = instance.alpha_n();

  Matrix<Scalar> h(n, nb);
  if (opts.init_h.size()) {
    if (opts.init_h.size() != n) throw std::invalid_argument("run_gamp_batch: init_h length must equal n");
    h = opts.init_h.replicate(1, nb);
  } else {
    h.setZero();
  }
  Matrix<Scalar> r = ratios;
  Matrix<Scalar> a = Matrix<Scalar>::Zero(m, nb);
  Matrix<Scalar> w = Matrix<Scalar>::Zero(n, nb);
  Matrix<Scalar> w_prev = w;
  Vector<Scalar> qhat = Vector<Scalar>::Constant(nb, opts.init_qhat);
  Vector<Scalar> chi = Vector<Scalar>::Zero(nb);
  std::vector<Eigen::Index> origin(static_cast<size_t>(nb));
  for (Eigen::Index j = 0; j < nb; ++j) origin[static_cast<size_t>(j)] = j;

  GampBatchResult<Scalar> out;
  out.h = Matrix<Scalar>::Zero(n, nb);
  out.qhat = Vector<Scalar>::Ones(nb);
  out.chi = Vector<Scalar>::Zero(nb);
  out.status.assign(static_cast<size_t>(nb), SolveStatus::MaxIters);
  out.iters.assign(static_cast<size_t>(nb), opts.max_iters);

  // Columns evolve independently, so finished ones retire with their current
  // iterate and the remaining columns are compacted; the level-3 products
  // then shrink with the active set instead of idling on stragglers.
  auto retire = [&](Eigen::Index slot, SolveStatus status, int iters) {
    const Eigen::Index col = origin[static_cast<size_t>(slot)];
    out.h.col(col) = h.col(slot);
    out.qhat[col] = qhat[slot];
    out.chi[col] = chi[slot];
    out.status[static_cast<size_t>(col)] = status;
    out.iters[static_cast<size_t>(col)] = iters;
  };

  for (int t = 0; t < opts.max_iters; ++t) {
    const Eigen::Index cols = static_cast<Eigen::Index>(origin.size());
    if (cols == 0) break;
    for (Eigen::Index j = 0; j < cols; ++j) {
      Scalar deriv_sum = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        w(i, j) = denoise(h(i, j), qhat[j], params);
        deriv_sum += denoise_deriv(h(i, j), qhat[j], params);
      }
      chi[j] = deriv_sum / Scalar(n);
    }
    if (opts.damping > Scalar(0) && t > 0)
      w = (Scalar(1) - opts.damping) * w + opts.damping * w_prev;
    Matrix<Scalar> k =
        (r.array() / (Scalar(1) + r.array().rowwise() * chi.transpose().array())).matrix();
    Vector<Scalar> qhat_new = alpha_n * k.colwise().mean().transpose();
    Matrix<Scalar> resid = (-(instance.x * w)).colwise() + instance.y;
    resid.array() += a.array().rowwise() * chi.transpose().array();
    Matrix<Scalar> a_new = (k.array() * resid.array()).matrix();
    if (opts.damping > Scalar(0) && t > 0)
      a_new = (Scalar(1) - opts.damping) * a_new + opts.damping * a;
    a = std::move(a_new);
    Matrix<Scalar> h_new = instance.x.transpose() * a + w * qhat_new.asDiagonal();
    if (opts.damping > Scalar(0) && t > 0)
      h_new = (Scalar(1) - opts.damping) * h_new + opts.damping * h;
    h = std::move(h_new);
    qhat = qhat_new;

    std::vector<Eigen::Index> keep;
    keep.reserve(static_cast<size_t>(cols));
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!w.col(j).allFinite() || !h.col(j).allFinite() || !std::isfinite(qhat[j])) {
        retire(j, SolveStatus::Diverged, t + 1);
        continue;
      }
      if (t > 0 && relative_change<Scalar>(w.col(j), w_prev.col(j)) < opts.tol) {
        retire(j, SolveStatus::Converged, t + 1);
        continue;
      }
      if (t + 1 == opts.max_iters) {
        retire(j, SolveStatus::MaxIters, t + 1);
        continue;
      }
      keep.push_back(j);
    }
    if (keep.size() == origin.size()) {
      w_prev = w;
      continue;
    }
    const Eigen::Index nk = static_cast<Eigen::Index>(keep.size());
    Matrix<Scalar> h2(n, nk), r2(m, nk), a2(m, nk), w2(n, nk);
    Vector<Scalar> q2(nk), c2(nk);
    std::vector<Eigen::Index> origin2(static_cast<size_t>(nk));
    for (Eigen::Index jj = 0; jj < nk; ++jj) {
      const Eigen::Index j = keep[static_cast<size_t>(jj)];
      h2.col(jj) = h.col(j);
      r2.col(jj) = r.col(j);
      a2.col(jj) = a.col(j);
      w2.col(jj) = w.col(j);
      q2[jj] = qhat[j];
      c2[jj] = chi[j];
      origin2[static_cast<size_t>(jj)] = origin[static_cast<size_t>(j)];
    }
    h = std::move(h2);
    r = std::move(r2);
    a = std::move(a2);
    w = std::move(w2);
    w_prev = w;
    qhat = std::move(q2);
    chi = std::move(c2);
    origin = std::move(origin2);
  }
  return out;
}

// Cyclic coordinate descent with exact soft-threshold steps. Used as the
// convex oracle that the message passing fixed points are validated against.
template <typename Scalar>
struct ElasticNetSolution {
  Vector<Scalar> w;
  int sweeps = 0;
  bool converged = false;
};

template <typename Scalar>
inline ElasticNetSolution<Scalar> solve_elastic_net_reference(
    const ProblemInstance<Scalar>& instance, const DenoiserParams<Scalar>& params,
    const Vector<Scalar>& weights, Scalar tol = Scalar(1e-10), int max_sweeps = 100000) {
  params.validate();
  const Eigen::Index m = instance.m, n = instance.n;
  Vector<Scalar> r = weights;
  if (r.size() == 0) r = Vector<Scalar>::Ones(m);
  if (r.size() != m) throw std::invalid_argument("solve_elastic_net_reference: weights length must equal m");
  const Scalar l1 = params.lambda * params.gamma;
  const Scalar l2 = params.lambda * (Scalar(1) - params.gamma);
  const bool any_weight = (r.array() > Scalar(0)).any();
  if (!(params.gamma > Scalar(0)) && !(l2 > Scalar(0)))
    throw std::invalid_argument("solve_elastic_net_reference: objective must be l1- or l2-regularized");

  ElasticNetSolution<Scalar> sol;
  sol.w = Vector<Scalar>::Zero(n);
  if (!any_weight) {  // pure penalty, minimized at zero
    sol.converged = true;
    return sol;
  }

  Vector<Scalar> curvature(n);  // sum_mu r_mu X_mu,i^2
  for (Eigen::Index j = 0; j < n; ++j)
    curvature[j] = (r.array() * instance.x.col(j).array().square()).sum();

  Vector<Scalar> resid = instance.y;                       // y - X w
  Vector<Scalar> wresid = (r.array() * resid.array()).matrix();  // r .* (y - X w)

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    Scalar max_step = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const Scalar den = curvature[j] + l2;
      if (!(den > Scalar(0))) continue;  // coordinate absent from data, l1-only: stays 0
      const Scalar old = sol.w[j];
      const Scalar rho = instance.x.col(j).dot(wresid) + curvature[j] * old;
      Scalar next = 0;
      if (rho > l1)
        next = (rho - l1) / den;
      else if (rho < -l1)
        next = (rho + l1) / den;
      if (next != old) {
        const Scalar step = old - next;
        resid += instance.x.col(j) * step;
        wresid += (r.array() * instance.x.col(j).array()).matrix() * step;
        sol.w[j] = next;
        max_step = std::max(max_step, std::abs(step));
      }
    }
    sol.sweeps = sweep + 1;
    if (max_step < tol) {
      sol.converged = true;
      return sol;
    }
  }
  return sol;
}

}  // namespace ampr
