#pragma once

// Bootstrap-averaged message passing: one run computes the resampling
// average of the weighted elastic net estimators over c ~ Poisson(mu_B)
// replication counts, together with the averaged unbiased estimator
// r_hat = h / Qhat and its bootstrap noise level vhat.

#include "ampr/scalar_kernels.hpp"
#include "ampr/solver_common.hpp"
#include "ampr/synthetic_data.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace ampr {

template <typename Scalar>
struct AmprState {
  Vector<Scalar> h;
  Vector<Scalar> a;
  Vector<Scalar> w_hat;
  Scalar qhat = 1;
  Scalar vhat = 0;
  Scalar chi = 0;
  Scalar v = 0;
  Scalar f1 = 0;
  Scalar f2 = 0;
  int iter = 0;
  SolveStatus status = SolveStatus::MaxIters;
  Scalar mu_b = std::numeric_limits<Scalar>::infinity();
  DenoiserParams<Scalar> params{1, 1};
};

// Scalar order parameters after each iteration, for trajectory diagnostics.
template <typename Scalar>
struct AmprTracePoint {
  Scalar qhat, vhat, chi, v;
};

// One full run on a concrete instance. The residual update uses the freshly
// computed a_{t+1} in the h update; mu_B = +inf forces vhat = 0 throughout,
// which reduces the iteration to uniform-weight GAMP.
template <typename Scalar>
inline AmprState<Scalar> run_ampr(const ProblemInstance<Scalar>& instance,
                                  const DenoiserParams<Scalar>& params, Scalar mu_b,
                                  const SolverOptions<Scalar>& opts,
                                  std::vector<AmprTracePoint<Scalar>>* trace = nullptr) {
  params.validate();
  opts.validate();
  if (std::isnan(mu_b) || !(mu_b > Scalar(0)))
    throw std::invalid_argument("run_ampr: mu_b must be positive");
  const Eigen::Index m = instance.m, n = instance.n;
  const Scalar alpha_n = instance.alpha_n();
  const bool infinite_mu = std::isinf(mu_b);

  AmprState<Scalar> st;
  st.mu_b = mu_b;
  st.params = params;
  st.h = opts.init_h.size() ? opts.init_h : Vector<Scalar>::Zero(n);
  if (st.h.size() != n) throw std::invalid_argument("run_ampr: init_h length must equal n");
  st.a = Vector<Scalar>::Zero(m);
  st.qhat = opts.init_qhat;
  st.vhat = infinite_mu ? Scalar(0) : opts.init_vhat;
  st.w_hat = Vector<Scalar>::Zero(n);

  Vector<Scalar> w_prev = Vector<Scalar>::Zero(n);
  const Scalar d = opts.damping;
  for (int t = 0; t < opts.max_iters; ++t) {
    Vector<Scalar> w_new(n);
    Scalar deriv_sum = 0, var_sum = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const SmoothedMoments<Scalar> mom = smoothed_moments(st.h[i], st.vhat, st.qhat, params);
      w_new[i] = mom.m1;
      deriv_sum += mom.mderiv;
      var_sum += mom.m2 - mom.m1 * mom.m1;
    }
    const Scalar chi_new = deriv_sum / Scalar(n);
    const Scalar v_new = std::max(var_sum / Scalar(n), Scalar(0));
    if (d > Scalar(0) && t > 0) w_new = (Scalar(1) - d) * w_new + d * st.w_hat;

    const ResamplingMoments<Scalar> f = poisson_moments(chi_new, mu_b);
    const Scalar qhat_new = alpha_n * f.f1;
    Vector<Scalar> a_new =
        (f.f1 * (instance.y - instance.x * w_new + chi_new * st.a).array()).matrix();
    if (d > Scalar(0) && t > 0) a_new = (Scalar(1) - d) * a_new + d * st.a;
    Vector<Scalar> h_new = instance.x.transpose() * a_new + qhat_new * w_new;
    if (d > Scalar(0) && t > 0) h_new = (Scalar(1) - d) * h_new + d * st.h;

    const Scalar a2_mean = a_new.squaredNorm() / Scalar(m);
    const Scalar vhat_new =
        infinite_mu ? Scalar(0)
                    : alpha_n * (f.f2 * v_new + (f.f2 - f.f1 * f.f1) / (f.f1 * f.f1) * a2_mean);

    if (!w_new.allFinite() || !a_new.allFinite() || !h_new.allFinite() ||
        !std::isfinite(qhat_new) || !std::isfinite(vhat_new) || !std::isfinite(chi_new)) {
      st.status = SolveStatus::Diverged;
      st.iter = t;
      return st;
    }

    const Scalar change = relative_change(w_new, w_prev);
    st.w_hat = w_new;
    st.chi = chi_new;
    st.v = v_new;
    st.f1 = f.f1;
    st.f2 = f.f2;
    st.qhat = qhat_new;
    st.vhat = vhat_new;
    st.a = a_new;
    st.h = h_new;
    st.iter = t + 1;
    if (trace) trace->push_back({st.qhat, st.vhat, st.chi, st.v});
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
inline UnbiasedEstimate<Scalar> unbiased_estimate(const AmprState<Scalar>& state, Scalar alpha) {
  if (!(state.qhat > Scalar(0))) throw std::invalid_argument("unbiased_estimate: qhat must be positive");
  UnbiasedEstimate<Scalar> est;
  est.r_hat = state.h / state.qhat;
  est.sigma2 = alpha * (state.a.squaredNorm() / Scalar(state.a.size())) / (state.qhat * state.qhat);
  est.vhat_over_qhat2 = state.vhat / (state.qhat * state.qhat);
  return est;
}

// Resampling statistic selector: Mean is E_c[w*_i], SecondMoment is
// E_c[(w*_i)^2].
enum class BootstrapStat { Mean, SecondMoment };

// Per-coordinate bootstrap statistics of the resampled estimator, evaluated
// in closed form from the fixed point.
template <typename Scalar>
inline Vector<Scalar> bootstrap_statistics(const AmprState<Scalar>& state, BootstrapStat psi) {
  if (!(state.qhat > Scalar(0)))
    throw std::invalid_argument("bootstrap_statistics: qhat must be positive");
  if (psi != BootstrapStat::Mean && psi != BootstrapStat::SecondMoment)
    throw std::invalid_argument("bootstrap_statistics: unsupported statistic");
  const Eigen::Index n = state.h.size();
  Vector<Scalar> out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const SmoothedMoments<Scalar> mom = smoothed_moments(state.h[i], state.vhat, state.qhat, state.params);
    out[i] = (psi == BootstrapStat::Mean) ? mom.m1 : mom.m2;
  }
  return out;
}

}  // namespace ampr
