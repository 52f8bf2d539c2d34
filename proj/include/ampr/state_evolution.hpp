#pragma once

// Deterministic scalar recursion tracking the order parameters of the
// bootstrap-averaged solver in the proportional limit M, N -> inf,
// M/N -> alpha. The effective field is h = Qhat w0 + sqrt(chihat) xi
// + sqrt(vhat) eta with (xi, eta) carrying the data and resampling
// randomness; mu_B = +inf is the non-bootstrap special case with
// vhat = v = 0 identically.

#include "ampr/scalar_kernels.hpp"
#include "ampr/solver_common.hpp"
#include "ampr/synthetic_data.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace ampr {

template <typename Scalar>
struct SeState {
  Scalar mse = 0;      // E[(E_eta[w_hat] - w0)^2]
  Scalar chi = 0;
  Scalar v = 0;
  Scalar qhat = 1;
  Scalar chihat = 0;
  Scalar vhat = 0;
  Scalar f1 = 0;
  Scalar f2 = 0;
  int iter = 0;
  SolveStatus status = SolveStatus::MaxIters;
};

template <typename Scalar>
struct SeOptions {
  int max_iters = 5000;
  Scalar tol = Scalar(1e-10);
  int quadrature_nodes = 120;
  Scalar damping = Scalar(0.5);

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("SeOptions: max_iters must be >= 1");
    if (!(tol > Scalar(0))) throw std::invalid_argument("SeOptions: tol must be positive");
    if (quadrature_nodes < 20) throw std::invalid_argument("SeOptions: quadrature_nodes must be >= 20");
    if (!(damping >= Scalar(0)) || !(damping < Scalar(1)))
      throw std::invalid_argument("SeOptions: damping must lie in [0,1)");
  }
};

// Starting point (E0, Qhat1, vhat1). E0 is the MSE of the initial estimate;
// the default mirrors w_hat0 = 0, so E0 is the prior second moment.
template <typename Scalar>
struct SeInit {
  Scalar e0 = std::numeric_limits<Scalar>::quiet_NaN();  // NaN -> prior second moment
  Scalar qhat1 = 1;
  Scalar vhat1 = 1;
};

namespace detail {

// E[m1(s; vhat)^2] over s ~ N(0, sd^2) by Gauss-Hermite; the only order
// parameter integral that does not collapse to a single smoothed-moment
// evaluation. For vhat = 0, m1^2 is the m2 integrand, so the expectation is
// available in closed form and v = M2 - S2 vanishes identically.
template <typename Scalar>
inline Scalar mean_m1_squared(Scalar sd, Scalar vhat, Scalar qhat,
                              const DenoiserParams<Scalar>& params, int nodes) {
  if (vhat == Scalar(0)) return smoothed_moments(Scalar(0), sd * sd, qhat, params).m2;
  const QuadratureRule<Scalar>& rule = cached_gauss_hermite<Scalar>(nodes);
  Scalar acc = 0;
  for (int k = 0; k < nodes; ++k) {
    const Scalar m1 = smoothed_moments(sd * rule.nodes[k], vhat, qhat, params).m1;
    acc += rule.weights[k] * m1 * m1;
  }
  return acc;
}

}  // namespace detail

template <typename Scalar>
inline SeState<Scalar> run_se(Scalar alpha, Scalar delta, const SignalPrior<Scalar>& prior,
                              const DenoiserParams<Scalar>& params, Scalar mu_b,
                              const SeInit<Scalar>& init = {}, const SeOptions<Scalar>& opts = {},
                              std::vector<SeState<Scalar>>* trajectory = nullptr) {
  params.validate();
  prior.validate();
  opts.validate();
  if (!(alpha > Scalar(0)) || !std::isfinite(alpha))
    throw std::invalid_argument("run_se: alpha must be positive and finite");
  if (!(delta >= Scalar(0))) throw std::invalid_argument("run_se: delta must be nonnegative");
  if (std::isnan(mu_b) || !(mu_b > Scalar(0))) throw std::invalid_argument("run_se: mu_b must be positive");
  const bool infinite_mu = std::isinf(mu_b);
  const Scalar rho = prior.rho;
  const Scalar q0 = prior.nonzero_variance;

  SeState<Scalar> st;
  st.mse = std::isnan(init.e0) ? prior.second_moment() : init.e0;
  st.qhat = init.qhat1;
  st.vhat = infinite_mu ? Scalar(0) : init.vhat1;
  if (!(st.qhat > Scalar(0)) || !(st.mse >= Scalar(0)) || !(st.vhat >= Scalar(0)))
    throw std::invalid_argument("run_se: init requires qhat1 > 0, e0 >= 0, vhat1 >= 0");
  st.chihat = st.qhat * st.qhat * (st.mse + delta) / alpha;

  const Scalar d = opts.damping;
  bool have_prev = false;
  Scalar prev_mse = 0, prev_chi = 0, prev_v = 0;
  for (int t = 0; t < opts.max_iters; ++t) {
    const Scalar chibar = st.chihat + st.vhat;
    const Scalar gauss_var = st.qhat * st.qhat * q0;  // variance of Qhat w0 on the nonzero atom

    // Linear functionals of the field collapse through the Gaussian
    // semigroup: smoothing by xi and eta jointly equals a single smoothing
    // at the summed variance, and the zero atom needs no quadrature at all.
    const SmoothedMoments<Scalar> atom0 = smoothed_moments(Scalar(0), chibar, st.qhat, params);
    const SmoothedMoments<Scalar> atom1 = smoothed_moments(Scalar(0), gauss_var + chibar, st.qhat, params);
    const Scalar chi_new = (Scalar(1) - rho) * atom0.mderiv + rho * atom1.mderiv;
    const Scalar m2_mean = (Scalar(1) - rho) * atom0.m2 + rho * atom1.m2;
    // E[w0 E_eta[w_hat]] by Stein's identity on the nonzero atom.
    const Scalar cross = rho * q0 * st.qhat * atom1.mderiv;
    const Scalar s2 =
        (Scalar(1) - rho) *
            detail::mean_m1_squared(std::sqrt(st.chihat), st.vhat, st.qhat, params, opts.quadrature_nodes) +
        rho * detail::mean_m1_squared(std::sqrt(gauss_var + st.chihat), st.vhat, st.qhat, params,
                                      opts.quadrature_nodes);

    Scalar mse_new = s2 - Scalar(2) * cross + rho * q0;
    Scalar v_new = std::max(m2_mean - s2, Scalar(0));
    if (mse_new < Scalar(0)) mse_new = 0;

    if (d > Scalar(0) && have_prev) {
      mse_new = (Scalar(1) - d) * mse_new + d * prev_mse;
      v_new = (Scalar(1) - d) * v_new + d * prev_v;
    }
    Scalar chi_damped = chi_new;
    if (d > Scalar(0) && have_prev) chi_damped = (Scalar(1) - d) * chi_new + d * prev_chi;

    const ResamplingMoments<Scalar> f = poisson_moments(chi_damped, mu_b);
    const Scalar qhat_new = alpha * f.f1;
    const Scalar chihat_new = alpha * f.f1 * f.f1 * (mse_new + delta);
    const Scalar vhat_new =
        infinite_mu ? Scalar(0) : alpha * (f.f2 * v_new + (f.f2 - f.f1 * f.f1) * (mse_new + delta));

    if (!std::isfinite(mse_new) || !std::isfinite(chi_damped) || !std::isfinite(v_new) ||
        !std::isfinite(qhat_new) || !std::isfinite(chihat_new) || !std::isfinite(vhat_new) ||
        !(qhat_new > Scalar(0))) {
      st.status = SolveStatus::Diverged;
      return st;
    }

    bool converged = false;
    if (have_prev) {
      auto rel = [](Scalar next, Scalar prev) {
        const Scalar base = std::max(std::abs(prev), Scalar(1e-12));
        return std::abs(next - prev) / base;
      };
      converged = rel(mse_new, prev_mse) < opts.tol && rel(chi_damped, prev_chi) < opts.tol &&
                  rel(v_new, prev_v) < opts.tol;
    }

    st.mse = mse_new;
    st.chi = chi_damped;
    st.v = v_new;
    st.f1 = f.f1;
    st.f2 = f.f2;
    st.qhat = qhat_new;
    st.chihat = chihat_new;
    st.vhat = vhat_new;
    st.iter = t + 1;
    if (trajectory) trajectory->push_back(st);
    prev_mse = mse_new;
    prev_chi = chi_damped;
    prev_v = v_new;
    have_prev = true;
    if (converged) {
      st.status = SolveStatus::Converged;
      return st;
    }
  }
  st.status = SolveStatus::MaxIters;
  return st;
}

template <typename Scalar>
inline Scalar se_variance(const SeState<Scalar>& state) {
  if (!(state.qhat > Scalar(0))) throw std::invalid_argument("se_variance: qhat must be positive");
  return state.chihat / (state.qhat * state.qhat);
}

}  // namespace ampr
