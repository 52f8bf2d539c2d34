#pragma once

// Closed-form scalar kernels shared by the iterative solvers and the state
// evolution: the elastic net denoiser g and g', their moments under Gaussian
// smoothing of the input, and the Poisson resampling moments f1, f2.

#include "ampr/math.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ampr {

// Elastic net hyperparameters. The penalty is
//   lambda * (gamma |w| + (1 - gamma)/2 w^2),
// so gamma = 1 is the l1 case and gamma = 0 the ridge case.
template <typename Scalar>
struct DenoiserParams {
  Scalar lambda;
  Scalar gamma;

  Scalar threshold() const { return lambda * gamma; }
  Scalar slope_denominator(Scalar qhat) const { return qhat + lambda * (Scalar(1) - gamma); }

  // lambda = 0 is admitted (the denoiser degenerates to h / qhat); the
  // optimizer keeps its own strictly positive floor.
  void validate() const {
    if (!(lambda >= Scalar(0)) || !std::isfinite(lambda))
      throw std::invalid_argument("DenoiserParams: lambda must be nonnegative and finite");
    if (!(gamma >= Scalar(0)) || !(gamma <= Scalar(1)))
      throw std::invalid_argument("DenoiserParams: gamma must lie in [0,1]");
  }
};

// Poisson expectations of r/(1 + r chi) and its square, r = c / mu_B.
template <typename Scalar>
struct ResamplingMoments {
  Scalar f1;
  Scalar f2;
};

// Moments of the denoiser output under u = h + sqrt(vhat) eta, eta ~ N(0,1):
//   m1 = E[g(u)], m2 = E[g(u)^2], mderiv = E[g'(u)].
template <typename Scalar>
struct SmoothedMoments {
  Scalar m1;
  Scalar m2;
  Scalar mderiv;
};

namespace detail {

template <typename Scalar>
inline void check_denoiser_args(Scalar h, Scalar qhat) {
  if (!std::isfinite(h)) throw std::invalid_argument("denoise: h must be finite");
  if (!(qhat > Scalar(0)) || !std::isfinite(qhat))
    throw std::invalid_argument("denoise: qhat must be positive and finite");
}

}  // namespace detail

// Soft-threshold-with-shrinkage denoiser. Ties |h| = lambda gamma resolve to
// the zero branch.
template <typename Scalar>
inline Scalar denoise(Scalar h, Scalar qhat, const DenoiserParams<Scalar>& params) {
  detail::check_denoiser_args(h, qhat);
  const Scalar thr = params.threshold();
  if (std::abs(h) <= thr) return Scalar(0);
  const Scalar shifted = h > Scalar(0) ? h - thr : h + thr;
  return shifted / params.slope_denominator(qhat);
}

template <typename Scalar>
inline Scalar denoise_deriv(Scalar h, Scalar qhat, const DenoiserParams<Scalar>& params) {
  detail::check_denoiser_args(h, qhat);
  if (std::abs(h) <= params.threshold()) return Scalar(0);
  return Scalar(1) / params.slope_denominator(qhat);
}

namespace detail {

// Truncated moments of the active region u > thr for u ~ N(h, sigma^2):
//   p  = P(u > thr)
//   a1 = E[(u - thr) 1{u > thr}]
//   a2 = E[(u - thr)^2 1{u > thr}]
// Saturated regimes bypass the z-scaled formulas so that sigma -> 0 never
// overflows z^2.
template <typename Scalar>
struct ActiveRegion {
  Scalar p;
  Scalar a1;
  Scalar a2;
};

template <typename Scalar>
inline ActiveRegion<Scalar> active_region_moments(Scalar h, Scalar sigma, Scalar thr) {
  const Scalar z = (thr - h) / sigma;
  if (z >= Scalar(39)) return {0, 0, 0};
  if (z <= Scalar(-39)) {
    const Scalar d = h - thr;
    return {Scalar(1), d, d * d + sigma * sigma};
  }
  const TailMoments<Scalar> t = normal_upper_tail_moments(z);
  return {t.p, sigma * t.e1, sigma * sigma * t.e2};
}

}  // namespace detail

// Closed-form Gaussian smoothing of (g, g^2, g'). At vhat = 0 this reduces
// exactly to the pointwise denoiser values.
template <typename Scalar>
inline SmoothedMoments<Scalar> smoothed_moments(Scalar h, Scalar vhat, Scalar qhat,
                                                const DenoiserParams<Scalar>& params) {
  detail::check_denoiser_args(h, qhat);
  if (!(vhat >= Scalar(0)) || !std::isfinite(vhat))
    throw std::invalid_argument("smoothed_moments: vhat must be nonnegative and finite");
  if (vhat == Scalar(0)) {
    const Scalar g = denoise(h, qhat, params);
    return {g, g * g, denoise_deriv(h, qhat, params)};
  }
  const Scalar sigma = std::sqrt(vhat);
  const Scalar thr = params.threshold();
  const Scalar den = params.slope_denominator(qhat);
  // Upper active region u > thr, and by u -> -u symmetry the lower region
  // u < -thr is the upper region of the sign-flipped input.
  const auto up = detail::active_region_moments(h, sigma, thr);
  const auto lo = detail::active_region_moments(-h, sigma, thr);
  SmoothedMoments<Scalar> m;
  m.m1 = (up.a1 - lo.a1) / den;
  m.m2 = (up.a2 + lo.a2) / (den * den);
  m.mderiv = (up.p + lo.p) / den;
  return m;
}

// E_c[ r/(1+r chi) ] and E_c[ (r/(1+r chi))^2 ] for r = c/mu_B,
// c ~ Poisson(mu_B). mu_B = +inf is the deterministic limit r = 1.
// Finite mu_B is summed as a truncated series: exact to machine precision,
// no sampling noise.
template <typename Scalar>
inline ResamplingMoments<Scalar> poisson_moments(Scalar chi, Scalar mu_b) {
  if (!(chi >= Scalar(0)) || !std::isfinite(chi))
    throw std::invalid_argument("poisson_moments: chi must be nonnegative and finite");
  if (std::isnan(mu_b) || !(mu_b > Scalar(0)))
    throw std::invalid_argument("poisson_moments: mu_b must be positive");
  if (std::isinf(mu_b)) {
    const Scalar f1 = Scalar(1) / (Scalar(1) + chi);
    return {f1, f1 * f1};
  }
  const double mu = static_cast<double>(mu_b);
  const double x = static_cast<double>(chi);
  KahanSum<double> s1, s2;
  auto accumulate = [&](double c, double pmf) {
    const double r = c / mu;
    const double g = r / (1.0 + r * x);
    s1.add(pmf * g);
    s2.add(pmf * g * g);
  };
  const long long cap = static_cast<long long>(std::ceil(mu + 12.0 * std::sqrt(mu) + 20.0));
  if (mu <= 32.0) {
    // Upward pmf recurrence from c = 0; stop once the remaining tail mass
    // is below 1e-16.
    double pmf = std::exp(-mu);
    KahanSum<double> mass;
    for (long long c = 0; c <= cap; ++c) {
      accumulate(static_cast<double>(c), pmf);
      mass.add(pmf);
      if (c >= static_cast<long long>(mu) && mass.value() >= 1.0 - 1e-16) break;
      pmf *= mu / static_cast<double>(c + 1);
    }
  } else {
    // Large mu: the pmf at c = 0 underflows, so sum a +-12 sigma window with
    // log-space pmf evaluation.
    const long long lo =
        std::max<long long>(0, static_cast<long long>(std::floor(mu - 12.0 * std::sqrt(mu) - 20.0)));
    const double logmu = std::log(mu);
    for (long long c = lo; c <= cap; ++c) {
      const double cd = static_cast<double>(c);
      const double logp = cd * logmu - mu - std::lgamma(cd + 1.0);
      if (logp < -740.0) continue;
      accumulate(cd, std::exp(logp));
    }
  }
  return {static_cast<Scalar>(s1.value()), static_cast<Scalar>(s2.value())};
}

}  // namespace ampr
