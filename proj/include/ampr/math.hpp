#pragma once

// Scalar Gaussian utilities shared by the denoiser kernels, the state
// evolution quadrature and the diagnostics: pdf/cdf, truncated first and
// second moments of the upper tail, inverse cdf, and Gauss-Hermite rules
// for expectations against a standard normal.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>

namespace ampr {

template <typename Scalar>
using Vector = Eigen::Vector<Scalar, Eigen::Dynamic>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
inline Scalar normal_pdf(Scalar z) {
  const Scalar inv_sqrt_2pi = Scalar(0.3989422804014326779399461);
  return inv_sqrt_2pi * std::exp(Scalar(-0.5) * z * z);
}

// P(eta > z) for eta ~ N(0,1); erfc keeps full relative accuracy far out.
template <typename Scalar>
inline Scalar normal_tail(Scalar z) {
  const Scalar inv_sqrt2 = Scalar(0.7071067811865475244008444);
  return Scalar(0.5) * std::erfc(z * inv_sqrt2);
}

template <typename Scalar>
inline Scalar normal_cdf(Scalar z) {
  return normal_tail(-z);
}

namespace detail {

// Mills ratio P(eta > z) / pdf(z) by the Laplace continued fraction,
// accurate to machine precision for z >= 1.
template <typename Scalar>
inline Scalar mills_ratio_cf(Scalar z) {
  Scalar acc = 0;
  for (int k = 64; k >= 1; --k) acc = Scalar(k) / (z + acc);
  return Scalar(1) / (z + acc);
}

}  // namespace detail

// Moments of eta ~ N(0,1) restricted to the upper tail {eta > z}:
//   p  = P(eta > z)
//   e1 = E[(eta - z) 1{eta > z}]
//   e2 = E[(eta - z)^2 1{eta > z}]
// The direct expressions cancel badly for large z (relative error ~ z^4 eps),
// so the scaled tail via the Mills ratio takes over past z = 8.
template <typename Scalar>
struct TailMoments {
  Scalar p;
  Scalar e1;
  Scalar e2;
};

template <typename Scalar>
inline TailMoments<Scalar> normal_upper_tail_moments(Scalar z) {
  if (z > Scalar(39)) return {0, 0, 0};  // pdf underflows, tail is exactly 0 in double
  const Scalar phi = normal_pdf(z);
  Scalar p, e1, e2;
  if (z <= Scalar(8)) {
    p = normal_tail(z);
    e1 = phi - z * p;
    e2 = (Scalar(1) + z * z) * p - z * phi;
  } else {
    const Scalar r = detail::mills_ratio_cf(z);
    p = phi * r;
    e1 = phi * (Scalar(1) - z * r);
    e2 = phi * ((Scalar(1) + z * z) * r - z);
  }
  if (e1 < Scalar(0)) e1 = 0;
  if (e2 < Scalar(0)) e2 = 0;
  return {p, e1, e2};
}

// Inverse standard normal cdf (Acklam's rational approximation polished by
// one Halley step through erfc); good to ~1 ulp for p away from 0 and 1.
template <typename Scalar>
inline Scalar normal_quantile(Scalar p) {
  if (!(p > Scalar(0)) || !(p < Scalar(1)))
    throw std::invalid_argument("normal_quantile: p must lie in (0,1)");
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double pd = static_cast<double>(p);
  const double plow = 0.02425;
  double x;
  if (pd < plow) {
    const double q = std::sqrt(-2.0 * std::log(pd));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (pd <= 1.0 - plow) {
    const double q = pd - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-pd));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement against the exact cdf.
  const double e = 0.5 * std::erfc(-x / 1.4142135623730950488) - pd;
  const double u = e * 2.5066282746310005024 * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return static_cast<Scalar>(x);
}

// Gauss-Hermite rule rotated to the standard normal weight: returns nodes s_k
// and weights w_k with sum_k w_k f(s_k) ~ E[f(S)], S ~ N(0,1), sum w_k = 1.
// Golub-Welsch on the Jacobi matrix of the probabilists' Hermite family.
template <typename Scalar>
struct QuadratureRule {
  Vector<Scalar> nodes;
  Vector<Scalar> weights;
};

template <typename Scalar>
inline QuadratureRule<Scalar> gauss_hermite_normal(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite_normal: n must be >= 1");
  Vector<Scalar> diag = Vector<Scalar>::Zero(n);
  Vector<Scalar> sub(n > 1 ? n - 1 : 0);
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(Scalar(k));
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  QuadratureRule<Scalar> rule;
  rule.nodes = es.eigenvalues();
  rule.weights.resize(n);
  for (int k = 0; k < n; ++k) {
    const Scalar q0 = es.eigenvectors()(0, k);
    rule.weights[k] = q0 * q0;
  }
  return rule;
}

// Shared cache: the sweep evaluates thousands of SE fixed points with the
// same node count, and the 120-point eigen-decomposition is not free.
template <typename Scalar = double>
inline const QuadratureRule<Scalar>& cached_gauss_hermite(int n) {
  static std::map<int, QuadratureRule<Scalar>> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, gauss_hermite_normal<Scalar>(n)).first;
  return it->second;
}

// Compensated accumulator for the Poisson series and test oracles.
template <typename Scalar>
class KahanSum {
 public:
  void add(Scalar x) {
    const Scalar y = x - carry_;
    const Scalar t = sum_ + y;
    carry_ = (t - sum_) - y;
    sum_ = t;
  }
  Scalar value() const { return sum_; }

 private:
  Scalar sum_ = 0;
  Scalar carry_ = 0;
};

}  // namespace ampr
