#pragma once

// Synthetic measurement instances y = X w0 + eps with Gauss-Bernoulli
// signals, plus Poisson bootstrap replication counts.

#include "ampr/math.hpp"
#include "ampr/rng.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace ampr {

// Gauss-Bernoulli signal prior: each coordinate is nonzero with probability
// rho, and nonzero values are N(0, nonzero_variance).
template <typename Scalar>
struct SignalPrior {
  Scalar rho;
  Scalar nonzero_variance = Scalar(1);

  Scalar second_moment() const { return rho * nonzero_variance; }

  void validate() const {
    if (!(rho > Scalar(0)) || !(rho < Scalar(1)))
      throw std::invalid_argument("SignalPrior: rho must lie in (0,1)");
    if (!(nonzero_variance > Scalar(0)))
      throw std::invalid_argument("SignalPrior: nonzero_variance must be positive");
  }
};

// One sampled realization of the measurement model. X entries are
// i.i.d. N(0, 1/N) so that X^T X ~ alpha I without further normalization.
template <typename Scalar>
struct ProblemInstance {
  Matrix<Scalar> x;
  Vector<Scalar> y;
  Vector<Scalar> w0;
  Scalar delta = 0;
  Eigen::Index m = 0;
  Eigen::Index n = 0;

  Scalar alpha_n() const { return Scalar(m) / Scalar(n); }
};

struct BootstrapWeights {
  Eigen::VectorXi c;
  double mu_b = 1.0;

  // Per-sample weights r_mu = c_mu / mu_B entering the resampled objective.
  Eigen::VectorXd ratios() const { return c.cast<double>() / mu_b; }
};

template <typename Scalar = double>
inline ProblemInstance<Scalar> sample_instance(Eigen::Index n, Scalar alpha, Scalar delta,
                                               const SignalPrior<Scalar>& prior,
                                               std::uint64_t seed) {
  prior.validate();
  if (n < 1) throw std::invalid_argument("sample_instance: n must be >= 1");
  if (!(alpha > Scalar(0))) throw std::invalid_argument("sample_instance: alpha must be positive");
  if (!(delta >= Scalar(0))) throw std::invalid_argument("sample_instance: delta must be nonnegative");
  const Eigen::Index m = static_cast<Eigen::Index>(std::llround(static_cast<double>(alpha) * n));
  if (m < 1) throw std::invalid_argument("sample_instance: round(alpha*n) must be >= 1");

  ProblemInstance<Scalar> inst;
  inst.m = m;
  inst.n = n;
  inst.delta = delta;

  // Independent streams per component: the design, the signal and the noise
  // stay fixed when only one of the other parameters changes.
  Rng rng_x(seed, 1), rng_w(seed, 2), rng_eps(seed, 3);

  const Scalar col_scale = Scalar(1) / std::sqrt(Scalar(n));
  inst.x.resize(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) inst.x(i, j) = static_cast<Scalar>(rng_x.normal()) * col_scale;

  const Scalar sd_w = std::sqrt(prior.nonzero_variance);
  inst.w0.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (rng_w.uniform() < static_cast<double>(prior.rho))
      inst.w0[j] = static_cast<Scalar>(rng_w.normal()) * sd_w;
    else
      inst.w0[j] = Scalar(0);
  }

  inst.y = inst.x * inst.w0;
  if (delta > Scalar(0)) {
    const Scalar sd_eps = std::sqrt(delta);
    for (Eigen::Index i = 0; i < m; ++i) inst.y[i] += static_cast<Scalar>(rng_eps.normal()) * sd_eps;
  }
  return inst;
}

inline BootstrapWeights sample_bootstrap_weights(Eigen::Index m, double mu_b, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("sample_bootstrap_weights: m must be >= 1");
  if (!(mu_b > 0) || std::isinf(mu_b))
    throw std::invalid_argument("sample_bootstrap_weights: mu_b must be positive and finite");
  BootstrapWeights w;
  w.mu_b = mu_b;
  w.c.resize(m);
  Rng rng(seed, 4);
  for (Eigen::Index i = 0; i < m; ++i) w.c[i] = static_cast<int>(rng.poisson(mu_b));
  return w;
}

}  // namespace ampr
