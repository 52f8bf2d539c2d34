#pragma once

// Shared option/result types for the message passing solvers.

#include "ampr/math.hpp"

#include <stdexcept>

namespace ampr {

enum class SolveStatus { Converged, MaxIters, Diverged };

// Raised by pipeline drivers when an underlying solver leaves the finite
// domain; iterative solvers themselves report divergence through the status
// field of their returned state.
struct SolverDivergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct SolverOptions {
  int max_iters = 1000;
  Scalar tol = Scalar(1e-8);       // relative fixed-point tolerance on w_hat
  Scalar damping = Scalar(0);      // blend factor kept on (w_hat, a, h)
  Scalar init_qhat = Scalar(1);
  Scalar init_vhat = Scalar(1);
  Vector<Scalar> init_h;           // empty means zero

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("SolverOptions: max_iters must be >= 1");
    if (!(tol > Scalar(0))) throw std::invalid_argument("SolverOptions: tol must be positive");
    if (!(damping >= Scalar(0)) || !(damping < Scalar(1)))
      throw std::invalid_argument("SolverOptions: damping must lie in [0,1)");
    if (!(init_qhat > Scalar(0)) || !(init_vhat > Scalar(0)))
      throw std::invalid_argument("SolverOptions: init_qhat and init_vhat must be positive");
  }
};

// h/Qhat viewed as a white-noise-corrupted copy of the signal, with its
// data-driven variance alpha <a^2> / Qhat^2 and the bootstrap component
// vhat / Qhat^2.
template <typename Scalar>
struct UnbiasedEstimate {
  Vector<Scalar> r_hat;
  Scalar sigma2 = 0;
  Scalar vhat_over_qhat2 = 0;
};

template <typename Scalar>
inline Scalar relative_change(const Vector<Scalar>& next, const Vector<Scalar>& prev) {
  const Scalar base = prev.norm();
  return (next - prev).norm() / (base > Scalar(1e-12) ? base : Scalar(1e-12));
}

}  // namespace ampr
