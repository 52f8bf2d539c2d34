#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ampr/gamp_solver.hpp"
#include "ampr/synthetic_data.hpp"

#include <cmath>

using namespace ampr;

namespace {

// Subgradient residual of the weighted elastic net objective at w; the
// optimality oracle used against both solvers.
double kkt_violation(const ProblemInstance<double>& inst, const DenoiserParams<double>& p,
                     const Eigen::VectorXd& weights, const Eigen::VectorXd& w) {
  const Eigen::VectorXd r = weights.size() ? weights : Eigen::VectorXd::Ones(inst.m);
  const Eigen::VectorXd grad =
      -inst.x.transpose() * (r.array() * (inst.y - inst.x * w).array()).matrix() +
      p.lambda * (1.0 - p.gamma) * w;
  const double l1 = p.lambda * p.gamma;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w[i] > 0.0)
      worst = std::max(worst, std::abs(grad[i] + l1));
    else if (w[i] < 0.0)
      worst = std::max(worst, std::abs(grad[i] - l1));
    else
      worst = std::max(worst, std::max(0.0, std::abs(grad[i]) - l1));
  }
  return worst;
}

double objective(const ProblemInstance<double>& inst, const DenoiserParams<double>& p,
                 const Eigen::VectorXd& weights, const Eigen::VectorXd& w) {
  const Eigen::VectorXd r = weights.size() ? weights : Eigen::VectorXd::Ones(inst.m);
  const Eigen::VectorXd resid = inst.y - inst.x * w;
  double obj = 0.5 * (r.array() * resid.array().square()).sum();
  obj += p.lambda * (p.gamma * w.cwiseAbs().sum() + 0.5 * (1.0 - p.gamma) * w.squaredNorm());
  return obj;
}

}  // namespace

TEST_CASE("coordinate descent: large l1 penalty kills every coordinate") {
  const auto inst = sample_instance<double>(32, 1.5, 0.1, SignalPrior<double>{0.3}, 2);
  DenoiserParams<double> p{1e3, 1.0};
  const auto sol = solve_elastic_net_reference(inst, p, Eigen::VectorXd());
  CHECK(sol.converged);
  CHECK(sol.w.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("coordinate descent matches exhaustive grid search at N = 2") {
  // Hand-built instance; the grid oracle scans w in [-3,3]^2 at 1e-3 steps.
  ProblemInstance<double> inst;
  inst.n = 2;
  inst.m = 3;
  inst.x.resize(3, 2);
  inst.x << 0.8, 0.3, -0.2, 0.6, 0.5, -0.4;
  inst.w0 = Eigen::Vector2d(1.0, -0.5);
  inst.y = Eigen::Vector3d(1.0, -0.3, 0.2);
  inst.delta = 0.0;
  DenoiserParams<double> p{0.1, 1.0};

  Eigen::Vector2d best(0, 0);
  double best_obj = std::numeric_limits<double>::infinity();
  for (int i = -3000; i <= 3000; ++i)
    for (int j = -3000; j <= 3000; ++j) {
      Eigen::VectorXd w(2);
      w << i / 1000.0, j / 1000.0;
      const double obj = objective(inst, p, Eigen::VectorXd(), w);
      if (obj < best_obj) {
        best_obj = obj;
        best = w;
      }
    }
  const auto sol = solve_elastic_net_reference(inst, p, Eigen::VectorXd());
  CHECK(sol.converged);
  CHECK(std::abs(sol.w[0] - best[0]) < 1.5e-3);
  CHECK(std::abs(sol.w[1] - best[1]) < 1.5e-3);
  CHECK(objective(inst, p, Eigen::VectorXd(), sol.w) <= best_obj + 1e-12);
}

TEST_CASE("coordinate descent satisfies the subgradient conditions") {
  const auto inst = sample_instance<double>(96, 0.7, 0.2, SignalPrior<double>{0.25}, 7);
  DenoiserParams<double> p{0.15, 0.6};
  SUBCASE("uniform weights") {
    const auto sol = solve_elastic_net_reference(inst, p, Eigen::VectorXd());
    CHECK(sol.converged);
    CHECK(kkt_violation(inst, p, Eigen::VectorXd(), sol.w) < 1e-8);
  }
  SUBCASE("poisson weights") {
    const auto bw = sample_bootstrap_weights(inst.m, 0.7, 19);
    const Eigen::VectorXd r = bw.ratios();
    const auto sol = solve_elastic_net_reference(inst, p, r);
    CHECK(sol.converged);
    CHECK(kkt_violation(inst, p, r, sol.w) < 1e-8);
  }
}

TEST_CASE("coordinate descent rejects an unregularized objective") {
  const auto inst = sample_instance<double>(16, 1.0, 0.0, SignalPrior<double>{0.3}, 1);
  DenoiserParams<double> p{0.0, 0.0};
  CHECK_THROWS_AS(solve_elastic_net_reference(inst, p, Eigen::VectorXd()), std::invalid_argument);
}

TEST_CASE("gamp with uniform weights reaches the convex optimum") {
  DenoiserParams<double> p{0.1, 0.5};
  SolverOptions<double> opts;
  opts.tol = 1e-10;
  opts.max_iters = 2000;
  for (std::uint64_t seed : {1, 2, 3}) {
    for (double alpha : {0.5, 0.8, 1.2}) {
      const auto inst = sample_instance<double>(256, alpha, 0.25, SignalPrior<double>{0.1}, seed);
      const auto st = run_gamp(inst, p, opts);
      REQUIRE(st.status == SolveStatus::Converged);
      const auto cd = solve_elastic_net_reference(inst, p, Eigen::VectorXd(), 1e-12);
      REQUIRE(cd.converged);
      const double rel = (st.w_hat - cd.w).norm() / cd.w.norm();
      CHECK(rel <= 1e-4);
    }
  }
}

TEST_CASE("gamp with all-zero weights returns the pure-penalty minimum") {
  const auto inst = sample_instance<double>(64, 0.9, 0.1, SignalPrior<double>{0.2}, 4);
  DenoiserParams<double> p{0.2, 1.0};
  SolverOptions<double> opts;
  const auto st = run_gamp(inst, p, Eigen::VectorXd::Zero(inst.m).eval(), opts);
  CHECK(st.status == SolveStatus::Converged);
  CHECK(st.w_hat.cwiseAbs().maxCoeff() == 0.0);
  // Zero residual side products: the data-driven variance vanishes.
  CHECK(st.a.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gamp_unbiased_estimate: zero residual means zero variance") {
  GampState<double> st;
  st.h = Eigen::VectorXd::Constant(8, 0.5);
  st.a = Eigen::VectorXd::Zero(6);
  st.qhat = 2.0;
  const auto est = gamp_unbiased_estimate(st, 0.75);
  CHECK(est.sigma2 == 0.0);
  CHECK(est.vhat_over_qhat2 == 0.0);
  CHECK(est.r_hat == (st.h / 2.0).eval());
}

TEST_CASE("gamp run is deterministic") {
  const auto inst = sample_instance<double>(128, 0.8, 0.25, SignalPrior<double>{0.1}, 6);
  DenoiserParams<double> p{0.1, 0.5};
  SolverOptions<double> opts;
  const auto a = run_gamp(inst, p, opts);
  const auto b = run_gamp(inst, p, opts);
  CHECK(a.w_hat == b.w_hat);
  CHECK(a.h == b.h);
  CHECK(a.qhat == b.qhat);
}

TEST_CASE("gamp input validation") {
  const auto inst = sample_instance<double>(32, 1.0, 0.1, SignalPrior<double>{0.2}, 3);
  DenoiserParams<double> p{0.1, 0.5};
  SolverOptions<double> opts;
  Eigen::VectorXd bad = Eigen::VectorXd::Ones(inst.m);
  bad[0] = -0.5;
  CHECK_THROWS_AS(run_gamp(inst, p, bad, opts), std::invalid_argument);
  CHECK_THROWS_AS(run_gamp(inst, p, Eigen::VectorXd::Ones(3).eval(), opts), std::invalid_argument);
  SolverOptions<double> bad_opts;
  bad_opts.damping = 1.0;
  CHECK_THROWS_AS(run_gamp(inst, p, bad_opts), std::invalid_argument);
}

TEST_CASE("batched gamp agrees with per-realization runs") {
  const auto inst = sample_instance<double>(192, 0.8, 0.25, SignalPrior<double>{0.1}, 8);
  DenoiserParams<double> p{0.1, 0.5};
  SolverOptions<double> opts;
  opts.tol = 1e-10;
  opts.max_iters = 3000;
  Eigen::MatrixXd ratios(inst.m, 3);
  for (int j = 0; j < 3; ++j)
    ratios.col(j) = sample_bootstrap_weights(inst.m, 0.5, 100 + j).ratios();
  for (double damping : {0.0, 0.3}) {
    opts.damping = damping;
    const auto batch = run_gamp_batch(inst, p, ratios, opts);
    for (int j = 0; j < 3; ++j) {
      REQUIRE(batch.status[j] == SolveStatus::Converged);
      const auto single = run_gamp(inst, p, ratios.col(j).eval(), opts);
      REQUIRE(single.status == SolveStatus::Converged);
      CHECK((batch.h.col(j) / batch.qhat[j] - single.h / single.qhat).cwiseAbs().maxCoeff() < 1e-7);
      CHECK(batch.qhat[j] == doctest::Approx(single.qhat).epsilon(1e-9));
    }
  }
}
