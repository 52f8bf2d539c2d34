#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ampr/ampr_solver.hpp"
#include "ampr/gamp_solver.hpp"
#include "ampr/pipelines.hpp"
#include "ampr/synthetic_data.hpp"

#include <cmath>
#include <future>
#include <limits>
#include <vector>

using namespace ampr;

namespace {
const double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("a dominating threshold pins the fixed point at zero") {
  const auto inst = sample_instance<double>(64, 0.9, 0.2, SignalPrior<double>{0.2}, 2);
  DenoiserParams<double> p{1e4, 1.0};
  SolverOptions<double> opts;
  const auto st = run_ampr(inst, p, 0.5, opts);
  CHECK(st.status == SolveStatus::Converged);
  CHECK(st.w_hat.cwiseAbs().maxCoeff() == 0.0);
  CHECK(st.v == 0.0);
}

TEST_CASE("mu_b = inf reproduces uniform-weight gamp") {
  DenoiserParams<double> p{0.1, 0.5};
  SolverOptions<double> opts;
  opts.tol = 1e-10;
  opts.max_iters = 2000;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto inst = sample_instance<double>(256, 0.8, 0.25, SignalPrior<double>{0.1}, seed);
    std::vector<AmprTracePoint<double>> trace;
    const auto am = run_ampr(inst, p, kInf, opts, &trace);
    const auto gm = run_gamp(inst, p, opts);
    REQUIRE(am.status == SolveStatus::Converged);
    REQUIRE(gm.status == SolveStatus::Converged);
    CHECK((am.w_hat - gm.w_hat).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(std::abs(am.qhat - gm.qhat) < 1e-6);
    CHECK(std::abs(am.chi - gm.chi) < 1e-6);
    for (const auto& pt : trace) {
      CHECK(pt.vhat == 0.0);
      CHECK(pt.v == 0.0);
    }
  }
}

TEST_CASE("identical runs are bit-identical") {
  const auto inst = sample_instance<double>(128, 0.8, 0.25, SignalPrior<double>{0.1}, 5);
  DenoiserParams<double> p{0.1, 0.5};
  SolverOptions<double> opts;
  const auto a = run_ampr(inst, p, 0.5, opts);
  const auto b = run_ampr(inst, p, 0.5, opts);
  CHECK(a.h == b.h);
  CHECK(a.w_hat == b.w_hat);
  CHECK(a.vhat == b.vhat);
  CHECK(a.iter == b.iter);
}

TEST_CASE("first-iteration field variance matches its predicted scale") {
  // With w_hat0 = 0 the field h1/qhat1 - w0 has variance (E0 + delta)/alpha.
  const double alpha = 0.8, delta = 0.25, rho = 0.1;
  const auto inst = sample_instance<double>(4096, alpha, delta, SignalPrior<double>{rho}, 3);
  DenoiserParams<double> p{0.1, 0.5};
  SolverOptions<double> opts;
  opts.max_iters = 1;
  const auto st = run_ampr(inst, p, 0.5, opts);
  const Eigen::VectorXd noise = st.h / st.qhat - inst.w0;
  const double emp = noise.squaredNorm() / inst.n;
  const double predicted = (rho + delta) / alpha;
  CHECK(std::abs(emp / predicted - 1.0) < 0.1);
}

TEST_CASE("unbiased_estimate fields") {
  AmprState<double> st;
  st.h = Eigen::VectorXd::Constant(10, 1.0);
  st.a = Eigen::VectorXd::Zero(8);
  st.qhat = 2.0;
  st.vhat = 0.5;
  const auto est = unbiased_estimate(st, 0.8);
  CHECK(est.sigma2 == 0.0);
  CHECK(est.vhat_over_qhat2 == doctest::Approx(0.125));
  CHECK(est.r_hat == (st.h / 2.0).eval());
  st.qhat = 0.0;
  CHECK_THROWS_AS(unbiased_estimate(st, 0.8), std::invalid_argument);
}

TEST_CASE("near-exact recovery when heavily sampled and noiseless") {
  const auto inst = sample_instance<double>(2048, 5.0, 0.0, SignalPrior<double>{0.1}, 4);
  DenoiserParams<double> p{1e-6, 0.5};
  SolverOptions<double> opts;
  const auto st = run_ampr(inst, p, 1.0, opts);
  REQUIRE(st.status == SolveStatus::Converged);
  const auto est = unbiased_estimate(st, inst.alpha_n());
  CHECK(est.sigma2 < 1e-3);
}

TEST_CASE("bootstrap statistics reduce to the pointwise denoiser at vhat = 0") {
  const auto inst = sample_instance<double>(128, 0.8, 0.25, SignalPrior<double>{0.1}, 6);
  DenoiserParams<double> p{0.1, 0.5};
  SolverOptions<double> opts;
  const auto st = run_ampr(inst, p, kInf, opts);
  REQUIRE(st.status == SolveStatus::Converged);
  REQUIRE(st.vhat == 0.0);
  const auto mean = bootstrap_statistics(st, BootstrapStat::Mean);
  for (Eigen::Index i = 0; i < inst.n; ++i)
    CHECK(mean[i] == denoise(st.h[i], st.qhat, p));
}

TEST_CASE("bootstrap variance is nonnegative") {
  const auto inst = sample_instance<double>(256, 0.8, 0.25, SignalPrior<double>{0.1}, 7);
  DenoiserParams<double> p{0.1, 0.5};
  SolverOptions<double> opts;
  const auto st = run_ampr(inst, p, 0.5, opts);
  REQUIRE(st.status == SolveStatus::Converged);
  const auto m1 = bootstrap_statistics(st, BootstrapStat::Mean);
  const auto m2 = bootstrap_statistics(st, BootstrapStat::SecondMoment);
  CHECK(((m2.array() - m1.array().square()) >= -1e-12).all());
}

TEST_CASE("bootstrap statistics match the resampled convex-solver average" *
          doctest::timeout(600)) {
  // Brute-force oracle: solve the weighted objective for K sampled weight
  // vectors with coordinate descent and average. Desk-scale version of the
  // reference experiment (smaller N, fewer realizations).
  const Eigen::Index n = 512;
  const int k_real = 1024;
  const auto inst = sample_instance<double>(n, 0.8, 0.25, SignalPrior<double>{0.1}, 11);
  DenoiserParams<double> p{0.1, 0.5};
  const double mu_b = 0.5;
  SolverOptions<double> opts;
  const auto st = run_ampr(inst, p, mu_b, opts);
  REQUIRE(st.status == SolveStatus::Converged);
  const auto predicted = bootstrap_statistics(st, BootstrapStat::Mean);

  const unsigned workers = std::max(2u, std::thread::hardware_concurrency());
  std::vector<std::future<Eigen::VectorXd>> futures;
  for (unsigned t = 0; t < workers; ++t) {
    futures.push_back(std::async(std::launch::async, [&, t]() {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
      for (int j = static_cast<int>(t); j < k_real; j += static_cast<int>(workers)) {
        const auto bw = sample_bootstrap_weights(inst.m, mu_b, bootstrap_seed(11, j));
        const auto sol = solve_elastic_net_reference(inst, p, bw.ratios().eval(), 1e-9);
        sum += sol.w;
      }
      return sum;
    }));
  }
  Eigen::VectorXd empirical = Eigen::VectorXd::Zero(n);
  for (auto& f : futures) empirical += f.get();
  empirical /= k_real;

  const double rms = std::sqrt((predicted - empirical).squaredNorm() / n);
  CHECK(rms < 0.02);
}

TEST_CASE("solver option validation") {
  const auto inst = sample_instance<double>(32, 1.0, 0.1, SignalPrior<double>{0.2}, 3);
  DenoiserParams<double> p{0.1, 0.5};
  SolverOptions<double> opts;
  CHECK_THROWS_AS(run_ampr(inst, p, 0.0, opts), std::invalid_argument);
  CHECK_THROWS_AS(run_ampr(inst, p, -1.0, opts), std::invalid_argument);
  opts.init_h = Eigen::VectorXd::Zero(7);
  CHECK_THROWS_AS(run_ampr(inst, p, 0.5, opts), std::invalid_argument);
}
