#pragma once

// End-to-end experiment drivers shared by the CLI and the integration
// suites: one bootstrap-averaged run compared against per-realization
// solver outputs, as a Q-Q residual table (single realization) and as a
// scatter regression against the empirical resampling mean (K realizations).

#include "ampr/ampr_solver.hpp"
#include "ampr/diagnostics.hpp"
#include "ampr/gamp_solver.hpp"
#include "ampr/synthetic_data.hpp"

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

namespace ampr {

// Seed for the j-th bootstrap weight realization derived from the master
// seed; shared by the pipeline and the CLI so single realizations can be
// reproduced in isolation.
inline std::uint64_t bootstrap_seed(std::uint64_t master_seed, int realization) {
  return splitmix64(master_seed ^ 0x626f6f7473747261ULL) + static_cast<std::uint64_t>(realization);
}

struct QqPipelineConfig {
  Eigen::Index n = 4096;
  double alpha = 0.8;
  double delta = 0.25;
  double rho = 0.1;
  double lambda = 0.1;
  double gamma = 0.5;
  double mu_b = 0.5;
  std::uint64_t seed = 1;
  int realizations = 2048;  // K
  int threads = 1;
  SolverOptions<double> ampr_opts{};
  double gamp_tol = 1e-7;
  int gamp_max_iters = 500;
  int block_size = 256;  // realizations per batched solve; fixed partition keeps results thread-count independent
};

struct QqPipelineResult {
  AmprState<double> ampr;
  UnbiasedEstimate<double> estimate;
  QqTable<double> qq;                 // r_hat - r_hat_g(c_0) against N(0, vhat/qhat^2)
  Eigen::VectorXd mean_r_hat_g;       // empirical resampling mean over K realizations
  LinearFit<double> scatter_fit;      // regression of r_hat on the mean
  int realizations_used = 0;
  int realizations_failed = 0;
};

inline QqPipelineResult run_qq_pipeline(const QqPipelineConfig& cfg) {
  if (cfg.realizations < 1) throw std::invalid_argument("run_qq_pipeline: need at least one realization");
  const SignalPrior<double> prior{cfg.rho};
  const DenoiserParams<double> params{cfg.lambda, cfg.gamma};
  const ProblemInstance<double> instance =
      sample_instance<double>(cfg.n, cfg.alpha, cfg.delta, prior, cfg.seed);

  QqPipelineResult out;
  out.ampr = run_ampr(instance, params, cfg.mu_b, cfg.ampr_opts);
  if (out.ampr.status == SolveStatus::Diverged)
    throw SolverDivergedError("run_qq_pipeline: bootstrap-averaged solver diverged");
  out.estimate = unbiased_estimate(out.ampr, instance.alpha_n());

  SolverOptions<double> gamp_opts;
  gamp_opts.tol = cfg.gamp_tol;
  gamp_opts.max_iters = cfg.gamp_max_iters;
  gamp_opts.init_h = out.ampr.h;  // warm start near the averaged fixed point
  gamp_opts.init_qhat = out.ampr.qhat;

  const int k_total = cfg.realizations;
  const int bs = std::max(1, cfg.block_size);
  const int blocks = (k_total + bs - 1) / bs;
  std::vector<Eigen::VectorXd> block_sums(static_cast<size_t>(blocks));
  std::vector<int> block_used(static_cast<size_t>(blocks), 0);
  std::vector<int> block_failed(static_cast<size_t>(blocks), 0);
  Eigen::VectorXd first_r_hat_g;

  std::atomic<int> next_block{0};
  auto worker = [&]() {
    for (;;) {
      const int b = next_block.fetch_add(1);
      if (b >= blocks) return;
      const int lo = b * bs;
      const int hi = std::min(k_total, lo + bs);
      const Eigen::Index cols = hi - lo;
      Eigen::MatrixXd ratios(instance.m, cols);
      for (int j = lo; j < hi; ++j)
        ratios.col(j - lo) =
            sample_bootstrap_weights(instance.m, cfg.mu_b, bootstrap_seed(cfg.seed, j)).ratios();
      const GampBatchResult<double> batch = run_gamp_batch(instance, params, ratios, gamp_opts);
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(instance.n);
      int used = 0, failed = 0;
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (batch.status[static_cast<size_t>(j)] == SolveStatus::Diverged || !(batch.qhat[j] > 0)) {
          ++failed;
          continue;
        }
        const Eigen::VectorXd r_hat_g = batch.h.col(j) / batch.qhat[j];
        sum += r_hat_g;
        ++used;
        if (lo + j == 0) first_r_hat_g = r_hat_g;
      }
      block_sums[static_cast<size_t>(b)] = sum;
      block_used[static_cast<size_t>(b)] = used;
      block_failed[static_cast<size_t>(b)] = failed;
    }
  };

  if (cfg.threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < cfg.threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Fixed block order keeps the accumulated mean independent of scheduling.
  Eigen::VectorXd total = Eigen::VectorXd::Zero(instance.n);
  for (int b = 0; b < blocks; ++b) {
    if (block_sums[static_cast<size_t>(b)].size()) total += block_sums[static_cast<size_t>(b)];
    out.realizations_used += block_used[static_cast<size_t>(b)];
    out.realizations_failed += block_failed[static_cast<size_t>(b)];
  }
  if (out.realizations_used == 0)
    throw SolverDivergedError("run_qq_pipeline: every realization diverged");
  out.mean_r_hat_g = total / out.realizations_used;

  if (first_r_hat_g.size() == 0)
    throw SolverDivergedError("run_qq_pipeline: first realization diverged, no Q-Q residual");
  const Eigen::VectorXd residual = out.estimate.r_hat - first_r_hat_g;
  out.qq = qq_against_normal<double>(residual, out.estimate.vhat_over_qhat2);
  out.scatter_fit = least_squares_fit<double>(out.mean_r_hat_g, out.estimate.r_hat);
  return out;
}

}  // namespace ampr
