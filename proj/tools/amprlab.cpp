// amprlab: seeded experiment harness around the ampr library. Subcommands
// mirror the library surface: run-ampr, run-gamp, run-se, qq, optimize,
// sweep. Outputs are plain CSV/JSON written with round-trip-exact floats;
// re-running a command with the same configuration reproduces the files
// byte for byte.

#include "ampr/ampr_solver.hpp"
#include "ampr/diagnostics.hpp"
#include "ampr/gamp_solver.hpp"
#include "ampr/hyperopt.hpp"
#include "ampr/pipelines.hpp"
#include "ampr/state_evolution.hpp"
#include "ampr/synthetic_data.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using json = nlohmann::json;

constexpr int kSchemaVersion = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_mu_b(const std::string& s) {
  if (s == "inf" || s == "Inf" || s == "INF" || s == "infinity")
    return std::numeric_limits<double>::infinity();
  size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw CLI::ValidationError("mu_b", "expected a number or 'inf'");
  return v;
}

// Grid spec: either "lo:hi:count" (inclusive linspace) or a comma list.
std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  if (s.find(':') != std::string::npos) {
    double lo, hi;
    int count;
    if (std::sscanf(s.c_str(), "%lf:%lf:%d", &lo, &hi, &count) != 3 || count < 1)
      throw CLI::ValidationError("grid", "expected lo:hi:count");
    for (int i = 0; i < count; ++i)
      out.push_back(count == 1 ? lo : lo + (hi - lo) * i / (count - 1));
    return out;
  }
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  if (out.empty()) throw CLI::ValidationError("grid", "empty grid");
  return out;
}

ampr::GammaMode parse_gamma_mode(const std::string& s) {
  if (s == "free") return ampr::GammaMode::optimized();
  if (s.rfind("fixed:", 0) == 0) return ampr::GammaMode::fixed(std::stod(s.substr(6)));
  throw CLI::ValidationError("gamma_mode", "expected 'free' or 'fixed:<value>'");
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open output file: " + path);
  f << body;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

const char* status_name(ampr::SolveStatus s) {
  switch (s) {
    case ampr::SolveStatus::Converged: return "converged";
    case ampr::SolveStatus::MaxIters: return "max_iters";
    default: return "diverged";
  }
}

struct CommonArgs {
  std::uint64_t seed = 1;
  std::string out = "out";
  int threads = 1;
  std::string config_path;  // handled by the pre-parse expansion below
};

void add_common(CLI::App* cmd, CommonArgs& c) {
  cmd->add_option("--config", c.config_path, "flat key=value configuration file");
  cmd->add_option("--seed", c.seed, "master RNG seed")->envname("AMPRLAB_SEED");
  cmd->add_option("--out", c.out, "output path prefix")->envname("AMPRLAB_OUT");
  cmd->add_option("--threads", c.threads, "worker threads for sweep/qq")->envname("AMPRLAB_THREADS");
}

// Config keys become trailing --key value arguments unless the flag was
// given explicitly or the AMPRLAB_<KEY> environment variable is set, so the
// precedence is: command line, then environment, then config file.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  if (const char* env = std::getenv("AMPRLAB_CONFIG")) path = env;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size())
      path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0)
      path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream f(path);
  if (!f) throw CLI::ValidationError("config", "cannot open configuration file: " + path);
  std::string line;
  while (std::getline(f, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty() || key == "config") continue;
    const std::string flag = "--" + key;
    bool overridden = false;
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) overridden = true;
    std::string env_name = "AMPRLAB_";
    for (char ch : key) env_name += ch == '-' ? '_' : static_cast<char>(std::toupper(ch));
    if (std::getenv(env_name.c_str())) overridden = true;
    if (!overridden) {
      args.push_back(flag);
      args.push_back(value);
    }
  }
  return args;
}

struct InstanceArgs {
  Eigen::Index n = 0;
  double alpha = 0, delta = 0, rho = 0;
};

void add_instance(CLI::App* cmd, InstanceArgs& a) {
  cmd->add_option("--n", a.n, "signal dimension N")->required()->envname("AMPRLAB_N");
  cmd->add_option("--alpha", a.alpha, "measurement ratio M/N")->required()->envname("AMPRLAB_ALPHA");
  cmd->add_option("--delta", a.delta, "noise variance")->required()->envname("AMPRLAB_DELTA");
  cmd->add_option("--rho", a.rho, "density of nonzero signal coordinates")
      ->required()
      ->envname("AMPRLAB_RHO");
}

struct PenaltyArgs {
  double lambda = 0, gamma = 0;
};

void add_penalty(CLI::App* cmd, PenaltyArgs& p) {
  cmd->add_option("--lambda", p.lambda, "regularization strength")->required()->envname("AMPRLAB_LAMBDA");
  cmd->add_option("--gamma", p.gamma, "l1-ratio in [0,1]")->required()->envname("AMPRLAB_GAMMA");
}

struct SolverArgs {
  double tol = 1e-8;
  int max_iters = 1000;
  double damping = 0.0;
};

void add_solver(CLI::App* cmd, SolverArgs& s) {
  cmd->add_option("--tol", s.tol, "fixed-point tolerance on w_hat")->envname("AMPRLAB_TOL");
  cmd->add_option("--max_iters", s.max_iters, "iteration cap")->envname("AMPRLAB_MAX_ITERS");
  cmd->add_option("--damping", s.damping, "iterate blending in [0,1)")->envname("AMPRLAB_DAMPING");
}

void dump_instance(const ampr::ProblemInstance<double>& inst, const std::string& prefix) {
  {
    std::ostringstream os;
    os << "w0\n";
    for (Eigen::Index i = 0; i < inst.n; ++i) os << g17(inst.w0[i]) << "\n";
    write_text(prefix + ".instance.w0.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "y\n";
    for (Eigen::Index i = 0; i < inst.m; ++i) os << g17(inst.y[i]) << "\n";
    write_text(prefix + ".instance.y.csv", os.str());
  }
  {
    std::ostringstream os;  // row-major, one measurement row per line, no header
    for (Eigen::Index i = 0; i < inst.m; ++i) {
      for (Eigen::Index j = 0; j < inst.n; ++j) os << (j ? "," : "") << g17(inst.x(i, j));
      os << "\n";
    }
    write_text(prefix + ".instance.X.csv", os.str());
  }
}

json params_json(const InstanceArgs& inst, const PenaltyArgs& pen, double mu_b,
                 const CommonArgs& common) {
  json p;
  p["n"] = inst.n;
  p["alpha"] = inst.alpha;
  p["delta"] = inst.delta;
  p["rho"] = inst.rho;
  p["lambda"] = pen.lambda;
  p["gamma"] = pen.gamma;
  if (std::isinf(mu_b))
    p["mu_b"] = "inf";
  else
    p["mu_b"] = mu_b;
  p["seed"] = common.seed;
  return p;
}

int cmd_run_ampr(const CommonArgs& common, const InstanceArgs& inst, const PenaltyArgs& pen,
                 const SolverArgs& solver, const std::string& mu_b_text, bool coords,
                 bool dump_inst) {
  const double mu_b = parse_mu_b(mu_b_text);
  const ampr::SignalPrior<double> prior{inst.rho};
  const ampr::DenoiserParams<double> params{pen.lambda, pen.gamma};
  ampr::SolverOptions<double> opts;
  opts.tol = solver.tol;
  opts.max_iters = solver.max_iters;
  opts.damping = solver.damping;

  const auto instance = ampr::sample_instance<double>(inst.n, inst.alpha, inst.delta, prior, common.seed);
  if (dump_inst) dump_instance(instance, common.out);
  const auto state = ampr::run_ampr(instance, params, mu_b, opts);

  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "run-ampr";
  j["params"] = params_json(inst, pen, mu_b, common);
  json r;
  r["status"] = status_name(state.status);
  r["converged"] = state.status == ampr::SolveStatus::Converged;
  r["iterations"] = state.iter;
  if (state.status != ampr::SolveStatus::Diverged) {
    const auto est = ampr::unbiased_estimate(state, instance.alpha_n());
    r["qhat"] = state.qhat;
    r["vhat"] = state.vhat;
    r["chi"] = state.chi;
    r["v"] = state.v;
    r["f1"] = state.f1;
    r["f2"] = state.f2;
    r["sigma2"] = est.sigma2;
    r["vhat_over_qhat2"] = est.vhat_over_qhat2;
    if (coords) {
      std::ostringstream os;
      os << "w0,r_hat,w_hat\n";
      for (Eigen::Index i = 0; i < instance.n; ++i)
        os << g17(instance.w0[i]) << "," << g17(est.r_hat[i]) << "," << g17(state.w_hat[i]) << "\n";
      write_text(common.out + ".coords.csv", os.str());
    }
  }
  j["results"] = r;
  write_json(common.out + ".json", j);
  if (state.status == ampr::SolveStatus::Diverged) {
    std::cerr << "run-ampr: solver diverged after " << state.iter << " iterations\n";
    return kExitDiverged;
  }
  return 0;
}

int cmd_run_gamp(const CommonArgs& common, const InstanceArgs& inst, const PenaltyArgs& pen,
                 const SolverArgs& solver, const std::string& weights_mode,
                 const std::string& mu_b_text, bool coords, bool dump_inst) {
  const ampr::SignalPrior<double> prior{inst.rho};
  const ampr::DenoiserParams<double> params{pen.lambda, pen.gamma};
  ampr::SolverOptions<double> opts;
  opts.tol = solver.tol;
  opts.max_iters = solver.max_iters;
  opts.damping = solver.damping;

  const auto instance = ampr::sample_instance<double>(inst.n, inst.alpha, inst.delta, prior, common.seed);
  if (dump_inst) dump_instance(instance, common.out);

  Eigen::VectorXd weights;  // empty = uniform
  double mu_b = std::numeric_limits<double>::infinity();
  if (weights_mode == "poisson") {
    mu_b = parse_mu_b(mu_b_text);
    if (std::isinf(mu_b)) throw CLI::ValidationError("mu_b", "poisson weights need finite mu_b");
    weights = ampr::sample_bootstrap_weights(instance.m, mu_b, ampr::bootstrap_seed(common.seed, 0)).ratios();
  } else if (weights_mode != "uniform") {
    throw CLI::ValidationError("weights", "expected 'uniform' or 'poisson'");
  }

  const auto state = ampr::run_gamp(instance, params, weights, opts);

  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "run-gamp";
  j["params"] = params_json(inst, pen, mu_b, common);
  j["params"]["weights"] = weights_mode;
  json r;
  r["status"] = status_name(state.status);
  r["converged"] = state.status == ampr::SolveStatus::Converged;
  r["iterations"] = state.iter;
  if (state.status != ampr::SolveStatus::Diverged) {
    const auto est = ampr::gamp_unbiased_estimate(state, instance.alpha_n());
    r["qhat"] = state.qhat;
    r["chi"] = state.chi;
    r["sigma2"] = est.sigma2;
    if (coords) {
      std::ostringstream os;
      os << "w0,r_hat,w_hat\n";
      for (Eigen::Index i = 0; i < instance.n; ++i)
        os << g17(instance.w0[i]) << "," << g17(est.r_hat[i]) << "," << g17(state.w_hat[i]) << "\n";
      write_text(common.out + ".coords.csv", os.str());
    }
  }
  j["results"] = r;
  write_json(common.out + ".json", j);
  if (state.status == ampr::SolveStatus::Diverged) {
    std::cerr << "run-gamp: solver diverged after " << state.iter << " iterations\n";
    return kExitDiverged;
  }
  return 0;
}

int cmd_run_se(const CommonArgs& common, double alpha, double delta, double rho,
               const PenaltyArgs& pen, const std::string& mu_b_text, double e0, double qhat1,
               double vhat1, double tol, int max_iters, int nodes, double damping) {
  const double mu_b = parse_mu_b(mu_b_text);
  const ampr::SignalPrior<double> prior{rho};
  const ampr::DenoiserParams<double> params{pen.lambda, pen.gamma};
  ampr::SeOptions<double> opts;
  opts.tol = tol;
  opts.max_iters = max_iters;
  opts.quadrature_nodes = nodes;
  opts.damping = damping;
  ampr::SeInit<double> init;
  init.e0 = e0;  // NaN keeps the prior second moment
  init.qhat1 = qhat1;
  init.vhat1 = vhat1;

  std::vector<ampr::SeState<double>> trajectory;
  const auto st = ampr::run_se(alpha, delta, prior, params, mu_b, init, opts, &trajectory);

  std::ostringstream os;
  os << "t,E,chi,v,qhat,chihat,vhat,sigma2\n";
  for (const auto& row : trajectory)
    os << row.iter << "," << g17(row.mse) << "," << g17(row.chi) << "," << g17(row.v) << ","
       << g17(row.qhat) << "," << g17(row.chihat) << "," << g17(row.vhat) << ","
       << g17(ampr::se_variance(row)) << "\n";
  write_text(common.out + ".trajectory.csv", os.str());

  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "run-se";
  json p;
  p["alpha"] = alpha;
  p["delta"] = delta;
  p["rho"] = rho;
  p["lambda"] = pen.lambda;
  p["gamma"] = pen.gamma;
  if (std::isinf(mu_b))
    p["mu_b"] = "inf";
  else
    p["mu_b"] = mu_b;
  j["params"] = p;
  json r;
  r["status"] = status_name(st.status);
  r["converged"] = st.status == ampr::SolveStatus::Converged;
  r["iterations"] = st.iter;
  if (st.status != ampr::SolveStatus::Diverged) {
    r["E"] = st.mse;
    r["chi"] = st.chi;
    r["v"] = st.v;
    r["qhat"] = st.qhat;
    r["chihat"] = st.chihat;
    r["vhat"] = st.vhat;
    r["sigma2"] = ampr::se_variance(st);
  }
  j["results"] = r;
  write_json(common.out + ".json", j);
  if (st.status == ampr::SolveStatus::Diverged) {
    std::cerr << "run-se: recursion diverged\n";
    return kExitDiverged;
  }
  return 0;
}

int cmd_qq(const CommonArgs& common, const InstanceArgs& inst, const PenaltyArgs& pen,
           const SolverArgs& solver, const std::string& mu_b_text, int k, double gamp_tol) {
  ampr::QqPipelineConfig cfg;
  cfg.n = inst.n;
  cfg.alpha = inst.alpha;
  cfg.delta = inst.delta;
  cfg.rho = inst.rho;
  cfg.lambda = pen.lambda;
  cfg.gamma = pen.gamma;
  cfg.mu_b = parse_mu_b(mu_b_text);
  cfg.seed = common.seed;
  cfg.realizations = k;
  cfg.threads = common.threads;
  cfg.ampr_opts.tol = solver.tol;
  cfg.ampr_opts.max_iters = solver.max_iters;
  cfg.ampr_opts.damping = solver.damping;
  cfg.gamp_tol = gamp_tol;

  const auto res = ampr::run_qq_pipeline(cfg);

  {
    std::ostringstream os;
    os << "theoretical_quantile,sample_quantile\n";
    for (Eigen::Index i = 0; i < res.qq.theoretical.size(); ++i)
      os << g17(res.qq.theoretical[i]) << "," << g17(res.qq.sample[i]) << "\n";
    write_text(common.out + ".qq.csv", os.str());
  }
  if (k > 1) {
    std::ostringstream os;
    os << "r_hat,mean_r_hat_gamp\n";
    for (Eigen::Index i = 0; i < res.estimate.r_hat.size(); ++i)
      os << g17(res.estimate.r_hat[i]) << "," << g17(res.mean_r_hat_g[i]) << "\n";
    write_text(common.out + ".scatter.csv", os.str());
  }

  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "qq";
  j["params"] = params_json(inst, pen, cfg.mu_b, common);
  j["params"]["k"] = k;
  json r;
  r["qq_slope"] = res.qq.slope;
  r["qq_intercept"] = res.qq.intercept;
  r["qq_variance"] = res.estimate.vhat_over_qhat2;
  r["scatter_slope"] = res.scatter_fit.slope;
  r["scatter_intercept"] = res.scatter_fit.intercept;
  r["realizations_used"] = res.realizations_used;
  r["realizations_failed"] = res.realizations_failed;
  r["ampr_iterations"] = res.ampr.iter;
  r["sigma2"] = res.estimate.sigma2;
  j["results"] = r;
  write_json(common.out + ".json", j);
  return 0;
}

std::string sweep_csv(const std::vector<ampr::SweepRecord>& records) {
  std::ostringstream os;
  os << "rho,alpha,mu_b_star,lambda_star,gamma_star,sigma2_star,s2_star,ratio,unique_frac,"
        "phase_label,converged\n";
  for (const auto& r : records)
    os << g17(r.rho) << "," << g17(r.alpha) << "," << g17(r.mu_b_star) << ","
       << g17(r.lambda_star) << "," << g17(r.gamma_star) << "," << g17(r.sigma2_star) << ","
       << g17(r.s2_star) << "," << g17(r.ratio) << "," << g17(r.unique_frac) << ","
       << (r.interpolator ? 1 : 0) << "," << (r.converged ? 1 : 0) << "\n";
  return os.str();
}

int cmd_optimize(const CommonArgs& common, double alpha, double delta, double rho,
                 const std::string& gamma_mode, int restarts, double mu_b_lo, double mu_b_hi,
                 double lambda_hi, int nodes, int se_max_iters, double se_damping) {
  ampr::OptDomain domain;
  domain.mu_b_log_lo = std::log(mu_b_lo);
  domain.mu_b_log_hi = std::log(mu_b_hi);
  domain.lambda_hi = lambda_hi;
  domain.gamma = parse_gamma_mode(gamma_mode);
  ampr::SeOptions<double> se_opts;
  se_opts.quadrature_nodes = nodes;
  se_opts.max_iters = se_max_iters;
  se_opts.damping = se_damping;

  ampr::SweepRecord rec;
  try {
    rec = ampr::minimize_variance(alpha, delta, ampr::SignalPrior<double>{rho}, domain, restarts, se_opts);
  } catch (const ampr::InfeasibleDomainError& e) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = "optimize";
    j["error"] = e.what();
    write_json(common.out + ".json", j);
    std::cerr << e.what() << "\n";
    return kExitDiverged;
  }
  write_text(common.out + ".csv", sweep_csv({rec}));

  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "optimize";
  json p;
  p["alpha"] = alpha;
  p["delta"] = delta;
  p["rho"] = rho;
  p["gamma_mode"] = gamma_mode;
  p["restarts"] = restarts;
  j["params"] = p;
  json r;
  if (std::isinf(rec.mu_b_star))
    r["mu_b_star"] = "inf";
  else
    r["mu_b_star"] = rec.mu_b_star;
  r["lambda_star"] = rec.lambda_star;
  r["gamma_star"] = rec.gamma_star;
  r["sigma2_star"] = rec.sigma2_star;
  r["s2_star"] = rec.s2_star;
  r["ratio"] = rec.ratio;
  r["unique_frac"] = rec.unique_frac;
  r["phase_label"] = rec.interpolator ? "interpolator" : "regularized";
  r["converged"] = rec.converged;
  j["results"] = r;
  write_json(common.out + ".json", j);
  return 0;
}

int cmd_sweep(const CommonArgs& common, const std::string& rho_grid_text,
              const std::string& alpha_grid_text, double delta, const std::string& gamma_mode,
              int restarts, double mu_b_lo, double mu_b_hi, double lambda_hi, int nodes,
              int se_max_iters, double se_damping) {
  const std::vector<double> rho_grid = parse_grid(rho_grid_text);
  const std::vector<double> alpha_grid = parse_grid(alpha_grid_text);
  ampr::OptDomain domain;
  domain.mu_b_log_lo = std::log(mu_b_lo);
  domain.mu_b_log_hi = std::log(mu_b_hi);
  domain.lambda_hi = lambda_hi;
  domain.gamma = parse_gamma_mode(gamma_mode);
  ampr::SeOptions<double> se_opts;
  se_opts.quadrature_nodes = nodes;
  se_opts.max_iters = se_max_iters;
  se_opts.damping = se_damping;

  const auto records = ampr::sweep_phase_diagram(rho_grid, alpha_grid, delta, domain, restarts,
                                                 se_opts, common.threads);
  write_text(common.out + ".csv", sweep_csv(records));

  int failed = 0;
  for (const auto& r : records) failed += r.converged ? 0 : 1;
  json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = "sweep";
  json p;
  p["delta"] = delta;
  p["gamma_mode"] = gamma_mode;
  p["restarts"] = restarts;
  p["rho_grid"] = rho_grid;
  p["alpha_grid"] = alpha_grid;
  j["params"] = p;
  json r;
  r["cells"] = records.size();
  r["failed_cells"] = failed;
  j["results"] = r;
  write_json(common.out + ".json", j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bootstrap-averaged message passing lab"};
  app.require_subcommand(1);

  // run-ampr
  auto* ra = app.add_subcommand("run-ampr", "bootstrap-averaged solver on a sampled instance");
  CommonArgs ra_common;
  InstanceArgs ra_inst;
  PenaltyArgs ra_pen;
  SolverArgs ra_solver;
  std::string ra_mu_b;
  bool ra_coords = false, ra_dump = false;
  add_common(ra, ra_common);
  add_instance(ra, ra_inst);
  add_penalty(ra, ra_pen);
  add_solver(ra, ra_solver);
  ra->add_option("--mu_b", ra_mu_b, "bootstrap sample size (number or 'inf')")
      ->required()
      ->envname("AMPRLAB_MU_B");
  ra->add_flag("--coords", ra_coords, "also write per-coordinate CSV");
  ra->add_flag("--dump-instance", ra_dump, "also write the sampled instance bundle");

  // run-gamp
  auto* rg = app.add_subcommand("run-gamp", "per-realization solver (uniform or poisson weights)");
  CommonArgs rg_common;
  InstanceArgs rg_inst;
  PenaltyArgs rg_pen;
  SolverArgs rg_solver;
  std::string rg_weights = "uniform", rg_mu_b = "inf";
  bool rg_coords = false, rg_dump = false;
  add_common(rg, rg_common);
  add_instance(rg, rg_inst);
  add_penalty(rg, rg_pen);
  add_solver(rg, rg_solver);
  rg->add_option("--weights", rg_weights, "'uniform' or 'poisson'")->envname("AMPRLAB_WEIGHTS");
  rg->add_option("--mu_b", rg_mu_b, "bootstrap sample size for poisson weights")->envname("AMPRLAB_MU_B");
  rg->add_flag("--coords", rg_coords, "also write per-coordinate CSV");
  rg->add_flag("--dump-instance", rg_dump, "also write the sampled instance bundle");

  // run-se
  auto* rs = app.add_subcommand("run-se", "state evolution recursion");
  CommonArgs rs_common;
  PenaltyArgs rs_pen;
  double rs_alpha = 0, rs_delta = 0, rs_rho = 0;
  std::string rs_mu_b;
  double rs_e0 = std::numeric_limits<double>::quiet_NaN(), rs_qhat1 = 1, rs_vhat1 = 1;
  double rs_tol = 1e-10, rs_damping = 0.5;
  int rs_max_iters = 5000, rs_nodes = 120;
  add_common(rs, rs_common);
  rs->add_option("--alpha", rs_alpha, "measurement ratio")->required()->envname("AMPRLAB_ALPHA");
  rs->add_option("--delta", rs_delta, "noise variance")->required()->envname("AMPRLAB_DELTA");
  rs->add_option("--rho", rs_rho, "nonzero density")->required()->envname("AMPRLAB_RHO");
  add_penalty(rs, rs_pen);
  rs->add_option("--mu_b", rs_mu_b, "bootstrap sample size (number or 'inf')")
      ->required()
      ->envname("AMPRLAB_MU_B");
  rs->add_option("--e0", rs_e0, "initial MSE (default: prior second moment)");
  rs->add_option("--qhat1", rs_qhat1, "initial qhat");
  rs->add_option("--vhat1", rs_vhat1, "initial vhat");
  rs->add_option("--tol", rs_tol, "fixed-point tolerance")->envname("AMPRLAB_TOL");
  rs->add_option("--max_iters", rs_max_iters, "iteration cap")->envname("AMPRLAB_MAX_ITERS");
  rs->add_option("--nodes", rs_nodes, "quadrature nodes")->envname("AMPRLAB_NODES");
  rs->add_option("--damping", rs_damping, "damping on (E, chi, v)")->envname("AMPRLAB_DAMPING");

  // qq
  auto* qq = app.add_subcommand("qq", "Q-Q residual and resampling-mean scatter pipeline");
  CommonArgs qq_common;
  InstanceArgs qq_inst;
  PenaltyArgs qq_pen;
  SolverArgs qq_solver;
  std::string qq_mu_b;
  int qq_k = 2048;
  double qq_gamp_tol = 1e-7;
  add_common(qq, qq_common);
  add_instance(qq, qq_inst);
  add_penalty(qq, qq_pen);
  add_solver(qq, qq_solver);
  qq->add_option("--mu_b", qq_mu_b, "bootstrap sample size")->required()->envname("AMPRLAB_MU_B");
  qq->add_option("--k", qq_k, "number of weight realizations")->envname("AMPRLAB_K");
  qq->add_option("--gamp_tol", qq_gamp_tol, "tolerance for the per-realization solves");

  // optimize
  auto* op = app.add_subcommand("optimize", "variance-minimizing hyperparameters for one cell");
  CommonArgs op_common;
  double op_alpha = 0, op_delta = 0, op_rho = 0;
  std::string op_gamma_mode = "fixed:1";
  int op_restarts = 5, op_nodes = 120, op_se_iters = 5000;
  double op_mu_lo = 1e-2, op_mu_hi = 1e3, op_lambda_hi = 1e2, op_se_damping = 0.5;
  add_common(op, op_common);
  op->add_option("--alpha", op_alpha, "measurement ratio")->required()->envname("AMPRLAB_ALPHA");
  op->add_option("--delta", op_delta, "noise variance")->required()->envname("AMPRLAB_DELTA");
  op->add_option("--rho", op_rho, "nonzero density")->required()->envname("AMPRLAB_RHO");
  op->add_option("--gamma_mode", op_gamma_mode, "'free' or 'fixed:<value>'")->envname("AMPRLAB_GAMMA_MODE");
  op->add_option("--restarts", op_restarts, "multi-start count")->envname("AMPRLAB_RESTARTS");
  op->add_option("--mu_b_lo", op_mu_lo, "lower bound of the finite mu_B box");
  op->add_option("--mu_b_hi", op_mu_hi, "upper bound of the finite mu_B box");
  op->add_option("--lambda_hi", op_lambda_hi, "upper bound for lambda");
  op->add_option("--nodes", op_nodes, "quadrature nodes")->envname("AMPRLAB_NODES");
  op->add_option("--se_max_iters", op_se_iters, "SE iteration cap");
  op->add_option("--se_damping", op_se_damping, "SE damping");

  // sweep
  auto* sw = app.add_subcommand("sweep", "phase-diagram sweep over a (rho, alpha) grid");
  CommonArgs sw_common;
  std::string sw_rho_grid, sw_alpha_grid, sw_gamma_mode = "fixed:1";
  double sw_delta = 0.15;
  int sw_restarts = 5, sw_nodes = 120, sw_se_iters = 5000;
  double sw_mu_lo = 1e-2, sw_mu_hi = 1e3, sw_lambda_hi = 1e2, sw_se_damping = 0.5;
  add_common(sw, sw_common);
  sw->add_option("--rho_grid", sw_rho_grid, "grid as lo:hi:count or comma list")
      ->required()
      ->envname("AMPRLAB_RHO_GRID");
  sw->add_option("--alpha_grid", sw_alpha_grid, "grid as lo:hi:count or comma list")
      ->required()
      ->envname("AMPRLAB_ALPHA_GRID");
  sw->add_option("--delta", sw_delta, "noise variance")->required()->envname("AMPRLAB_DELTA");
  sw->add_option("--gamma_mode", sw_gamma_mode, "'free' or 'fixed:<value>'")->envname("AMPRLAB_GAMMA_MODE");
  sw->add_option("--restarts", sw_restarts, "multi-start count")->envname("AMPRLAB_RESTARTS");
  sw->add_option("--mu_b_lo", sw_mu_lo, "lower bound of the finite mu_B box");
  sw->add_option("--mu_b_hi", sw_mu_hi, "upper bound of the finite mu_B box");
  sw->add_option("--lambda_hi", sw_lambda_hi, "upper bound for lambda");
  sw->add_option("--nodes", sw_nodes, "quadrature nodes")->envname("AMPRLAB_NODES");
  sw->add_option("--se_max_iters", sw_se_iters, "SE iteration cap");
  sw->add_option("--se_damping", sw_se_damping, "SE damping");

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());  // CLI11 vector parse wants reversed args
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (ra->parsed())
      return cmd_run_ampr(ra_common, ra_inst, ra_pen, ra_solver, ra_mu_b, ra_coords, ra_dump);
    if (rg->parsed())
      return cmd_run_gamp(rg_common, rg_inst, rg_pen, rg_solver, rg_weights, rg_mu_b, rg_coords,
                          rg_dump);
    if (rs->parsed())
      return cmd_run_se(rs_common, rs_alpha, rs_delta, rs_rho, rs_pen, rs_mu_b, rs_e0, rs_qhat1,
                        rs_vhat1, rs_tol, rs_max_iters, rs_nodes, rs_damping);
    if (qq->parsed())
      return cmd_qq(qq_common, qq_inst, qq_pen, qq_solver, qq_mu_b, qq_k, qq_gamp_tol);
    if (op->parsed())
      return cmd_optimize(op_common, op_alpha, op_delta, op_rho, op_gamma_mode, op_restarts,
                          op_mu_lo, op_mu_hi, op_lambda_hi, op_nodes, op_se_iters, op_se_damping);
    if (sw->parsed())
      return cmd_sweep(sw_common, sw_rho_grid, sw_alpha_grid, sw_delta, sw_gamma_mode, sw_restarts,
                       sw_mu_lo, sw_mu_hi, sw_lambda_hi, sw_nodes, sw_se_iters, sw_se_damping);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ampr::SolverDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
