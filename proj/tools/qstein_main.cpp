// Command-line front end: sampling, identity verification against the
// quadrature oracle, gradient estimation, and the experiment suite.
// Exit codes: 0 ok, 1 runtime/identity failure, 2 usage or config error.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qstein/qstein.hpp"

namespace {

using namespace qstein;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Eigen::VectorXd parse_mu(const std::string& spec, int d) {
  if (spec.empty()) return Eigen::VectorXd::Zero(d);
  if (spec[0] == '@') return vector_from_json(json::parse(read_text_file(spec.substr(1))));
  std::vector<double> vals;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
  Eigen::VectorXd mu(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) mu(i) = vals[i];
  return mu;
}

Eigen::MatrixXd parse_factor(const std::string& spec, int d) {
  if (spec.empty() || spec == "identity") return Eigen::MatrixXd::Identity(d, d);
  if (spec[0] == '@') return matrix_from_json_rows(json::parse(read_text_file(spec.substr(1))));
  throw UsageError("--sigma-factor must be \"identity\" or @file.json");
}

QGaussian build_law(int d, double q, const std::string& mu_spec, const std::string& factor_spec) {
  const Eigen::VectorXd mu = parse_mu(mu_spec, d);
  const Eigen::MatrixXd L = parse_factor(factor_spec, d);
  if (mu.size() != d || L.rows() != d)
    throw UsageError("--mu / --sigma-factor dimensions disagree with --d");
  return new_qgaussian_factor(mu, L, q);
}

void echo_config(const json& cfg) { std::cout << "config: " << cfg.dump() << "\n"; }

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6e", v);
  return buf;
}

// --- verify: deterministic identity battery against the quadrature oracle ---

struct VerifyRow {
  std::string identity;
  double discrepancy;
  double tol;
};

int run_verify(int d, double q, int nodes) {
  if (d > 2) throw UsageError("verify is limited to d <= 2: the quadrature oracle is 1-D/2-D only");
  const QGaussian p = build_law(d, q, "", "identity");
  const EscortLaw star = escort(p, 1);
  const Moments mo = moments(p);
  QuadratureSpec spec;
  spec.nodes_1d = nodes;

  std::vector<VerifyRow> rows;
  auto one = [](const Eigen::VectorXd&) { return 1.0; };
  rows.push_back({"normalization(base)", std::abs(expect_quadrature(p, one, spec) - 1.0), 1e-8});
  rows.push_back({"normalization(escort)", std::abs(expect_quadrature(star, one, spec) - 1.0), 1e-8});

  for (const TestFunction& f : battery(p)) {
    // first-moment identity: E_p[(x-mu) f] = Cov_p(x) E_*[grad f]
    Eigen::VectorXd lhs(d), grad_star(d), grad_rw(d);
    for (int i = 0; i < d; ++i) {
      lhs(i) = expect_quadrature(
          p, [&](const Eigen::VectorXd& x) { return (x(i) - p.mu(i)) * f.eval(x); }, spec);
      grad_star(i) =
          expect_quadrature(star, [&](const Eigen::VectorXd& x) { return f.grad(x)(i); }, spec);
      if (!p.gaussian)
        grad_rw(i) = expect_quadrature(
                         p,
                         [&](const Eigen::VectorXd& x) {
                           return (p.r2 - mahalanobis_sq(p, x)) * f.grad(x)(i);
                         },
                         spec) /
                     mo.M;
    }
    const Eigen::VectorXd rhs = mo.cov_scale * sigma_of(p) * grad_star;
    rows.push_back({"first_moment(" + f.name + ")", (lhs - rhs).cwiseAbs().maxCoeff(), 1e-7});
    if (!p.gaussian)
      rows.push_back({"reweighted_form(" + f.name + ")",
                      (grad_rw - grad_star).cwiseAbs().maxCoeff(), 1e-8});

    // location gradient: d/dmu_i of E_p[f] equals E_p[grad f]_i
    auto E = [&](const Eigen::VectorXd& mu2, const Eigen::MatrixXd& sigma2) {
      return expect_quadrature(new_qgaussian(mu2, sigma2, q), f.eval, spec);
    };
    const Eigen::MatrixXd sig = sigma_of(p);
    double worst_mu = 0.0;
    for (int i = 0; i < d; ++i) {
      FdSpec w;
      w.kind = FdParam::mu;
      w.i = i;
      w.richardson = true;
      const double fd = fd_grad_param(E, p.mu, sig, w);
      const double anal =
          expect_quadrature(p, [&](const Eigen::VectorXd& x) { return f.grad(x)(i); }, spec);
      worst_mu = std::max(worst_mu, std::abs(fd - anal));
    }
    rows.push_back({"location_gradient(" + f.name + ")", worst_mu, 1e-6});

    // scale gradient: d/dSigma_ij of E_p[f] equals (E_p[s]/D)/2 * E_*[hess f]_ij
    double worst_sig = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        FdSpec w;
        w.kind = FdParam::sigma;
        w.i = i;
        w.j = j;
        w.richardson = true;
        const double fd = fd_grad_param(E, p.mu, sig, w);
        const double anal =
            0.5 * mo.cov_scale *
            expect_quadrature(star, [&](const Eigen::VectorXd& x) { return f.hess(x)(i, j); },
                              spec);
        worst_sig = std::max(worst_sig, std::abs(fd - anal));
      }
    rows.push_back({"scale_gradient(" + f.name + ")", worst_sig, 1e-6});
  }

  bool all_pass = true;
  std::printf("%-34s %14s %10s  %s\n", "identity", "discrepancy", "tol", "status");
  for (const auto& r : rows) {
    const bool pass = r.discrepancy < r.tol;
    all_pass = all_pass && pass;
    std::printf("%-34s %14s %10s  %s\n", r.identity.c_str(), fmt(r.discrepancy).c_str(),
                fmt(r.tol).c_str(), pass ? "pass" : "FAIL");
  }
  if (!all_pass) {
    for (const auto& r : rows)
      if (!(r.discrepancy < r.tol))
        std::cerr << "identity failed: " << r.identity << " discrepancy " << fmt(r.discrepancy)
                  << " tol " << fmt(r.tol) << "\n";
    return 1;
  }
  return 0;
}

// --- estimate ---

GradEstimate run_estimator(const std::string& name, const QGaussian& p, const TestFunction& f,
                           std::size_t S, std::uint64_t seed) {
  auto wrap = [&](const MeanSE& ms, const char* label) {
    GradEstimate e;
    e.value = ms.value;
    e.per_entry_variance =
        ms.se.array().square().matrix() * static_cast<double>(S);  // se^2 * S
    e.S = S;
    e.seed = seed;
    e.estimator = label;
    return e;
  };
  if (name == "stein_lhs")
    return wrap(stein_lhs_stats(p, f, sample(p, S, seed, Source::base)), "stein_lhs");
  if (name == "stein_rhs_escort")
    return wrap(stein_rhs_stats(p, f, SteinVariant::escort_batch, sample(p, S, seed, Source::escort)),
                "stein_rhs_escort");
  if (name == "stein_rhs_reweighted")
    return wrap(
        stein_rhs_stats(p, f, SteinVariant::p_only_reweighted, sample(p, S, seed, Source::base)),
        "stein_rhs_reweighted");
  if (name == "grad_mu") return grad_mu(p, f, S, seed);
  if (name == "grad_sigma") return grad_sigma(p, f, S, seed);
  if (name == "prop1_grad") return prop1_estimators(p, f, S, seed, Prop1Kind::grad);
  if (name == "prop1_hess") return prop1_estimators(p, f, S, seed, Prop1Kind::hess);
  if (name == "gaussian_mu")
    return gaussian_baseline_grads(p.mu, p.L, f, S, seed, GaussianWhich::mu);
  if (name == "gaussian_sigma")
    return gaussian_baseline_grads(p.mu, p.L, f, S, seed, GaussianWhich::sigma);
  throw UsageError("unknown estimator: " + name);
}

// --- experiment config files ---

void reject_unknown(const json& j, std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw UsageError("unknown config key: " + key);
  }
}

LogRegConfig logreg_config_from_json(const json& j) {
  reject_unknown(j, {"dims", "qs", "N", "S", "reps", "seed"});
  LogRegConfig c;
  if (j.contains("dims")) c.dims = j["dims"].get<std::vector<int>>();
  if (j.contains("qs")) c.qs = j["qs"].get<std::vector<double>>();
  if (j.contains("N")) c.N = j["N"].get<int>();
  if (j.contains("S")) c.S = j["S"].get<int>();
  if (j.contains("reps")) c.reps = j["reps"].get<int>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  return c;
}

OptimizerConfig optimizer_config_from_json(const json& j) {
  reject_unknown(j, {"rule", "rho", "q", "lr", "momentum", "weight_decay", "epochs", "batch_size",
                     "mc_samples", "seed", "vsgd_scaled"});
  OptimizerConfig c;
  if (j.contains("rule")) c.rule = rule_from_name(j["rule"].get<std::string>());
  if (j.contains("rho")) c.rho = j["rho"].get<double>();
  if (j.contains("q")) c.q = j["q"].get<double>();
  if (j.contains("lr")) c.lr = j["lr"].get<double>();
  if (j.contains("momentum")) c.momentum = j["momentum"].get<double>();
  if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"].get<double>();
  if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.contains("mc_samples")) c.mc_samples = j["mc_samples"].get<int>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("vsgd_scaled")) c.vsgd_scaled = j["vsgd_scaled"].get<bool>();
  validate(c);
  return c;
}

std::vector<OptimizerConfig> default_training_configs(std::uint64_t seed) {
  std::vector<OptimizerConfig> cfgs(4);
  cfgs[0].rule = OptRule::sgd;
  cfgs[1].rule = OptRule::sam;
  cfgs[2].rule = OptRule::vsgd;
  cfgs[3].rule = OptRule::qvsgd;
  for (auto& c : cfgs) c.seed = seed;
  return cfgs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bounded-support q-Gaussian toolkit"};
  app.require_subcommand(1);

  // sample
  auto* c_sample = app.add_subcommand("sample", "draw a batch and write it as CSV");
  int s_d = 1;
  double s_q = 0.0;
  std::uint64_t s_s = 1000, s_seed = 0;
  std::string s_mu, s_factor = "identity", s_source = "base", s_out = "batch.csv";
  c_sample->add_option("--d", s_d, "dimension")->required();
  c_sample->add_option("--q", s_q, "deformation parameter (q <= 1)")->required();
  c_sample->add_option("--s", s_s, "number of draws")->required();
  c_sample->add_option("--seed", s_seed, "RNG seed");
  c_sample->add_option("--mu", s_mu, "mean: comma-separated values or @file.json");
  c_sample->add_option("--sigma-factor", s_factor, "\"identity\" or @file.json (lower-triangular rows)");
  c_sample->add_option("--source", s_source, "base | escort");
  c_sample->add_option("--out", s_out, "output CSV path")->required();

  // verify
  auto* c_verify = app.add_subcommand("verify", "check the identity battery against the quadrature oracle");
  int v_d = 1, v_nodes = 0;
  double v_q = 0.0;
  c_verify->add_option("--d", v_d, "dimension (<= 2)")->required();
  c_verify->add_option("--q", v_q, "deformation parameter")->required();
  c_verify->add_option("--nodes", v_nodes, "quadrature nodes per axis (0 = default)");

  // estimate
  auto* c_est = app.add_subcommand("estimate", "run a named estimator on a battery function");
  std::string e_estimator, e_function, e_mu, e_factor = "identity", e_out = "estimate.json";
  int e_d = 1;
  double e_q = 0.0;
  std::uint64_t e_s = 100000, e_seed = 0;
  c_est->add_option("--estimator", e_estimator,
                    "stein_lhs | stein_rhs_escort | stein_rhs_reweighted | grad_mu | grad_sigma | "
                    "prop1_grad | prop1_hess | gaussian_mu | gaussian_sigma")
      ->required();
  c_est->add_option("--function", e_function, "poly2 | poly4 | sine | tanh_sum | logistic_loss")
      ->required();
  c_est->add_option("--d", e_d, "dimension")->required();
  c_est->add_option("--q", e_q, "deformation parameter")->required();
  c_est->add_option("--s", e_s, "sample count");
  c_est->add_option("--seed", e_seed, "RNG seed");
  c_est->add_option("--mu", e_mu, "mean: comma-separated or @file.json");
  c_est->add_option("--sigma-factor", e_factor, "\"identity\" or @file.json");
  c_est->add_option("--out", e_out, "output JSON path")->required();

  // experiment
  auto* c_exp = app.add_subcommand("experiment", "run an experiment and write the report");
  std::string x_kind, x_config, x_out = "report.json", x_csv, x_dataset = "two_moons";
  std::uint64_t x_seed = 1;
  bool x_timings = false;
  c_exp->add_option("--kind", x_kind, "logreg | radius | train")->required();
  c_exp->add_option("--config", x_config, "JSON config file (optional)");
  c_exp->add_option("--out", x_out, "report JSON path")->required();
  c_exp->add_option("--csv", x_csv, "also write the flat CSV here");
  c_exp->add_option("--dataset", x_dataset, "train only: two_moons | small_mlp_classification");
  c_exp->add_option("--seed", x_seed, "base seed (when no config file)");
  c_exp->add_flag("--timings", x_timings, "include wall-clock readings in the report file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (c_sample->parsed()) {
      const QGaussian p = build_law(s_d, s_q, s_mu, s_factor);
      const Source src = s_source == "escort" ? Source::escort
                         : s_source == "base" ? Source::base
                                              : throw UsageError("--source must be base or escort");
      json cfg;
      cfg["command"] = "sample";
      cfg["distribution"] = qgaussian_to_json(p);
      cfg["s"] = s_s;
      cfg["seed"] = s_seed;
      cfg["source"] = s_source;
      cfg["out"] = s_out;
      echo_config(cfg);
      if (p.gaussian && src == Source::escort)
        std::cerr << "note: escort of the Gaussian limit is the base law; drawing base samples\n";
      const SampleBatch batch = sample(p, s_s, s_seed, src);
      std::ostringstream csv;
      write_batch_csv(batch, csv);
      write_text_file(s_out, csv.str());
      return 0;
    }

    if (c_verify->parsed()) {
      json cfg;
      cfg["command"] = "verify";
      cfg["d"] = v_d;
      cfg["q"] = v_q;
      cfg["nodes"] = v_nodes;
      echo_config(cfg);
      return run_verify(v_d, v_q, v_nodes);
    }

    if (c_est->parsed()) {
      const QGaussian p = build_law(e_d, e_q, e_mu, e_factor);
      const TestFunction f = battery_function(p, e_function);
      json cfg;
      cfg["command"] = "estimate";
      cfg["estimator"] = e_estimator;
      cfg["function"] = e_function;
      cfg["distribution"] = qgaussian_to_json(p);
      cfg["s"] = e_s;
      cfg["seed"] = e_seed;
      cfg["out"] = e_out;
      echo_config(cfg);
      const GradEstimate est = run_estimator(e_estimator, p, f, e_s, e_seed);
      write_text_file(e_out, estimate_to_json(est).dump(2) + "\n");
      return 0;
    }

    if (c_exp->parsed()) {
      json file_cfg = json::object();
      if (!x_config.empty()) file_cfg = json::parse(read_text_file(x_config));
      ExperimentReport report;
      if (x_kind == "logreg") {
        LogRegConfig cfg = logreg_config_from_json(file_cfg);
        if (x_config.empty()) cfg.seed = x_seed;
        report = run_logreg_variance(cfg);
      } else if (x_kind == "radius") {
        reject_unknown(file_cfg, {"qs", "d_max"});
        std::vector<double> qs{0.0, 0.3, 0.5, 0.8, 0.99};
        int d_max = 200;
        if (file_cfg.contains("qs")) qs = file_cfg["qs"].get<std::vector<double>>();
        if (file_cfg.contains("d_max")) d_max = file_cfg["d_max"].get<int>();
        report = run_radius_curve(qs, d_max);
      } else if (x_kind == "train") {
        reject_unknown(file_cfg, {"optimizers", "n_seeds", "dataset"});
        std::vector<OptimizerConfig> cfgs;
        int n_seeds = 5;
        if (file_cfg.contains("optimizers"))
          for (const auto& oj : file_cfg["optimizers"]) cfgs.push_back(optimizer_config_from_json(oj));
        else
          cfgs = default_training_configs(x_seed);
        if (file_cfg.contains("n_seeds")) n_seeds = file_cfg["n_seeds"].get<int>();
        if (file_cfg.contains("dataset")) x_dataset = file_cfg["dataset"].get<std::string>();
        report = run_toy_training(cfgs, dataset_from_name(x_dataset), n_seeds);
      } else {
        throw UsageError("--kind must be logreg, radius, or train");
      }
      report.include_timings = x_timings;
      echo_config(report.config);
      for (const auto& [phase, sec] : report.wall_clock_sec)
        std::cerr << "phase " << phase << ": " << sec << " s\n";
      write_text_file(x_out, report_to_json(report).dump(2) + "\n");
      if (!x_csv.empty()) write_text_file(x_csv, report_to_csv(report));
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
