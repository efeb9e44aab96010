#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qstein/io.hpp"
#include "qstein/qgauss.hpp"
#include "qstein/rng.hpp"
#include "qstein/sampler.hpp"
#include "qstein/special.hpp"
#include "qstein/testfn.hpp"

namespace qstein {

// ---------------------------------------------------------------------------
// Report container shared by all experiments.  Wall-clock readings are kept
// out of the serialized form by default so that identical (config, seed) runs
// produce byte-identical files; include_timings opts them back in.
// ---------------------------------------------------------------------------

struct LogRegCell {
  int D = 0;
  double q = 0.0;
  double mean_var = 0.0;  // (1/D) sum_j Var(grad_j) across repetitions
  double se = 0.0;        // spread of the per-coordinate variances / sqrt(D)
};

struct RadiusRow {
  double q = 0.0;
  int argmin_d = 1;             // dimension of the row's minimum
  std::vector<double> radius;   // R(q, D) for D = 1..d_max
};

struct TrainRun {
  int cfg_index = 0;
  std::string rule;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  double final_acc = 0.0;
  bool diverged = false;
  std::size_t grad_evals = 0;
  double max_pert_norm = 0.0;
  std::vector<double> loss_per_epoch;
  Eigen::VectorXd final_params;  // in-memory only (trajectory equivalence checks)
};

struct TrainSummary {
  int cfg_index = 0;
  std::string rule;
  double acc_mean = 0.0, acc_se = 0.0;
  double loss_mean = 0.0, loss_se = 0.0;
  int n_diverged = 0;
};

struct ExperimentReport {
  json config = json::object();
  std::vector<LogRegCell> logreg;
  std::vector<RadiusRow> radius;
  std::vector<TrainRun> runs;
  std::vector<TrainSummary> summaries;
  std::map<std::string, double> wall_clock_sec;
  bool include_timings = false;
};

// ---------------------------------------------------------------------------
// Synthetic logistic-regression variance study: how the spread of the
// smoothed-loss gradient estimator depends on q, per dimension.
// ---------------------------------------------------------------------------

struct LogRegConfig {
  std::vector<int> dims{10, 50, 200};
  std::vector<double> qs{0.0, 0.5, 0.8, 1.0};
  int N = 2000;
  int S = 8;
  int reps = 50;
  std::uint64_t seed = 1;
};

namespace detail {

inline void validate(const LogRegConfig& cfg) {
  if (cfg.dims.empty() || cfg.qs.empty())
    throw std::invalid_argument("logreg config: dims and qs must be nonempty");
  if (cfg.S < 1 || cfg.reps < 1)
    throw std::invalid_argument("logreg config: S and reps must be >= 1");
  if (cfg.N < 1) throw std::invalid_argument("logreg config: N must be >= 1");
  for (double q : cfg.qs)
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("logreg config: q outside [0, 1]");
}

inline json logreg_config_echo(const LogRegConfig& cfg) {
  json j;
  j["dims"] = cfg.dims;
  j["qs"] = cfg.qs;
  j["N"] = cfg.N;
  j["S"] = cfg.S;
  j["reps"] = cfg.reps;
  j["seed"] = cfg.seed;
  return j;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

}  // namespace detail

inline ExperimentReport run_logreg_variance(const LogRegConfig& cfg) {
  detail::validate(cfg);
  detail::Timer timer;
  ExperimentReport report;
  report.config["experiment"] = "logreg_variance";
  report.config["logreg"] = detail::logreg_config_echo(cfg);

  const Rng root(cfg.seed);
  for (std::size_t di = 0; di < cfg.dims.size(); ++di) {
    const int D = cfg.dims[di];
    // dataset: x_i ~ N(0, I), w* ~ N(0, I), y | x ~ Bernoulli(sigmoid(x'w*))
    Rng data_rng = root.split(1000 + di);
    Eigen::MatrixXd X(cfg.N, D);
    for (int i = 0; i < cfg.N; ++i)
      for (int j = 0; j < D; ++j) X(i, j) = data_rng.normal();
    Eigen::VectorXd w_star(D);
    for (int j = 0; j < D; ++j) w_star(j) = data_rng.normal();
    Eigen::VectorXd y(cfg.N);
    {
      const Eigen::VectorXd z = X * w_star;
      for (int i = 0; i < cfg.N; ++i)
        y(i) = data_rng.uniform() < 1.0 / (1.0 + std::exp(-z(i))) ? 1.0 : 0.0;
    }

    auto grad_at = [&](const Eigen::VectorXd& w) {
      const Eigen::VectorXd p = ((-(X * w).array()).exp() + 1.0).inverse();
      return Eigen::VectorXd(X.transpose() * (p - y) / cfg.N);
    };

    for (std::size_t qi = 0; qi < cfg.qs.size(); ++qi) {
      const double q = cfg.qs[qi];
      const QGaussian noise = new_qgaussian_factor(Eigen::VectorXd::Zero(D),
                                                   Eigen::MatrixXd::Identity(D, D), q);
      const Rng arm = root.split(1 + di * 97 + qi);
      Eigen::MatrixXd estimates(cfg.reps, D);
      for (int rep = 0; rep < cfg.reps; ++rep) {
        const SampleBatch eps = sample(noise, cfg.S, arm.derive(rep), Source::base);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(D);
        for (int k = 0; k < cfg.S; ++k)
          acc += grad_at(w_star + eps.points.row(k).transpose());
        estimates.row(rep) = (acc / cfg.S).transpose();
      }
      // per-coordinate variance across repetitions, then averaged over coordinates
      Eigen::VectorXd var_j(D);
      const Eigen::RowVectorXd mean_j = estimates.colwise().mean();
      for (int j = 0; j < D; ++j)
        var_j(j) = (estimates.col(j).array() - mean_j(j)).square().sum() /
                   std::max(1, cfg.reps - 1);
      LogRegCell cell;
      cell.D = D;
      cell.q = q;
      cell.mean_var = var_j.mean();
      cell.se = std::sqrt((var_j.array() - cell.mean_var).square().sum() /
                          std::max(1, D - 1)) /
                std::sqrt(static_cast<double>(D));
      report.logreg.push_back(cell);
    }
  }
  report.wall_clock_sec["logreg_variance"] = timer.seconds();
  return report;
}

// ---------------------------------------------------------------------------
// Support radius against dimension, one row per q.  Every row follows a
// valley shape: strictly decreasing down to its minimum, nondecreasing after
// it (the large-D growth is what dominates in practice).  The valley shape is
// asserted; a wiggle would mean the radius computation is broken.
// ---------------------------------------------------------------------------

inline ExperimentReport run_radius_curve(const std::vector<double>& qs, int d_max) {
  if (qs.empty()) throw std::invalid_argument("run_radius_curve: qs must be nonempty");
  if (d_max < 1) throw std::invalid_argument("run_radius_curve: d_max must be >= 1");
  for (double q : qs)
    if (!(q < 1.0)) throw std::invalid_argument("run_radius_curve: requires q < 1");

  detail::Timer timer;
  ExperimentReport report;
  report.config["experiment"] = "radius_curve";
  report.config["qs"] = qs;
  report.config["d_max"] = d_max;

  for (double q : qs) {
    RadiusRow row;
    row.q = q;
    row.radius.resize(d_max);
    for (int D = 1; D <= d_max; ++D)
      row.radius[D - 1] = std::sqrt(radius_sq(q, static_cast<double>(D)));
    row.argmin_d = 1 + static_cast<int>(std::min_element(row.radius.begin(), row.radius.end()) -
                                        row.radius.begin());
    for (int i = 0; i + 1 < d_max; ++i) {
      const bool before_min = i + 1 < row.argmin_d;
      const bool ok = before_min ? row.radius[i + 1] < row.radius[i]
                                 : row.radius[i + 1] >= row.radius[i];
      if (!ok) throw std::logic_error("run_radius_curve: radius row is not valley-shaped");
    }
    report.radius.push_back(std::move(row));
  }
  report.wall_clock_sec["radius_curve"] = timer.seconds();
  return report;
}

// ---------------------------------------------------------------------------
// Optimizer step rules: sgd, sam (worst-case perturbation on the rho-ball),
// vsgd (Gaussian weight noise), qvsgd (bounded-support weight noise).
// ---------------------------------------------------------------------------

enum class OptRule { sgd, sam, vsgd, qvsgd };

inline std::string rule_name(OptRule r) {
  switch (r) {
    case OptRule::sgd: return "sgd";
    case OptRule::sam: return "sam";
    case OptRule::vsgd: return "vsgd";
    case OptRule::qvsgd: return "qvsgd";
  }
  return "?";
}

inline OptRule rule_from_name(const std::string& s) {
  if (s == "sgd") return OptRule::sgd;
  if (s == "sam") return OptRule::sam;
  if (s == "vsgd") return OptRule::vsgd;
  if (s == "qvsgd") return OptRule::qvsgd;
  throw std::invalid_argument("unknown optimizer rule: " + s);
}

struct OptimizerConfig {
  OptRule rule = OptRule::sgd;
  double rho = 0.05;
  double q = 0.5;  // qvsgd only; q = 1 reproduces vsgd draws exactly
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int epochs = 300;
  int batch_size = 64;
  int mc_samples = 1;
  std::uint64_t seed = 0;
  bool vsgd_scaled = false;  // delta = rho * eps / sqrt(P) instead of raw eps
};

inline void validate(const OptimizerConfig& cfg) {
  if (!(cfg.rho >= 0.0)) throw std::invalid_argument("optimizer config: rho must be >= 0");
  if (!(cfg.q <= 1.0))
    throw std::invalid_argument("optimizer config: q must be <= 1 (bounded-support regime)");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("optimizer config: lr must be > 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw std::invalid_argument("optimizer config: momentum must lie in [0, 1)");
  if (!(cfg.weight_decay >= 0.0))
    throw std::invalid_argument("optimizer config: weight_decay must be >= 0");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.mc_samples < 1)
    throw std::invalid_argument("optimizer config: epochs, batch_size, mc_samples must be >= 1");
}

struct OptState {
  Eigen::VectorXd velocity;
  Rng pert_rng{0};
  std::size_t grad_evals = 0;   // oracle invocations (sam makes two per step)
  double max_pert_norm = 0.0;   // largest ||delta|| drawn so far
};

inline OptState make_opt_state(int n_params, const OptimizerConfig& cfg) {
  OptState st;
  st.velocity = Eigen::VectorXd::Zero(n_params);
  st.pert_rng = Rng(cfg.seed, 4);  // perturbation stream, shared across rules
  return st;
}

namespace detail {

inline Eigen::VectorXd normal_vec(Rng& rng, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

}  // namespace detail

// One update of `params` given a minibatch gradient oracle.  Momentum and
// weight decay are applied identically across rules; only the evaluation
// point(s) differ.
inline Eigen::VectorXd optimizer_step(OptRule rule, const Eigen::VectorXd& params,
                                      const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad_oracle,
                                      const OptimizerConfig& cfg, OptState& state) {
  const int P = static_cast<int>(params.size());
  auto oracle = [&](const Eigen::VectorXd& at) {
    ++state.grad_evals;
    return grad_oracle(at);
  };

  Eigen::VectorXd g;
  switch (rule) {
    case OptRule::sgd:
      g = oracle(params);
      break;
    case OptRule::sam: {
      const Eigen::VectorXd g0 = oracle(params);
      const double n0 = g0.norm();
      Eigen::VectorXd delta = Eigen::VectorXd::Zero(P);
      if (cfg.rho > 0.0 && n0 > 0.0) delta = cfg.rho / n0 * g0;
      state.max_pert_norm = std::max(state.max_pert_norm, delta.norm());
      g = oracle(params + delta);
      break;
    }
    case OptRule::vsgd: {
      g = Eigen::VectorXd::Zero(P);
      for (int s = 0; s < cfg.mc_samples; ++s) {
        Eigen::VectorXd delta = detail::normal_vec(state.pert_rng, P);
        if (cfg.vsgd_scaled) delta *= cfg.rho / std::sqrt(static_cast<double>(P));
        state.max_pert_norm = std::max(state.max_pert_norm, delta.norm());
        g += oracle(params + delta);
      }
      g /= cfg.mc_samples;
      break;
    }
    case OptRule::qvsgd: {
      g = Eigen::VectorXd::Zero(P);
      for (int s = 0; s < cfg.mc_samples; ++s) {
        Eigen::VectorXd delta;
        if (cfg.q == 1.0) {
          // Gaussian limit: R is infinite, the rho/R normalization vanishes —
          // the rule degenerates to the vsgd draw, consuming the same stream.
          delta = detail::normal_vec(state.pert_rng, P);
          if (cfg.vsgd_scaled) delta *= cfg.rho / std::sqrt(static_cast<double>(P));
        } else {
          detail::check_q(cfg.q);
          Eigen::VectorXd u = sphere_point(state.pert_rng, P);
          const double b = state.pert_rng.beta(0.5 * P, m_of_q(cfg.q) + 1.0);
          // eps = sqrt(R^2 b) u, delta = rho * eps / R, so ||delta|| <= rho
          delta = cfg.rho * std::sqrt(b) * u;
        }
        state.max_pert_norm = std::max(state.max_pert_norm, delta.norm());
        g += oracle(params + delta);
      }
      g /= cfg.mc_samples;
      break;
    }
  }

  if (cfg.weight_decay != 0.0) g += cfg.weight_decay * params;
  state.velocity = cfg.momentum * state.velocity - cfg.lr * g;
  return params + state.velocity;
}

// ---------------------------------------------------------------------------
// Toy training: two-layer perceptron on generated datasets.
// ---------------------------------------------------------------------------

enum class ToyDataset { two_moons, small_mlp_classification };

inline ToyDataset dataset_from_name(const std::string& s) {
  if (s == "two_moons") return ToyDataset::two_moons;
  if (s == "small_mlp_classification") return ToyDataset::small_mlp_classification;
  throw std::invalid_argument("unknown dataset: " + s);
}

namespace detail {

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXi y;  // class labels
  int classes = 2;
};

inline Dataset make_two_moons(Rng& rng, int n, double noise) {
  Dataset d;
  d.X.resize(n, 2);
  d.y.resize(n);
  d.classes = 2;
  const int half = n / 2;
  for (int i = 0; i < n; ++i) {
    const double t = rng.uniform() * M_PI;
    double x0, x1;
    if (i < half) {
      x0 = std::cos(t);
      x1 = std::sin(t);
      d.y(i) = 0;
    } else {
      x0 = 1.0 - std::cos(t);
      x1 = 1.0 - std::sin(t) - 0.5;
      d.y(i) = 1;
    }
    d.X(i, 0) = x0 + noise * rng.normal();
    d.X(i, 1) = x1 + noise * rng.normal();
  }
  return d;
}

inline Dataset make_blobs3(Rng& rng, int n) {
  Dataset d;
  d.X.resize(n, 2);
  d.y.resize(n);
  d.classes = 3;
  for (int i = 0; i < n; ++i) {
    const int c = i % 3;
    const double ang = 2.0 * M_PI * c / 3.0;
    d.X(i, 0) = 2.0 * std::cos(ang) + 0.5 * rng.normal();
    d.X(i, 1) = 2.0 * std::sin(ang) + 0.5 * rng.normal();
    d.y(i) = c;
  }
  return d;
}

// input -> hidden (tanh) -> output; sigmoid/BCE for 2 classes (one logit),
// softmax/CE otherwise.  Parameters packed as [W1, b1, W2, b2].
struct Mlp {
  int in = 2, hidden = 32, out = 1;

  int n_params() const { return hidden * in + hidden + out * hidden + out; }

  Eigen::VectorXd init(Rng& rng) const {
    Eigen::VectorXd th = Eigen::VectorXd::Zero(n_params());
    const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    int i = 0;
    for (; i < hidden * in; ++i) th(i) = s1 * rng.normal();
    i += hidden;  // b1 = 0
    for (; i < hidden * in + hidden + out * hidden; ++i) th(i) = s2 * rng.normal();
    return th;
  }

  struct Views {
    Eigen::Map<const Eigen::MatrixXd> W1, W2;
    Eigen::Map<const Eigen::VectorXd> b1, b2;
  };
  Views views(const Eigen::VectorXd& th) const {
    const double* p = th.data();
    return Views{{p, hidden, in},
                 {p + hidden * in + hidden, out, hidden},
                 {p + hidden * in, hidden},
                 {p + hidden * in + hidden + out * hidden, out}};
  }

  std::pair<double, Eigen::VectorXd> loss_grad(const Eigen::VectorXd& th, const Eigen::MatrixXd& X,
                                               const Eigen::VectorXi& y) const {
    const auto v = views(th);
    const int n = static_cast<int>(X.rows());
    const Eigen::MatrixXd Z = (X * v.W1.transpose()).rowwise() + v.b1.transpose();
    const Eigen::MatrixXd A = Z.array().tanh();
    const Eigen::MatrixXd O = (A * v.W2.transpose()).rowwise() + v.b2.transpose();

    double loss = 0.0;
    Eigen::MatrixXd dO(n, out);
    if (out == 1) {
      for (int i = 0; i < n; ++i) {
        const double o = O(i, 0);
        const double yi = y(i);
        loss += softplus(o) - yi * o;
        dO(i, 0) = (sigmoid(o) - yi) / n;
      }
    } else {
      for (int i = 0; i < n; ++i) {
        const double mx = O.row(i).maxCoeff();
        const double lse = mx + std::log((O.row(i).array() - mx).exp().sum());
        loss += lse - O(i, y(i));
        for (int c = 0; c < out; ++c)
          dO(i, c) = (std::exp(O(i, c) - lse) - (c == y(i) ? 1.0 : 0.0)) / n;
      }
    }
    loss /= n;

    const Eigen::MatrixXd gW2 = dO.transpose() * A;
    const Eigen::VectorXd gb2 = dO.colwise().sum();
    const Eigen::MatrixXd dZ = (dO * v.W2).array() * (1.0 - A.array().square());
    const Eigen::MatrixXd gW1 = dZ.transpose() * X;
    const Eigen::VectorXd gb1 = dZ.colwise().sum();

    // pack in the same (column-major Map) layout as the parameter vector
    Eigen::VectorXd g(n_params());
    double* p = g.data();
    Eigen::Map<Eigen::MatrixXd>(p, hidden, in) = gW1;
    Eigen::Map<Eigen::VectorXd>(p + hidden * in, hidden) = gb1;
    Eigen::Map<Eigen::MatrixXd>(p + hidden * in + hidden, out, hidden) = gW2;
    Eigen::Map<Eigen::VectorXd>(p + hidden * in + hidden + out * hidden, out) = gb2;
    return {loss, std::move(g)};
  }

  double accuracy(const Eigen::VectorXd& th, const Eigen::MatrixXd& X,
                  const Eigen::VectorXi& y) const {
    const auto v = views(th);
    const Eigen::MatrixXd A =
        ((X * v.W1.transpose()).rowwise() + v.b1.transpose()).array().tanh();
    const Eigen::MatrixXd O = (A * v.W2.transpose()).rowwise() + v.b2.transpose();
    int hits = 0;
    for (int i = 0; i < X.rows(); ++i) {
      int pred = 0;
      if (out == 1) {
        pred = O(i, 0) > 0.0 ? 1 : 0;
      } else {
        O.row(i).maxCoeff(&pred);
      }
      if (pred == y(i)) ++hits;
    }
    return static_cast<double>(hits) / X.rows();
  }
};

}  // namespace detail

inline TrainRun train_one(const OptimizerConfig& cfg, ToyDataset which, std::uint64_t seed,
                          int cfg_index = 0) {
  validate(cfg);
  OptimizerConfig run_cfg = cfg;
  run_cfg.seed = seed;

  Rng data_rng(seed, 1);
  detail::Dataset train, test;
  detail::Mlp net;
  if (which == ToyDataset::two_moons) {
    train = detail::make_two_moons(data_rng, 400, 0.15);
    test = detail::make_two_moons(data_rng, 400, 0.15);
    net = detail::Mlp{2, 32, 1};
  } else {
    train = detail::make_blobs3(data_rng, 300);
    test = detail::make_blobs3(data_rng, 300);
    net = detail::Mlp{2, 32, 3};
  }

  Rng init_rng(seed, 2);
  Eigen::VectorXd th = net.init(init_rng);
  OptState state = make_opt_state(net.n_params(), run_cfg);
  Rng shuffle_rng(seed, 3);

  const int n = static_cast<int>(train.X.rows());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainRun run;
  run.cfg_index = cfg_index;
  run.rule = rule_name(cfg.rule);
  run.seed = seed;
  run.loss_per_epoch.reserve(cfg.epochs);

  for (int ep = 0; ep < cfg.epochs && !run.diverged; ++ep) {
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.next_u64() % (i + 1)]);
    for (int lo = 0; lo < n && !run.diverged; lo += cfg.batch_size) {
      const int hi = std::min(n, lo + cfg.batch_size);
      Eigen::MatrixXd Xb(hi - lo, train.X.cols());
      Eigen::VectorXi yb(hi - lo);
      for (int i = lo; i < hi; ++i) {
        Xb.row(i - lo) = train.X.row(order[i]);
        yb(i - lo) = train.y(order[i]);
      }
      auto oracle = [&](const Eigen::VectorXd& at) { return net.loss_grad(at, Xb, yb).second; };
      th = optimizer_step(cfg.rule, th, oracle, run_cfg, state);
      if (!th.allFinite()) run.diverged = true;
    }
    run.loss_per_epoch.push_back(run.diverged
                                     ? std::numeric_limits<double>::quiet_NaN()
                                     : net.loss_grad(th, train.X, train.y).first);
  }

  run.final_loss = run.loss_per_epoch.empty() ? std::numeric_limits<double>::quiet_NaN()
                                              : run.loss_per_epoch.back();
  run.final_acc = run.diverged ? 0.0 : net.accuracy(th, test.X, test.y);
  run.grad_evals = state.grad_evals;
  run.max_pert_norm = state.max_pert_norm;
  run.final_params = th;
  return run;
}

inline json optimizer_config_echo(const OptimizerConfig& c) {
  json j;
  j["rule"] = rule_name(c.rule);
  j["rho"] = c.rho;
  j["q"] = c.q;
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["mc_samples"] = c.mc_samples;
  j["seed"] = c.seed;
  j["vsgd_scaled"] = c.vsgd_scaled;
  return j;
}

inline ExperimentReport run_toy_training(const std::vector<OptimizerConfig>& cfgs,
                                         ToyDataset dataset, int n_seeds = 5) {
  if (cfgs.empty()) throw std::invalid_argument("run_toy_training: no configs");
  if (n_seeds < 1) throw std::invalid_argument("run_toy_training: n_seeds must be >= 1");
  detail::Timer timer;
  ExperimentReport report;
  report.config["experiment"] = "toy_training";
  report.config["dataset"] =
      dataset == ToyDataset::two_moons ? "two_moons" : "small_mlp_classification";
  report.config["n_seeds"] = n_seeds;
  {
    json arr = json::array();
    for (const auto& c : cfgs) arr.push_back(optimizer_config_echo(c));
    report.config["optimizers"] = arr;
  }

  for (std::size_t ci = 0; ci < cfgs.size(); ++ci) {
    std::vector<double> accs, losses;
    int diverged = 0;
    for (int s = 0; s < n_seeds; ++s) {
      TrainRun run = train_one(cfgs[ci], dataset, cfgs[ci].seed + s, static_cast<int>(ci));
      accs.push_back(run.final_acc);
      losses.push_back(run.final_loss);
      if (run.diverged) ++diverged;
      report.runs.push_back(std::move(run));
    }
    auto mean_se = [](const std::vector<double>& v) {
      const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double ss = 0.0;
      for (double x : v) ss += (x - m) * (x - m);
      const double se = v.size() > 1 ? std::sqrt(ss / (v.size() - 1) / v.size()) : 0.0;
      return std::pair<double, double>(m, se);
    };
    TrainSummary sum;
    sum.cfg_index = static_cast<int>(ci);
    sum.rule = rule_name(cfgs[ci].rule);
    std::tie(sum.acc_mean, sum.acc_se) = mean_se(accs);
    std::tie(sum.loss_mean, sum.loss_se) = mean_se(losses);
    sum.n_diverged = diverged;
    report.summaries.push_back(sum);
  }
  report.wall_clock_sec["toy_training"] = timer.seconds();
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization: JSON (lossless round-trip) and a flat CSV with one
// row per (experiment, rule, D, q, seed/rep, metric).
// ---------------------------------------------------------------------------

inline json report_to_json(const ExperimentReport& r) {
  json j;
  j["config"] = r.config;
  if (!r.logreg.empty()) {
    json cells = json::array();
    for (const auto& c : r.logreg) {
      json cj;
      cj["D"] = c.D;
      cj["q"] = json_num(c.q);
      cj["mean_var"] = json_num(c.mean_var);
      cj["se"] = json_num(c.se);
      cells.push_back(std::move(cj));
    }
    j["logreg"] = std::move(cells);
  }
  if (!r.radius.empty()) {
    json rows = json::array();
    for (const auto& row : r.radius) {
      json rj;
      rj["q"] = json_num(row.q);
      rj["argmin_d"] = row.argmin_d;
      json vals = json::array();
      for (double v : row.radius) vals.push_back(json_num(v));
      rj["radius"] = std::move(vals);
      rows.push_back(std::move(rj));
    }
    j["radius"] = std::move(rows);
  }
  if (!r.runs.empty()) {
    json runs = json::array();
    for (const auto& run : r.runs) {
      json rj;
      rj["cfg_index"] = run.cfg_index;
      rj["rule"] = run.rule;
      rj["seed"] = run.seed;
      rj["final_loss"] = json_num(run.final_loss);
      rj["final_acc"] = json_num(run.final_acc);
      rj["diverged"] = run.diverged;
      rj["grad_evals"] = run.grad_evals;
      rj["max_pert_norm"] = json_num(run.max_pert_norm);
      json traj = json::array();
      for (double v : run.loss_per_epoch) traj.push_back(json_num(v));
      rj["loss_per_epoch"] = std::move(traj);
      runs.push_back(std::move(rj));
    }
    j["runs"] = std::move(runs);
    json sums = json::array();
    for (const auto& s : r.summaries) {
      json sj;
      sj["cfg_index"] = s.cfg_index;
      sj["rule"] = s.rule;
      sj["acc_mean"] = json_num(s.acc_mean);
      sj["acc_se"] = json_num(s.acc_se);
      sj["loss_mean"] = json_num(s.loss_mean);
      sj["loss_se"] = json_num(s.loss_se);
      sj["n_diverged"] = s.n_diverged;
      sums.push_back(std::move(sj));
    }
    j["summaries"] = std::move(sums);
  }
  if (r.include_timings) {
    json t;
    for (const auto& [k, v] : r.wall_clock_sec) t[k] = json_num(v);
    j["wall_clock_sec"] = std::move(t);
  }
  return j;
}

inline ExperimentReport report_from_json(const json& j) {
  ExperimentReport r;
  r.config = j.at("config");
  if (j.contains("logreg"))
    for (const auto& cj : j["logreg"]) {
      LogRegCell c;
      c.D = cj.at("D").get<int>();
      c.q = json_get_num(cj.at("q"));
      c.mean_var = json_get_num(cj.at("mean_var"));
      c.se = json_get_num(cj.at("se"));
      r.logreg.push_back(c);
    }
  if (j.contains("radius"))
    for (const auto& rj : j["radius"]) {
      RadiusRow row;
      row.q = json_get_num(rj.at("q"));
      row.argmin_d = rj.at("argmin_d").get<int>();
      for (const auto& v : rj.at("radius")) row.radius.push_back(json_get_num(v));
      r.radius.push_back(std::move(row));
    }
  if (j.contains("runs")) {
    for (const auto& rj : j["runs"]) {
      TrainRun run;
      run.cfg_index = rj.at("cfg_index").get<int>();
      run.rule = rj.at("rule").get<std::string>();
      run.seed = rj.at("seed").get<std::uint64_t>();
      run.final_loss = json_get_num(rj.at("final_loss"));
      run.final_acc = json_get_num(rj.at("final_acc"));
      run.diverged = rj.at("diverged").get<bool>();
      run.grad_evals = rj.at("grad_evals").get<std::size_t>();
      run.max_pert_norm = json_get_num(rj.at("max_pert_norm"));
      for (const auto& v : rj.at("loss_per_epoch")) run.loss_per_epoch.push_back(json_get_num(v));
      r.runs.push_back(std::move(run));
    }
    for (const auto& sj : j.at("summaries")) {
      TrainSummary s;
      s.cfg_index = sj.at("cfg_index").get<int>();
      s.rule = sj.at("rule").get<std::string>();
      s.acc_mean = json_get_num(sj.at("acc_mean"));
      s.acc_se = json_get_num(sj.at("acc_se"));
      s.loss_mean = json_get_num(sj.at("loss_mean"));
      s.loss_se = json_get_num(sj.at("loss_se"));
      s.n_diverged = sj.at("n_diverged").get<int>();
      r.summaries.push_back(s);
    }
  }
  if (j.contains("wall_clock_sec")) {
    r.include_timings = true;
    for (const auto& [k, v] : j["wall_clock_sec"].items()) r.wall_clock_sec[k] = json_get_num(v);
  }
  return r;
}

// Flat CSV, schema v1: experiment,rule,D,q,seed,metric,value
inline std::string report_to_csv(const ExperimentReport& r) {
  std::string out = "experiment,rule,D,q,seed,metric,value\r\n";
  auto row = [&out](const std::string& exp, const std::string& rule, const std::string& D,
                    const std::string& q, const std::string& seed, const std::string& metric,
                    double value) {
    out += exp + "," + rule + "," + D + "," + q + "," + seed + "," + metric + "," +
           format_double(value) + "\r\n";
  };
  for (const auto& c : r.logreg) {
    row("logreg", "", std::to_string(c.D), format_double(c.q), "", "mean_var", c.mean_var);
    row("logreg", "", std::to_string(c.D), format_double(c.q), "", "se", c.se);
  }
  for (const auto& rr : r.radius)
    for (std::size_t i = 0; i < rr.radius.size(); ++i)
      row("radius", "", std::to_string(i + 1), format_double(rr.q), "", "radius", rr.radius[i]);
  for (const auto& run : r.runs) {
    row("train", run.rule, "", "", std::to_string(run.seed), "final_acc", run.final_acc);
    row("train", run.rule, "", "", std::to_string(run.seed), "final_loss", run.final_loss);
  }
  for (const auto& s : r.summaries) {
    row("train_summary", s.rule, "", "", "", "acc_mean", s.acc_mean);
    row("train_summary", s.rule, "", "", "", "acc_se", s.acc_se);
    row("train_summary", s.rule, "", "", "", "loss_mean", s.loss_mean);
    row("train_summary", s.rule, "", "", "", "loss_se", s.loss_se);
  }
  return out;
}

}  // namespace qstein
