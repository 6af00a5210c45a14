#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "penprior/json_io.hpp"

namespace penprior::cli {

enum ExitCode : int { kOk = 0, kVerificationFailed = 1, kInvalidInput = 2, kNumericalFailure = 3 };

struct CommandResult {
  int exit_code = kOk;
  std::optional<std::string> report_path;
  std::string summary;
  Json report;
};

/// Flags every subcommand accepts.
struct CommonOptions {
  std::string out;
  std::uint64_t seed = 0;
  std::optional<double> tolerance;
};

struct PenaltyOptions {
  std::string kind;
  std::optional<double> lambda;
  int dim = 1;
  std::vector<double> coeffs;
};

struct PosteriorOptions {
  std::string kind = "dirac";
  std::vector<double> sigma2;
  double epsilon = kDefaultEpsilonMachine;
};

inline PenaltySpec build_penalty(const PenaltyOptions& o) {
  if (o.kind == "poly") {
    require(!o.coeffs.empty(), ErrorKind::InvalidParameter, "--penalty poly needs --coeffs");
    auto p = PenaltySpec::even_polynomial(o.coeffs, o.lambda.value_or(1.0), o.dim);
    p.validate();
    return p;
  }
  require(o.lambda.has_value(), ErrorKind::InvalidParameter, "--lambda is required for --penalty " + o.kind);
  require(o.coeffs.empty(), ErrorKind::InvalidParameter, "--coeffs only applies to --penalty poly");
  PenaltySpec p{penalty_kind_from_string(o.kind), *o.lambda, o.dim};
  require(p.kind != PenaltyKind::EvenPolynomial && p.kind != PenaltyKind::GridSampled, ErrorKind::InvalidParameter,
          "use --penalty poly for polynomial penalties");
  p.validate();
  return p;
}

inline PosteriorFamily build_posterior(const PosteriorOptions& o, int dim) {
  PosteriorFamily f;
  f.kind = posterior_kind_from_string(o.kind);
  f.dim = dim;
  require(f.kind != PosteriorKind::GaussianFreeVar, ErrorKind::InvalidParameter,
          "use --posterior gaussian with --sigma2");
  if (f.kind == PosteriorKind::GaussianFixedVar) {
    require(!o.sigma2.empty(), ErrorKind::InvalidParameter, "--posterior gaussian needs --sigma2");
    f.sigma2 = {o.sigma2.front()};
  } else {
    require(o.sigma2.empty(), ErrorKind::InvalidParameter, "--sigma2 only applies to --posterior gaussian");
    f.epsilon_machine = o.epsilon;
  }
  f.validate();
  return f;
}

/// Prior strings: gaussian:VAR[:MEAN], laplace:RATE, expnorm:RATE[:P].
inline PriorDensity parse_prior(const std::string& spec, int dim) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
  require(parts.size() >= 2, ErrorKind::InvalidParameter, "prior must look like form:param, got '" + spec + "'");
  auto num = [&](std::size_t i) {
    try {
      std::size_t used = 0;
      const double v = std::stod(parts[i], &used);
      require(used == parts[i].size(), ErrorKind::InvalidParameter, "bad number '" + parts[i] + "'");
      return v;
    } catch (const std::logic_error&) {
      fail(ErrorKind::InvalidParameter, "bad number '" + parts[i] + "' in prior '" + spec + "'");
    }
  };
  const std::string& form = parts[0];
  if (form == "gaussian" && parts.size() <= 3) return PriorDensity::gaussian(parts.size() == 3 ? num(2) : 0.0, num(1), dim);
  if (form == "laplace" && parts.size() == 2) return PriorDensity::laplace(num(1), dim);
  if (form == "expnorm" && parts.size() <= 3)
    return PriorDensity::exp_norm(num(1), parts.size() == 3 ? static_cast<int>(num(2)) : dim);
  fail(ErrorKind::InvalidParameter, "unknown prior '" + spec + "'");
}

inline Json read_json_arg(const std::string& value) {
  try {
    if (!value.empty() && value.front() == '{') return Json::parse(value);
    std::ifstream in(value);
    require(static_cast<bool>(in), ErrorKind::InvalidParameter, "cannot open '" + value + "'");
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidParameter, "malformed JSON in '" + value + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------

struct DerivePriorOptions {
  PenaltyOptions penalty;
  PosteriorOptions posterior;
  std::string engine = "auto";
};

/// Condition (A) across every --sigma2 value, then the prior for the first one.
inline CommandResult cmd_derive_prior(const DerivePriorOptions& o, const CommonOptions& common) {
  const auto penalty = build_penalty(o.penalty);
  const auto posterior = build_posterior(o.posterior, penalty.dim);
  require(o.engine == "auto" || o.engine == "symbolic" || o.engine == "grid", ErrorKind::InvalidParameter,
          "--engine must be auto, symbolic or grid");
  CommandResult res;
  res.report = {{"command", "derive-prior"}, {"penalty", to_json(penalty)}, {"posterior", to_json(posterior)}};

  ConditionAOptions copts;
  if (common.tolerance) copts.symbolic_tolerance = copts.grid_tolerance = *common.tolerance;
  // The nu sweep runs over the free-variance family; the prior uses the first variance.
  std::vector<std::vector<double>> nus;
  for (double s : o.posterior.sigma2) nus.push_back({s});
  const auto swept = posterior.is_gaussian() ? PosteriorFamily::gaussian_free(penalty.dim) : posterior;
  const auto cond = check_condition_A(penalty, swept, nus, copts);
  res.report["condition_A"] = to_json(cond);
  if (!cond.holds()) {
    res.exit_code = kVerificationFailed;
    std::ostringstream s;
    s << "condition (A) fails: max deviation " << cond.max_deviation << " (tolerance " << cond.tolerance << ")"
      << (cond.integrable ? "" : ", exp(A) not integrable");
    res.summary = s.str();
    return res;
  }

  PriorDensity prior;
  std::string engine = "dirac";
  if (posterior.kind == PosteriorKind::Dirac) {
    prior = derive_prior_dirac(penalty);
  } else {
    const bool symbolic = o.engine == "symbolic" || (o.engine == "auto" && penalty.is_polynomial());
    engine = symbolic ? "symbolic" : "grid";
    prior = symbolic ? normalize_prior(derive_prior_symbolic(penalty, posterior))
                     : normalize_prior(derive_prior_grid(penalty, posterior), penalty.dim);
  }
  res.report["engine"] = engine;
  res.report["prior"] = to_json(prior);
  res.summary = "prior " + std::string(to_string(prior.form)) + " via " + engine + " engine";
  return res;
}

// ---------------------------------------------------------------------------

struct VerifyOptions {
  PenaltyOptions penalty;
  PosteriorOptions posterior;
  std::string prior;
  double mu_lo = -3.0;
  double mu_hi = 3.0;
  int mu_points = 21;
  int nodes = 64;
  std::size_t mc_samples = 1'000'000;
};

inline CommandResult cmd_verify(const VerifyOptions& o, const CommonOptions& common) {
  const auto penalty = build_penalty(o.penalty);
  const auto posterior = build_posterior(o.posterior, penalty.dim);
  const auto prior = parse_prior(o.prior, penalty.dim);
  QuadratureConfig q;
  q.nodes = o.nodes;
  q.mc_samples = o.mc_samples;
  q.seed = common.seed;
  std::vector<std::vector<double>> nus;
  for (double s : o.posterior.sigma2) nus.push_back({s});
  const auto rep = verify_correspondence(penalty, posterior, prior, mu_line(o.mu_lo, o.mu_hi, o.mu_points, penalty.dim),
                                         nus, q);
  const double tol = common.tolerance.value_or(1e-8);
  CommandResult res;
  res.report = {{"command", "verify"},
                {"penalty", to_json(penalty)},
                {"posterior", to_json(posterior)},
                {"prior", to_json(prior)},
                {"tolerance", tol},
                {"passes", rep.passes(tol)},
                {"kl_report", to_json(rep)}};
  res.exit_code = rep.passes(tol) ? kOk : kVerificationFailed;
  std::ostringstream s;
  s << (rep.passes(tol) ? "correspondence holds" : "correspondence fails") << ": max residual " << rep.max_residual
    << ", K = " << rep.fitted_K;
  res.summary = s.str();
  return res;
}

// ---------------------------------------------------------------------------

struct PlanLambdaOptions {
  std::string arch;
  std::string penalty;
  std::string scheme = "bayesian";
  std::optional<double> global_lambda;
  std::optional<double> mixing_gamma;
  bool annotate = false;
  std::string csv;
};

inline CommandResult cmd_plan_lambda(const PlanLambdaOptions& o, const CommonOptions&) {
  const auto arch = architecture_from_json(read_json_arg(o.arch));
  PlanOptions po;
  po.global_lambda = o.global_lambda;
  po.mixing_gamma = o.mixing_gamma;
  po.annotate_ratio = o.annotate;
  const auto p = plan(arch, plan_penalty_from_string(o.penalty), scheme_from_string(o.scheme), po);
  CommandResult res;
  res.report = to_json(p);
  if (!o.csv.empty()) {
    std::ofstream f(o.csv);
    require(static_cast<bool>(f), ErrorKind::InvalidParameter, "cannot write '" + o.csv + "'");
    f << to_csv(p);
  }
  std::ostringstream s;
  s << p.per_layer.size() << " layers, global lambda " << p.global_lambda;
  res.summary = s.str();
  return res;
}

// ---------------------------------------------------------------------------

struct TrainPruneOptions {
  std::string arch;
  std::string penalty = "group-lasso";
  std::string scheme = "bayesian";
  std::string lambda = "auto";
  std::string data = "synthetic";
  std::size_t samples = 1000;
  int features = 20;
  int classes = 4;
  double noise = 2.0;
  double separation = 1.0;
  std::vector<int> hidden{64, 32};
  long batch = 32;
  std::string activation = "relu";
  std::vector<double> learning_rates{1e-2};
  int patience = 50;
  int max_epochs = 2000;
  double threshold = 1e-3;
  std::string penalty_step = "proximal";
  std::optional<double> mixing_gamma;
  bool sweep = false;
  std::string csv;
};

inline double parse_lambda(const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::logic_error&) {
  }
  fail(ErrorKind::InvalidParameter, "--lambda must be a number, a comma list or 'auto'");
}

/// One row per (lambda, seed) run: the sweep curve in tabular form.
inline std::string sweep_csv(const SweepResult& s) {
  std::ostringstream out;
  out.precision(17);
  out << "global_lambda,learning_rate,seed,test_acc,param_count,hidden_pruned_fraction\n";
  for (const auto& e : s.entries)
    for (const auto& r : e.runs)
      out << e.global_lambda << ',' << e.best_learning_rate << ',' << r.seed << ',' << r.final_test_acc << ','
          << r.final_param_count << ',' << r.hidden_pruned_fraction() << '\n';
  return out.str();
}

inline CommandResult cmd_train_prune(const TrainPruneOptions& o, const CommonOptions& common) {
  const Dataset data = o.data == "synthetic"
                           ? make_synthetic_dataset(o.samples, o.features, o.classes, o.noise, common.seed, o.separation)
                           : load_csv_dataset(o.data, common.seed);
  const long n = static_cast<long>(data.train.size());
  require(o.activation == "relu" || o.activation == "tanh", ErrorKind::InvalidParameter,
          "--activation must be relu or tanh");
  const Activation act = o.activation == "relu" ? Activation::ReLU : Activation::Tanh;

  ArchitectureSpec arch;
  if (!o.arch.empty()) {
    arch = architecture_from_json(read_json_arg(o.arch));
  } else {
    std::vector<int> sizes{data.n_features()};
    sizes.insert(sizes.end(), o.hidden.begin(), o.hidden.end());
    sizes.push_back(data.n_classes);
    for (std::size_t l = 1; l < sizes.size(); ++l)
      arch.layers.push_back({static_cast<int>(l), sizes[l], sizes[l - 1]});
    arch.B = o.batch;
  }
  // The data term averages over the training split.
  arch.n = n;
  arch.B = std::min(arch.B, n);
  require(arch.layers.front().P_l == data.n_features(), ErrorKind::ShapeMismatch,
          "first layer P_l differs from the feature count");
  require(arch.layers.back().n_l >= data.n_classes, ErrorKind::ShapeMismatch, "last layer has fewer outputs than classes");

  TrainConfig cfg;
  cfg.seed = common.seed;
  cfg.learning_rates = o.learning_rates;
  cfg.patience = o.patience;
  cfg.max_epochs = o.max_epochs;
  cfg.prune_threshold = o.threshold;
  require(o.penalty_step == "proximal" || o.penalty_step == "subgradient", ErrorKind::InvalidParameter,
          "--penalty-step must be proximal or subgradient");
  cfg.penalty_step = o.penalty_step == "proximal" ? PenaltyStep::Proximal : PenaltyStep::Subgradient;
  cfg.validate();

  const auto kind = plan_penalty_from_string(o.penalty);
  const auto scheme = scheme_from_string(o.scheme);
  PlanOptions po;
  po.mixing_gamma = o.mixing_gamma;

  CommandResult res;
  if (o.sweep) {
    std::vector<double> grid = default_sweep_grid(scheme, n);
    if (o.lambda != "auto") {
      grid.clear();
      std::stringstream ss(o.lambda);
      for (std::string item; std::getline(ss, item, ',');) grid.push_back(parse_lambda(item));
    }
    const auto sweep = lambda_sweep(data, arch, kind, scheme, grid, cfg, act, po);
    if (!o.csv.empty()) {
      std::ofstream f(o.csv);
      require(static_cast<bool>(f), ErrorKind::InvalidParameter, "cannot write '" + o.csv + "'");
      f << sweep_csv(sweep);
    }
    res.report = {{"command", "train-prune"}, {"mode", "sweep"}, {"architecture", to_json(arch)},
                  {"sweep", to_json(sweep)}};
    res.summary = std::to_string(sweep.training_runs) + " training runs over " + std::to_string(grid.size()) +
                  " lambda values";
    return res;
  }

  std::optional<double> global;
  if (o.lambda != "auto") {
    global = parse_lambda(o.lambda);
  } else {
    require(scheme == Scheme::Bayesian, ErrorKind::InvalidParameter, "--lambda auto needs --scheme bayesian");
  }
  po.global_lambda = global;
  LambdaPlan p = plan(arch, kind, scheme, po);
  if (global) p.global_lambda = *global;

  MLPModel model = make_model(arch, act, common.seed);
  const auto rep = train_two_phase(model, data, p, cfg);
  res.report = {{"command", "train-prune"}, {"mode", "single"}, {"architecture", to_json(arch)},
                {"report", to_json(rep)}};
  std::ostringstream s;
  s << "test accuracy " << rep.final_test_acc << ", " << 100.0 * rep.hidden_pruned_fraction()
    << "% hidden neurons pruned, " << rep.final_param_count << " weights alive";
  res.summary = s.str();
  return res;
}

// ---------------------------------------------------------------------------

struct RateBoundOptions {
  std::optional<double> gamma;
  std::vector<long> n_list{100, 1000, 10000};
  std::vector<double> w_star{0.0};
  double noise_var = 1.0;
  double radius = 1.0;
  double prior_mean = 0.0;
  double prior_var = 1.0;
  std::size_t mc_samples = 20000;
  std::optional<std::vector<double>> constants;
};

inline CommandResult cmd_rate_bound(const RateBoundOptions& o, const CommonOptions& common) {
  require(o.gamma.has_value(), ErrorKind::InvalidParameter, "--gamma is required");
  require(!o.n_list.empty(), ErrorKind::InvalidParameter, "--n needs at least one value");
  const auto model = ToyModel::standard(o.w_star, o.noise_var, o.radius);
  ProductDistribution prior(model.dim(), CoordinateDistribution::gaussian(o.prior_mean, o.prior_var));
  const long n_max = *std::max_element(o.n_list.begin(), o.n_list.end());
  auto witness = corollary_rate(model, *o.gamma, prior, 1, n_max);
  if (o.constants) {
    require(o.constants->size() == 3, ErrorKind::InvalidParameter, "--constants needs C1,C2,C3");
    witness.C1 = (*o.constants)[0];
    witness.C2 = (*o.constants)[1];
    witness.C3 = (*o.constants)[2];
  }
  const auto rep = verify_witness(model, witness, o.n_list, o.mc_samples, common.seed);
  CommandResult res;
  res.report = {{"command", "rate-bound"},
                {"gamma", *o.gamma},
                {"witness", {{"C1", witness.C1}, {"C2", witness.C2}, {"C3", witness.C3}}},
                {"model", {{"w_star", model.w_star}, {"noise_variance", model.noise_variance},
                           {"radius", model.radius}, {"lipschitz", model.lipschitz}}},
                {"verification", to_json(rep)}};
  res.exit_code = rep.all_hold() ? kOk : kVerificationFailed;
  res.summary = rep.all_hold() ? "witness holds at every n" : "witness fails at some n";
  return res;
}

// ---------------------------------------------------------------------------

struct RenyiOptions {
  std::optional<double> gamma;
  std::string beta;
  std::string alpha;
  PenaltyOptions penalty;
  PosteriorOptions posterior{"gaussian", {}, kDefaultEpsilonMachine};
  double K = 0.0;
  int dim = 1;
  std::size_t mc_samples = 1'000'000;
  double domain = 20.0;
  std::size_t grid_points = 4096;
};

/// Either D_gamma(beta || alpha) for two named priors, or the candidate prior of
/// a penalty under a Gaussian posterior.
inline CommandResult cmd_renyi(const RenyiOptions& o, const CommonOptions& common) {
  require(o.gamma.has_value(), ErrorKind::InvalidParameter, "--gamma is required");
  CommandResult res;
  if (!o.penalty.kind.empty()) {
    require(o.beta.empty() && o.alpha.empty(), ErrorKind::InvalidParameter,
            "--penalty cannot be combined with --beta/--alpha");
    const auto penalty = build_penalty(o.penalty);
    const auto posterior = build_posterior(o.posterior, penalty.dim);
    require(posterior.is_gaussian(), ErrorKind::InvalidParameter, "the Renyi candidate needs a Gaussian posterior");
    GridLayout domain{-o.domain, o.domain, o.grid_points, 0.0};
    const auto cand = renyi_prior_candidate(penalty, posterior, *o.gamma, o.K, domain);
    res.report = {{"command", "renyi"}, {"mode", "candidate"}, {"penalty", to_json(penalty)},
                  {"posterior", to_json(posterior)}, {"candidate", to_json(cand)}};
    res.summary = "candidate prior on " + std::to_string(cand.alpha.n_points()) + " points, " +
                  std::to_string(cand.non_positive_points) + " non-positive";
    return res;
  }
  require(!o.beta.empty() && !o.alpha.empty(), ErrorKind::InvalidParameter,
          "give --beta and --alpha, or --penalty for a candidate prior");
  const auto beta = parse_prior(o.beta, o.dim);
  const auto alpha = parse_prior(o.alpha, o.dim);
  QuadratureConfig q;
  q.mc_samples = o.mc_samples;
  q.seed = common.seed;
  const auto r = renyi_divergence(beta, alpha, *o.gamma, q);
  res.report = {{"command", "renyi"}, {"mode", "divergence"}, {"gamma", *o.gamma}, {"beta", to_json(beta)},
                {"alpha", to_json(alpha)}, {"result", to_json(r)}};
  std::ostringstream s;
  s << "D_" << *o.gamma << " = " << (r.finite ? std::to_string(r.value) : std::string("inf"));
  res.summary = s.str();
  return res;
}

// ---------------------------------------------------------------------------

/// Writes the report to `out` (or stdout) and prints the summary.
inline void emit(CommandResult& res, const CommonOptions& common, std::ostream& out, std::ostream& err) {
  const std::string text = res.report.dump(2) + "\n";
  if (common.out.empty()) {
    out << text;
    err << res.summary << "\n";
    return;
  }
  std::ofstream f(common.out, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::InvalidParameter, "cannot write '" + common.out + "'");
  f << text;
  res.report_path = common.out;
  out << res.summary << "\n";
}

inline int exit_code_for(const Error& e) { return e.is_input_error() ? kInvalidInput : kNumericalFailure; }

}  // namespace penprior::cli
