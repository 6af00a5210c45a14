#pragma once

#include <CLI11.hpp>

#include <exception>
#include <functional>
#include <iostream>
#include <string>

#include "commands.hpp"

namespace penprior::cli {

inline void add_common(CLI::App* sub, CommonOptions& c) {
  sub->add_option("--out", c.out, "Write the JSON report here instead of stdout");
  sub->add_option("--seed", c.seed, "Seed for every random stream")->capture_default_str();
  sub->add_option("--tolerance", c.tolerance, "Pass/fail tolerance override");
}

inline void add_penalty(CLI::App* sub, PenaltyOptions& p, bool required = true) {
  auto* opt = sub->add_option("--penalty", p.kind, "l2, l1, group-lasso, reversed-group-lasso or poly");
  if (required) opt->required();
  sub->add_option("--lambda", p.lambda, "Penalty factor (defaults to 1 for poly)");
  sub->add_option("--dim", p.dim, "Penalty dimension")->capture_default_str();
  sub->add_option("--coeffs", p.coeffs, "poly: coefficient of mu^(2k) at position k")->delimiter(',');
}

inline void add_posterior(CLI::App* sub, PosteriorOptions& p) {
  sub->add_option("--posterior", p.kind, "dirac or gaussian")->capture_default_str();
  sub->add_option("--sigma2", p.sigma2, "gaussian: variances; the first is the posterior's")->delimiter(',');
  sub->add_option("--epsilon", p.epsilon, "dirac: width convention");
}

/// Parses argv, runs one subcommand and returns its exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Penalty-to-prior toolkit: derive priors, verify correspondences, plan per-layer factors, "
               "prune networks, check rate witnesses."};
  app.require_subcommand(1);
  CommonOptions common;
  std::function<CommandResult()> action;

  DerivePriorOptions derive;
  auto* d = app.add_subcommand("derive-prior", "Derive the prior matching a penalty and check condition (A)");
  add_penalty(d, derive.penalty);
  add_posterior(d, derive.posterior);
  d->add_option("--engine", derive.engine, "auto, symbolic or grid")->capture_default_str();
  add_common(d, common);
  d->callback([&] { action = [&] { return cmd_derive_prior(derive, common); }; });

  VerifyOptions verify;
  auto* v = app.add_subcommand("verify", "Check r(mu) = KL(beta_mu || alpha) + K over a mu grid");
  add_penalty(v, verify.penalty);
  add_posterior(v, verify.posterior);
  v->add_option("--prior", verify.prior, "gaussian:VAR[:MEAN], laplace:RATE or expnorm:RATE[:P]")->required();
  v->add_option("--mu-lo", verify.mu_lo, "Lower end of the mu grid")->capture_default_str();
  v->add_option("--mu-hi", verify.mu_hi, "Upper end of the mu grid")->capture_default_str();
  v->add_option("--mu-points", verify.mu_points, "Number of mu values")->capture_default_str();
  v->add_option("--nodes", verify.nodes, "Gauss-Hermite nodes")->capture_default_str();
  v->add_option("--mc-samples", verify.mc_samples, "Monte-Carlo samples")->capture_default_str();
  add_common(v, common);
  v->callback([&] { action = [&] { return cmd_verify(verify, common); }; });

  PlanLambdaOptions planning;
  auto* p = app.add_subcommand("plan-lambda", "Per-layer penalty factors for an architecture");
  p->add_option("--arch", planning.arch, "Architecture JSON file or inline JSON")->required();
  p->add_option("--penalty", planning.penalty, "l2, l1, group-lasso, reversed-group-lasso or sparse-group-lasso")
      ->required();
  p->add_option("--scheme", planning.scheme, "bayesian or usual")->capture_default_str();
  p->add_option("--global", planning.global_lambda, "Global factor (required for usual)");
  p->add_option("--mixing-gamma", planning.mixing_gamma, "Sparse group-Lasso mixing in [0, 1]");
  p->add_flag("--annotate", planning.annotate, "Attach the observed 10x-100x ratio note");
  p->add_option("--csv", planning.csv, "Also write l,n_l,P_l,lambda_l CSV here");
  add_common(p, common);
  p->callback([&] { action = [&] { return cmd_plan_lambda(planning, common); }; });

  TrainPruneOptions train;
  auto* t = app.add_subcommand("train-prune", "Train an MLP with a planned penalty and prune it");
  t->add_option("--arch", train.arch, "Architecture JSON (n is replaced by the training-split size)");
  t->add_option("--penalty", train.penalty, "Penalty kind")->capture_default_str();
  t->add_option("--scheme", train.scheme, "bayesian or usual")->capture_default_str();
  t->add_option("--lambda", train.lambda, "Global factor, 'auto' (1/n), or a comma list with --sweep")
      ->capture_default_str();
  t->add_option("--data", train.data, "CSV path (header, label last) or 'synthetic'")->capture_default_str();
  t->add_option("--samples", train.samples, "synthetic: sample count")->capture_default_str();
  t->add_option("--features", train.features, "synthetic: feature count")->capture_default_str();
  t->add_option("--classes", train.classes, "synthetic: class count")->capture_default_str();
  t->add_option("--noise", train.noise, "synthetic: cluster noise")->capture_default_str();
  t->add_option("--separation", train.separation, "synthetic: center spread")->capture_default_str();
  t->add_option("--hidden", train.hidden, "Hidden sizes when --arch is absent")->delimiter(',');
  t->add_option("--batch", train.batch, "Minibatch size when --arch is absent")->capture_default_str();
  t->add_option("--activation", train.activation, "relu or tanh")->capture_default_str();
  t->add_option("--lr", train.learning_rates, "Learning rate(s); the first is used outside sweeps")->delimiter(',');
  t->add_option("--patience", train.patience, "Stagnation window in epochs")->capture_default_str();
  t->add_option("--max-epochs", train.max_epochs, "Cap on epochs over both phases")->capture_default_str();
  t->add_option("--threshold", train.threshold, "Pruning norm threshold")->capture_default_str();
  t->add_option("--penalty-step", train.penalty_step, "proximal or subgradient")->capture_default_str();
  t->add_option("--mixing-gamma", train.mixing_gamma, "Sparse group-Lasso mixing");
  t->add_flag("--sweep", train.sweep, "Run the lambda sweep instead of one training");
  t->add_option("--csv", train.csv, "With --sweep, also write one CSV row per run here");
  add_common(t, common);
  t->callback([&] { action = [&] { return cmd_train_prune(train, common); }; });

  RateBoundOptions rate;
  auto* r = app.add_subcommand("rate-bound", "Check the rate witness on the Gaussian-mean toy model");
  r->add_option("--gamma", rate.gamma, "Rate exponent in (0, 1)")->required();
  r->add_option("--n", rate.n_list, "Sample sizes")->delimiter(',');
  r->add_option("--w-star", rate.w_star, "True parameter")->delimiter(',');
  r->add_option("--noise-var", rate.noise_var, "Observation noise variance")->capture_default_str();
  r->add_option("--radius", rate.radius, "Lipschitz ball radius")->capture_default_str();
  r->add_option("--prior-mean", rate.prior_mean, "Gaussian prior mean")->capture_default_str();
  r->add_option("--prior-var", rate.prior_var, "Gaussian prior variance")->capture_default_str();
  r->add_option("--mc-samples", rate.mc_samples, "Monte-Carlo samples per coordinate")->capture_default_str();
  r->add_option("--constants", rate.constants, "Override C1,C2,C3")->delimiter(',');
  add_common(r, common);
  r->callback([&] { action = [&] { return cmd_rate_bound(rate, common); }; });

  RenyiOptions renyi;
  auto* y = app.add_subcommand("renyi", "Renyi divergence between priors, or a Renyi candidate prior");
  y->add_option("--gamma", renyi.gamma, "Order, > 0 and != 1")->required();
  y->add_option("--beta", renyi.beta, "First prior (same syntax as verify --prior)");
  y->add_option("--alpha", renyi.alpha, "Second prior");
  y->add_option("--prior-dim", renyi.dim, "Dimension for --beta/--alpha")->capture_default_str();
  add_penalty(y, renyi.penalty, false);
  add_posterior(y, renyi.posterior);
  y->add_option("--K", renyi.K, "Candidate offset K")->capture_default_str();
  y->add_option("--domain", renyi.domain, "Candidate grid half-width")->capture_default_str();
  y->add_option("--grid-points", renyi.grid_points, "Candidate grid size (power of two)")->capture_default_str();
  y->add_option("--mc-samples", renyi.mc_samples, "Monte-Carlo samples")->capture_default_str();
  add_common(y, common);
  y->callback([&] { action = [&] { return cmd_renyi(renyi, common); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalidInput;
  }
  try {
    CommandResult res = action();
    emit(res, common, out, err);
    return res.exit_code;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumericalFailure;
  }
}

}  // namespace penprior::cli
