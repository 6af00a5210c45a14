#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "penprior/error.hpp"
#include "penprior/penalty.hpp"
#include "penprior/prior.hpp"

namespace penprior {

/// Penalty kinds the planner and the pruning lab understand.
enum class PlanPenalty { L2, L1, GroupLasso, ReversedGroupLasso, SparseGroupLasso };

inline std::string_view to_string(PlanPenalty k) {
  switch (k) {
    case PlanPenalty::L2: return "l2";
    case PlanPenalty::L1: return "l1";
    case PlanPenalty::GroupLasso: return "group-lasso";
    case PlanPenalty::ReversedGroupLasso: return "reversed-group-lasso";
    case PlanPenalty::SparseGroupLasso: return "sparse-group-lasso";
  }
  return "?";
}

inline PlanPenalty plan_penalty_from_string(std::string_view s) {
  if (s == "l2" || s == "L2") return PlanPenalty::L2;
  if (s == "l1" || s == "L1") return PlanPenalty::L1;
  if (s == "group-lasso" || s == "GroupLasso") return PlanPenalty::GroupLasso;
  if (s == "reversed-group-lasso" || s == "ReversedGroupLasso") return PlanPenalty::ReversedGroupLasso;
  if (s == "sparse-group-lasso" || s == "SparseGroupLasso") return PlanPenalty::SparseGroupLasso;
  fail(ErrorKind::UnsupportedPenalty, "unknown penalty kind '" + std::string(s) + "'");
}

enum class Scheme { Bayesian, Usual };

inline std::string_view to_string(Scheme s) { return s == Scheme::Bayesian ? "bayesian" : "usual"; }

inline Scheme scheme_from_string(std::string_view s) {
  if (s == "bayesian" || s == "Bayesian") return Scheme::Bayesian;
  if (s == "usual" || s == "Usual") return Scheme::Usual;
  fail(ErrorKind::InvalidParameter, "unknown scheme '" + std::string(s) + "'");
}

/// One layer: n_l neurons (or filters), each with P_l incoming weights.
struct LayerShape {
  int l = 1;
  int n_l = 1;
  int P_l = 1;
};

struct ArchitectureSpec {
  std::vector<LayerShape> layers;
  /// Training-set size.
  long n = 1;
  /// Minibatch size.
  long B = 1;

  void validate() const {
    require(!layers.empty(), ErrorKind::InvalidParameter, "architecture has no layers");
    require(n >= 1 && B >= 1 && B <= n, ErrorKind::InvalidParameter, "need 1 <= B <= n");
    for (const auto& s : layers)
      require(s.n_l >= 1 && s.P_l >= 1, ErrorKind::InvalidParameter,
              "layer " + std::to_string(s.l) + ": n_l and P_l must be >= 1");
  }
};

namespace detail {

inline void check_shape(int P_l, int n_l, bool needs_n) {
  require(P_l >= 1, ErrorKind::InvalidParameter, "P_l must be >= 1");
  if (needs_n) require(n_l >= 1, ErrorKind::InvalidParameter, "n_l must be >= 1 for the reversed group-Lasso");
}

}  // namespace detail

/// Per-layer factor that makes the MAP prior meet the Glorot moment condition.
inline double lambda_bayesian(PlanPenalty kind, int P_l, int n_l = 0) {
  detail::check_shape(P_l, n_l, kind == PlanPenalty::ReversedGroupLasso);
  const double p = P_l;
  switch (kind) {
    case PlanPenalty::L2: return p / 2.0;
    case PlanPenalty::L1: return std::sqrt(2.0 * p);
    case PlanPenalty::GroupLasso: return std::sqrt(p * (p + 1.0));
    case PlanPenalty::ReversedGroupLasso: return std::sqrt(p * (n_l + 1.0));
    case PlanPenalty::SparseGroupLasso: break;
  }
  fail(ErrorKind::UnsupportedPenalty, "no single Bayesian factor for " + std::string(to_string(kind)));
}

/// Factors customary in the literature.
inline double lambda_usual(PlanPenalty kind, int P_l, int n_l = 0) {
  detail::check_shape(P_l, n_l, kind == PlanPenalty::ReversedGroupLasso);
  switch (kind) {
    case PlanPenalty::L2:
    case PlanPenalty::L1: return 1.0;
    case PlanPenalty::GroupLasso: return std::sqrt(static_cast<double>(P_l));
    case PlanPenalty::ReversedGroupLasso: return std::sqrt(static_cast<double>(n_l));
    case PlanPenalty::SparseGroupLasso: break;
  }
  fail(ErrorKind::UnsupportedPenalty, "no single usual factor for " + std::string(to_string(kind)));
}

inline double layer_factor(Scheme scheme, PlanPenalty kind, int P_l, int n_l) {
  return scheme == Scheme::Bayesian ? lambda_bayesian(kind, P_l, n_l) : lambda_usual(kind, P_l, n_l);
}

struct LayerFactor {
  LayerShape shape;
  double lambda_l = 1.0;
  /// Sparse group-Lasso only: (1 - gamma) * group factor and gamma * L1 factor.
  std::optional<double> group_component;
  std::optional<double> l1_component;
};

/// Observed ratio between the theoretical global factor and the best swept one.
struct RatioAnnotation {
  double low = 10.0;
  double high = 100.0;
  std::string note = "1/n has been observed to exceed the best swept global factor by 10x to 100x";
};

struct LambdaPlan {
  std::vector<LayerFactor> per_layer;
  double global_lambda = 1.0;
  double per_batch_scale = 1.0;
  Scheme scheme = Scheme::Bayesian;
  PlanPenalty penalty_kind = PlanPenalty::L2;
  std::optional<double> mixing_gamma;
  long n = 1;
  long B = 1;
  std::optional<RatioAnnotation> annotation;

  /// Weight of the full-data penalty applied to a batch of `batch_size` samples,
  /// global * b / n; summing over one epoch gives `global_lambda`.
  double batch_weight(long batch_size) const {
    return global_lambda * static_cast<double>(batch_size) / static_cast<double>(n);
  }
};

struct PlanOptions {
  /// Global factor for the Usual scheme (required there); ignored for Bayesian.
  std::optional<double> global_lambda;
  /// Sparse group-Lasso mixing in [0, 1].
  std::optional<double> mixing_gamma;
  bool annotate_ratio = false;
};

inline LambdaPlan plan(const ArchitectureSpec& arch, PlanPenalty kind, Scheme scheme, const PlanOptions& opts = {}) {
  arch.validate();
  LambdaPlan out;
  out.scheme = scheme;
  out.penalty_kind = kind;
  out.n = arch.n;
  out.B = arch.B;
  out.per_batch_scale = static_cast<double>(arch.B) / static_cast<double>(arch.n);
  if (scheme == Scheme::Bayesian) {
    out.global_lambda = 1.0 / static_cast<double>(arch.n);
  } else {
    require(opts.global_lambda.has_value(), ErrorKind::InvalidParameter,
            "the usual scheme needs a caller-supplied global lambda");
    out.global_lambda = *opts.global_lambda;
  }
  require(std::isfinite(out.global_lambda) && out.global_lambda >= 0.0, ErrorKind::InvalidParameter,
          "global lambda must be finite and >= 0");
  if (kind == PlanPenalty::SparseGroupLasso) {
    require(opts.mixing_gamma.has_value(), ErrorKind::InvalidParameter, "sparse group-Lasso needs mixing_gamma");
    const double g = *opts.mixing_gamma;
    require(g >= 0.0 && g <= 1.0, ErrorKind::InvalidParameter, "mixing_gamma must lie in [0, 1]");
    out.mixing_gamma = g;
  } else {
    require(!opts.mixing_gamma.has_value(), ErrorKind::InvalidParameter,
            "mixing_gamma only applies to the sparse group-Lasso");
  }
  for (const auto& s : arch.layers) {
    LayerFactor f{s};
    if (kind == PlanPenalty::SparseGroupLasso) {
      const double g = *out.mixing_gamma;
      f.group_component = (1.0 - g) * layer_factor(scheme, PlanPenalty::GroupLasso, s.P_l, s.n_l);
      f.l1_component = g * layer_factor(scheme, PlanPenalty::L1, s.P_l, s.n_l);
      f.lambda_l = *f.group_component + *f.l1_component;
    } else {
      f.lambda_l = layer_factor(scheme, kind, s.P_l, s.n_l);
    }
    out.per_layer.push_back(f);
  }
  if (opts.annotate_ratio && scheme == Scheme::Bayesian) out.annotation = RatioAnnotation{};
  return out;
}

inline std::string to_csv(const LambdaPlan& p) {
  std::ostringstream os;
  os.precision(17);
  os << "l,n_l,P_l,lambda_l\n";
  for (const auto& f : p.per_layer) os << f.shape.l << ',' << f.shape.n_l << ',' << f.shape.P_l << ',' << f.lambda_l << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Moment conditions

enum class ConditionMode { Prior, PriorPrime };

inline std::string_view to_string(ConditionMode m) { return m == ConditionMode::Prior ? "prior" : "prior-prime"; }

/// Prior: E[w] = 0 and E[w^2] = 1 / P_l per weight.
/// PriorPrime: E[w] = 0 and E[||w||^2] = 1 over a neuron's incoming weights.
struct PriorConditionTarget {
  ConditionMode mode = ConditionMode::Prior;
  int P_l = 1;
  int n_l = 1;
};

struct PriorConditionReport {
  double mean_err = 0.0;
  /// |measured - target| / target for the closed-form (or quadrature) moment.
  double moment_err = 0.0;
  double target_moment = 0.0;
  double measured_moment = 0.0;
  /// Monte-Carlo cross-check, when run.
  std::optional<double> mc_moment;
  std::optional<double> mc_std_error;
  bool pass = false;
};

/// Second moment relevant to the target: per coordinate under Prior, of the
/// whole vector under PriorPrime.
inline double condition_moment(const PriorDensity& prior, ConditionMode mode) {
  auto [m1, m2] = prior.coordinate_moments();
  (void)m1;
  return mode == ConditionMode::Prior ? m2 : m2 * prior.dim;
}

inline double condition_target(const PriorConditionTarget& t) {
  require(t.P_l >= 1, ErrorKind::InvalidParameter, "P_l must be >= 1");
  return t.mode == ConditionMode::Prior ? 1.0 / t.P_l : 1.0;
}

/// Closed-form or quadrature moments; ExpNorm additionally cross-checked by
/// Monte-Carlo with the radial Gamma decomposition (pass requires 3 standard errors).
inline PriorConditionReport check_prior_condition(const PriorDensity& prior, const PriorConditionTarget& target,
                                                  std::size_t mc_samples = 1'000'000, std::uint64_t seed = 0,
                                                  double tolerance = 1e-12) {
  PriorConditionReport rep;
  rep.target_moment = condition_target(target);
  auto [m1, m2] = prior.coordinate_moments();
  (void)m2;
  rep.mean_err = std::abs(m1);
  rep.measured_moment = condition_moment(prior, target.mode);
  rep.moment_err = std::abs(rep.measured_moment - rep.target_moment) / rep.target_moment;
  rep.pass = rep.moment_err <= tolerance && rep.mean_err <= tolerance;

  if (prior.form == PriorForm::ExpNorm && mc_samples > 0) {
    PriorSampler sampler(prior);
    std::mt19937_64 rng(seed);
    std::vector<double> theta(static_cast<std::size_t>(prior.dim));
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t s = 0; s < mc_samples; ++s) {
      sampler(rng, theta);
      double sq = 0.0;
      for (double t : theta) sq += t * t;
      if (target.mode == ConditionMode::Prior) sq /= prior.dim;
      sum += sq;
      sum_sq += sq * sq;
    }
    const double n = static_cast<double>(mc_samples);
    const double mean = sum / n;
    rep.mc_moment = mean;
    rep.mc_std_error = std::sqrt(std::max(0.0, sum_sq / n - mean * mean) / n);
    rep.pass = rep.pass && std::abs(mean - rep.target_moment) <= 3.0 * *rep.mc_std_error;
  }
  return rep;
}

enum class PriorFamilyKind { Gaussian, Laplace, ExpNorm };

inline std::string_view to_string(PriorFamilyKind k) {
  switch (k) {
    case PriorFamilyKind::Gaussian: return "gaussian";
    case PriorFamilyKind::Laplace: return "laplace";
    case PriorFamilyKind::ExpNorm: return "expnorm";
  }
  return "?";
}

/// Moment of the MAP prior of the family at penalty factor lambda. ExpNorm lives
/// on a neuron's P_l incoming weights under PriorPrime and on the n_l outgoing
/// weights of an input feature under Prior.
inline double family_condition_moment(PriorFamilyKind family, const PriorConditionTarget& t, double lambda) {
  switch (family) {
    case PriorFamilyKind::Gaussian: {
      const double per = 1.0 / (2.0 * lambda);
      return t.mode == ConditionMode::Prior ? per : per * t.P_l;
    }
    case PriorFamilyKind::Laplace: {
      const double per = 2.0 / (lambda * lambda);
      return t.mode == ConditionMode::Prior ? per : per * t.P_l;
    }
    case PriorFamilyKind::ExpNorm: {
      const double d = t.mode == ConditionMode::PriorPrime ? t.P_l : t.n_l;
      const double total = d * (d + 1.0) / (lambda * lambda);
      return t.mode == ConditionMode::Prior ? total / d : total;
    }
  }
  return 0.0;
}

/// Geometric bisection for the lambda at which the family's moment meets the
/// target; the moment is decreasing in lambda.
inline double solve_lambda_from_condition(PriorFamilyKind family, const PriorConditionTarget& target) {
  const double goal = condition_target(target);
  require(target.n_l >= 1, ErrorKind::InvalidParameter, "n_l must be >= 1");
  auto excess = [&](double lam) { return family_condition_moment(family, target, lam) - goal; };
  double lo = 1e-3, hi = 1e3;
  for (int i = 0; i < 200 && excess(lo) <= 0.0; ++i) lo *= 0.5;
  for (int i = 0; i < 200 && excess(hi) >= 0.0; ++i) hi *= 2.0;
  require(excess(lo) > 0.0 && excess(hi) < 0.0, ErrorKind::NumericalFailure, "could not bracket lambda");
  while (hi / lo - 1.0 > 1e-14) {
    const double mid = std::sqrt(lo * hi);
    if (mid <= lo || mid >= hi) break;
    (excess(mid) > 0.0 ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

}  // namespace penprior
