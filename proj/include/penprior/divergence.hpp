#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "penprior/error.hpp"
#include "penprior/numeric.hpp"
#include "penprior/penalty.hpp"
#include "penprior/prior.hpp"
#include "penprior/prior_engine.hpp"

namespace penprior {

struct QuadratureConfig {
  /// Gauss-Hermite order.
  int nodes = 64;
  std::size_t mc_samples = 1'000'000;
  std::uint64_t seed = 0;

  void validate() const {
    require(nodes >= 8, ErrorKind::Configuration, "Gauss-Hermite order must be >= 8");
    require(mc_samples >= 1000, ErrorKind::Configuration, "Monte-Carlo budget must be >= 1000");
  }
};

enum class KLMethod { ClosedForm, Quadrature, MonteCarlo };

inline std::string_view to_string(KLMethod m) {
  switch (m) {
    case KLMethod::ClosedForm: return "closed_form";
    case KLMethod::Quadrature: return "quadrature";
    case KLMethod::MonteCarlo: return "monte_carlo";
  }
  return "?";
}

struct KLEstimate {
  double value = 0.0;
  /// Monte-Carlo standard error; zero for deterministic methods.
  double std_error = 0.0;
  KLMethod method = KLMethod::ClosedForm;
  std::size_t n_samples_or_nodes = 0;
};

/// KL(N(mu, s2) || N(prior_mean, s0_2)) for one coordinate.
inline double kl_gaussian_gaussian(double mu, double s2, double s0_2, double prior_mean = 0.0) {
  require(std::isfinite(s2) && s2 > 0.0 && std::isfinite(s0_2) && s0_2 > 0.0, ErrorKind::InvalidParameter,
          "variances must be finite and > 0");
  const double d = mu - prior_mean;
  return 0.5 * ((s2 + d * d) / s0_2 + std::log(s0_2 / s2) - 1.0);
}

/// KL(delta_mu || alpha) = -ln alpha(mu) - N ln(epsilon).
inline double kl_dirac(const PriorDensity& prior, std::span<const double> mu,
                       double epsilon_machine = kDefaultEpsilonMachine) {
  require(std::isfinite(epsilon_machine) && epsilon_machine > 0.0, ErrorKind::InvalidParameter,
          "epsilon_machine must be > 0");
  const double log_alpha = prior.log_density(mu);
  require(std::isfinite(log_alpha), ErrorKind::SupportViolation, "prior density vanishes at mu");
  return -log_alpha - static_cast<double>(mu.size()) * std::log(epsilon_machine);
}

namespace detail {

/// E[ln alpha_1(X)] for X ~ N(m, s2) on one coordinate of a separable prior.
inline KLEstimate expected_log_prior_1d(const PriorDensity& prior, double m, double s2,
                                        const QuadratureConfig& cfg) {
  const double sd = std::sqrt(s2);
  auto integrand_log = [&](double t) {
    const double v = prior.log_density_1d(t);
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "non-finite log prior density at theta = " << t;
      fail(ErrorKind::NumericalFailure, os.str());
    }
    return v;
  };
  if (prior.form == PriorForm::Gaussian || prior.form == PriorForm::LogPoly) {
    auto at = [&](int n) { return gauss_hermite_rule(n).expectation(m, s2, integrand_log); };
    const double base = at(cfg.nodes);
    const double check = at(96);
    if (std::abs(base - check) > 1e-9) return {at(128), 0.0, KLMethod::Quadrature, 128};
    return {base, 0.0, KLMethod::Quadrature, static_cast<std::size_t>(cfg.nodes)};
  }
  double a = m - 12.0 * sd, b = m + 12.0 * sd;
  if (prior.form == PriorForm::Grid) {
    const double glo = prior.grid->x(0), ghi = prior.grid->last_x();
    require(glo <= m - 8.0 * sd && ghi >= m + 8.0 * sd, ErrorKind::SupportViolation,
            "prior grid does not cover the posterior's effective support");
    a = std::max(a, glo);
    b = std::min(b, ghi);
  }
  auto f = [&](double t) {
    const double z = (t - m) / sd;
    return integrand_log(t) * std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * kPi));
  };
  double total = 0.0;
  // Split at the Laplace kink so each piece is smooth.
  if (a < 0.0 && b > 0.0 && prior.form != PriorForm::Grid) {
    total = integrate_interval(f, a, 0.0, 1e-13).value + integrate_interval(f, 0.0, b, 1e-13).value;
  } else {
    total = integrate_interval(f, a, b, 1e-13).value;
  }
  return {total, 0.0, KLMethod::Quadrature, 0};
}

}  // namespace detail

/// KL(beta_{mu,nu} || alpha). Gaussian posteriors use Gauss-Hermite (adaptive
/// quadrature for kinked or tabulated priors) on separable priors and seeded
/// Monte-Carlo on non-separable ones; Dirac posteriors use the closed form.
inline KLEstimate kl_numeric_estimate(const PosteriorFamily& posterior, std::span<const double> mu,
                                      std::span<const double> nu, const PriorDensity& prior,
                                      const QuadratureConfig& cfg = {}) {
  posterior.validate();
  cfg.validate();
  require(mu.size() == static_cast<std::size_t>(posterior.dim) && prior.dim == posterior.dim,
          ErrorKind::ShapeMismatch, "posterior, prior and mu dimensions differ");
  if (posterior.kind == PosteriorKind::Dirac)
    return {kl_dirac(prior, mu, posterior.epsilon_machine), 0.0, KLMethod::ClosedForm, 0};

  const auto vars = posterior.variances(nu);
  const double ent = entropy(posterior, nu);
  if (prior.separable()) {
    KLEstimate out{-ent, 0.0, KLMethod::Quadrature, 0};
    for (std::size_t c = 0; c < mu.size(); ++c) {
      const auto e = detail::expected_log_prior_1d(prior, mu[c], vars[c], cfg);
      out.value -= e.value;
      out.n_samples_or_nodes = std::max(out.n_samples_or_nodes, e.n_samples_or_nodes);
    }
    return out;
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> theta(mu.size());
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < cfg.mc_samples; ++s) {
    for (std::size_t c = 0; c < theta.size(); ++c) theta[c] = mu[c] + std::sqrt(vars[c]) * z(rng);
    const double v = prior.log_density(theta);
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "non-finite log prior density at sample " << s;
      fail(ErrorKind::NumericalFailure, os.str());
    }
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(cfg.mc_samples);
  const double mean_v = sum / n;
  const double var_v = std::max(0.0, sum_sq / n - mean_v * mean_v);
  return {-ent - mean_v, std::sqrt(var_v / n), KLMethod::MonteCarlo, cfg.mc_samples};
}

inline double kl_numeric(const PosteriorFamily& posterior, std::span<const double> mu, std::span<const double> nu,
                         const PriorDensity& prior, const QuadratureConfig& cfg = {}) {
  return kl_numeric_estimate(posterior, mu, nu, prior, cfg).value;
}

/// Closed forms: Dirac posteriors, and Gaussian posteriors against Gaussian or
/// Laplace priors. Empty when none applies.
inline std::optional<double> kl_closed_form(const PosteriorFamily& posterior, std::span<const double> mu,
                                            std::span<const double> nu, const PriorDensity& prior) {
  if (posterior.kind == PosteriorKind::Dirac) return kl_dirac(prior, mu, posterior.epsilon_machine);
  const auto vars = posterior.variances(nu);
  if (prior.form == PriorForm::Gaussian) {
    double acc = 0.0;
    for (std::size_t c = 0; c < mu.size(); ++c) acc += kl_gaussian_gaussian(mu[c], vars[c], prior.var, prior.mean);
    return acc;
  }
  if (prior.form == PriorForm::Laplace || (prior.form == PriorForm::ExpNorm && prior.dim == 1)) {
    // -Ent + lambda E|X| - ln(lambda / 2), with E|X| the folded-normal mean.
    double acc = 0.0;
    for (std::size_t c = 0; c < mu.size(); ++c) {
      const double sd = std::sqrt(vars[c]);
      const double abs_mean = sd * std::sqrt(2.0 / kPi) * std::exp(-mu[c] * mu[c] / (2.0 * vars[c])) +
                              mu[c] * std::erf(mu[c] / (sd * std::sqrt(2.0)));
      acc += -0.5 * std::log(2.0 * kPi * kE * vars[c]) + prior.rate * abs_mean - std::log(0.5 * prior.rate);
    }
    return acc;
  }
  return std::nullopt;
}

struct CorrespondenceEntry {
  std::vector<double> mu;
  std::vector<double> nu;
  double kl = 0.0;
  double penalty = 0.0;
  double residual = 0.0;
};

struct KLReport {
  double fitted_K = 0.0;
  double max_residual = 0.0;
  std::vector<CorrespondenceEntry> residuals;
  KLMethod method = KLMethod::ClosedForm;
  std::size_t n_samples_or_nodes = 0;

  bool passes(double tolerance) const { return max_residual <= tolerance; }
};

/// Points t * (1, ..., 1) for t evenly spaced in [lo, hi].
inline std::vector<std::vector<double>> mu_line(double lo, double hi, int count, int dim = 1) {
  require(count >= 2, ErrorKind::InvalidParameter, "need at least two probe points");
  std::vector<std::vector<double>> out;
  for (int i = 0; i < count; ++i)
    out.emplace_back(static_cast<std::size_t>(dim), lo + (hi - lo) * i / (count - 1.0));
  return out;
}

/// Checks r_nu(mu) = KL(beta_{mu,nu} || alpha) + K on the (mu, nu) product grid,
/// with K fitted by least squares (the mean of r - KL).
inline KLReport verify_correspondence(const PenaltySpec& penalty, const PosteriorFamily& posterior,
                                      const PriorDensity& prior, const std::vector<std::vector<double>>& mu_grid,
                                      std::vector<std::vector<double>> nu_grid, const QuadratureConfig& cfg = {}) {
  penalty.validate();
  posterior.validate();
  require(!mu_grid.empty(), ErrorKind::InvalidParameter, "empty mu grid");
  if (nu_grid.empty()) {
    if (posterior.kind == PosteriorKind::GaussianFixedVar)
      nu_grid.push_back(posterior.sigma2);
    else
      nu_grid.emplace_back();
  }
  KLReport rep;
  double diff_sum = 0.0;
  for (const auto& nu : nu_grid) {
    for (const auto& mu : mu_grid) {
      CorrespondenceEntry e{mu, nu};
      if (auto cf = kl_closed_form(posterior, mu, nu, prior)) {
        e.kl = *cf;
      } else {
        const auto est = kl_numeric_estimate(posterior, mu, nu, prior, cfg);
        e.kl = est.value;
        rep.method = std::max(rep.method, est.method);
        rep.n_samples_or_nodes = std::max(rep.n_samples_or_nodes, est.n_samples_or_nodes);
      }
      e.penalty = penalty.evaluate(mu, nu);
      diff_sum += e.penalty - e.kl;
      rep.residuals.push_back(std::move(e));
    }
  }
  rep.fitted_K = diff_sum / static_cast<double>(rep.residuals.size());
  for (auto& e : rep.residuals) {
    e.residual = std::abs(e.penalty - e.kl - rep.fitted_K);
    rep.max_residual = std::max(rep.max_residual, e.residual);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Renyi divergence

struct RenyiResult {
  double value = 0.0;
  /// False when the integral was detected to diverge; value is then +inf.
  bool finite = true;
  KLMethod method = KLMethod::Quadrature;
  double std_error = 0.0;
  std::size_t n_samples_or_nodes = 0;
  std::string note;
};

inline void validate_renyi_order(double gamma) {
  require(std::isfinite(gamma) && gamma > 0.0 && gamma != 1.0, ErrorKind::InvalidParameter,
          "Renyi order must lie in (0, 1) or (1, inf)");
}

/// D_gamma(beta || alpha) = ln(int beta^gamma alpha^(1 - gamma)) / (gamma - 1).
/// Separable pairs with matching dimension use 1-D adaptive quadrature per
/// coordinate; other pairs use Monte-Carlo with beta as importance density.
inline RenyiResult renyi_divergence(const PriorDensity& beta, const PriorDensity& alpha, double gamma,
                                    const QuadratureConfig& cfg = {}) {
  validate_renyi_order(gamma);
  cfg.validate();
  require(beta.dim == alpha.dim, ErrorKind::ShapeMismatch, "beta and alpha dimensions differ");
  const double inf = std::numeric_limits<double>::infinity();

  if (beta.separable() && alpha.separable()) {
    auto log_integrand = [&](double t) {
      return gamma * beta.log_density_1d(t) + (1.0 - gamma) * alpha.log_density_1d(t);
    };
    auto [a, b] = beta.support_1d();
    bool clipped_lo = false, clipped_hi = false;
    if (gamma < 1.0) {
      auto [aa, ab] = alpha.support_1d();
      a = std::max(a, aa);
      b = std::min(b, ab);
    } else if (alpha.form == PriorForm::Grid) {
      clipped_lo = alpha.grid->x(0) > a;
      clipped_hi = alpha.grid->last_x() < b;
      a = std::max(a, alpha.grid->x(0));
      b = std::min(b, alpha.grid->last_x());
    }
    require(b > a, ErrorKind::SupportViolation, "beta and alpha supports do not overlap");
    double peak = -inf;
    for (int i = 0; i <= 4000; ++i) {
      const double v = log_integrand(a + (b - a) * i / 4000.0);
      if (std::isnan(v)) fail(ErrorKind::NumericalFailure, "NaN in Renyi integrand");
      peak = std::max(peak, v);
    }
    RenyiResult out;
    out.method = KLMethod::Quadrature;
    // Tail monitoring: the integrand must have decayed where the range was cut.
    const double edge_lo = log_integrand(a), edge_hi = log_integrand(b);
    const bool open_lo = gamma > 1.0 && (clipped_lo || alpha.form != PriorForm::Grid);
    const bool open_hi = gamma > 1.0 && (clipped_hi || alpha.form != PriorForm::Grid);
    if (!std::isfinite(peak) || (open_lo && edge_lo > peak - 40.0) || (open_hi && edge_hi > peak - 40.0)) {
      out.value = inf;
      out.finite = false;
      out.note = "integrand does not decay at the edge of the integration range";
      return out;
    }
    auto f = [&](double t) { return std::exp(log_integrand(t) - peak); };
    double integral = 0.0;
    if (a < 0.0 && b > 0.0)
      integral = integrate_interval(f, a, 0.0, 1e-13).value + integrate_interval(f, 0.0, b, 1e-13).value;
    else
      integral = integrate_interval(f, a, b, 1e-13).value;
    out.value = beta.dim * (peak + std::log(integral)) / (gamma - 1.0);
    if (!std::isfinite(out.value)) {
      out.value = inf;
      out.finite = false;
      out.note = "integral is not finite";
    }
    return out;
  }

  // Importance sampling with beta as proposal: weights (alpha / beta)^(1 - gamma).
  PriorSampler sampler(beta);
  std::mt19937_64 rng(cfg.seed);
  std::vector<double> theta(static_cast<std::size_t>(beta.dim));
  std::vector<double> logw(cfg.mc_samples);
  for (auto& lw : logw) {
    sampler(rng, theta);
    lw = (1.0 - gamma) * (alpha.log_density(theta) - beta.log_density(theta));
    if (std::isnan(lw)) fail(ErrorKind::NumericalFailure, "NaN importance weight");
  }
  auto log_mean_exp = [](std::span<const double> xs, double& share, double& rel_var) {
    const double mx = *std::max_element(xs.begin(), xs.end());
    double s = 0.0, s2 = 0.0;
    for (double x : xs) {
      const double w = std::exp(x - mx);
      s += w;
      s2 += w * w;
    }
    const double n = static_cast<double>(xs.size());
    share = 1.0 / s;
    const double m = s / n;
    rel_var = std::max(0.0, s2 / n - m * m) / (m * m);
    return mx + std::log(m);
  };
  double share = 0.0, rel_var = 0.0, half_share = 0.0, half_rel = 0.0;
  const double full = log_mean_exp(logw, share, rel_var);
  const double half = log_mean_exp(std::span<const double>(logw).first(logw.size() / 2), half_share, half_rel);
  RenyiResult out;
  out.method = KLMethod::MonteCarlo;
  out.n_samples_or_nodes = cfg.mc_samples;
  const double se_log = std::sqrt(rel_var / static_cast<double>(cfg.mc_samples));
  out.std_error = se_log / std::abs(gamma - 1.0);
  if (!std::isfinite(full) || share > 0.05 || std::abs(full - half) > 10.0 * std::sqrt(2.0) * se_log + 1e-12) {
    out.value = inf;
    out.finite = false;
    out.note = "running estimate does not settle (heavy importance-weight tail)";
    return out;
  }
  out.value = full / (gamma - 1.0);
  return out;
}

/// Candidate prior for r = D_gamma(beta_mu || alpha) + K on a grid.
struct RenyiCandidate {
  GridFunction alpha;
  /// ln alpha; -inf where the candidate is not positive.
  GridFunction log_alpha;
  double gamma = 2.0;
  double K = 0.0;
  std::size_t non_positive_points = 0;
};

/// Solves (beta_0^gamma * alpha^(1 - gamma))(mu) = exp((gamma - 1)(r(mu) - K)) for
/// alpha. beta_0^gamma is a scaled Gaussian of variance s2 / gamma, so the
/// right-hand side h is first tilted by the exact inverse of its log-quadratic
/// part; the remaining bounded factor is deconvolved on the grid.
inline RenyiCandidate renyi_prior_candidate(const PenaltySpec& penalty, const PosteriorFamily& posterior,
                                            double gamma, double K, const GridLayout& domain,
                                            const DeconvolutionOptions& opts = {}) {
  validate_renyi_order(gamma);
  penalty.validate();
  posterior.validate();
  require(posterior.kind == PosteriorKind::GaussianFixedVar, ErrorKind::Configuration,
          "Renyi candidate needs a fixed-variance Gaussian posterior");
  require(std::isfinite(K), ErrorKind::InvalidParameter, "K must be finite");
  const double s2 = isotropic_variance(posterior, {});
  const double ks2 = s2 / gamma;  // variance of the normalized beta_0^gamma
  const double log_mass = 0.5 * (1.0 - gamma) * std::log(2.0 * kPi * s2) - 0.5 * std::log(gamma);
  auto log_h = [&](double mu) { return (gamma - 1.0) * (penalty.evaluate_scalar(mu, s2) - K); };

  // Least-squares quadratic fit of ln h over the central half of the domain.
  const double qlo = domain.lo + 0.25 * (domain.hi - domain.lo);
  const double qhi = domain.hi - 0.25 * (domain.hi - domain.lo);
  Eigen::MatrixXd v(257, 3);
  Eigen::VectorXd y(257);
  for (int i = 0; i < 257; ++i) {
    const double mu = qlo + (qhi - qlo) * i / 256.0;
    v(i, 0) = 1.0;
    v(i, 1) = mu;
    v(i, 2) = mu * mu;
    y(i) = log_h(mu);
  }
  const Eigen::Vector3d c = v.colPivHouseholderQr().solve(y);
  const double stretch = 1.0 + 2.0 * c(2) * ks2;
  require(stretch > 0.0, ErrorKind::IllConditionedDeconvolution,
          "exp((gamma - 1)(r - K)) is narrower than beta_0^gamma; no smooth candidate exists");
  const double b2 = c(2) / stretch;
  const double b1 = c(1) / stretch;
  // Forward map of exp(b2 t^2 + b1 t) phi(t): sqrt(w / ks2) exp(m^2 / (2w) - mu^2 / (2 ks2)) (G_w phi)(m),
  // with w = ks2 / (1 - 2 b2 ks2) and m = w (mu / ks2 + b1).
  const double w = ks2 / (1.0 - 2.0 * b2 * ks2);

  GridFunction g{domain.lo, domain.hi, std::vector<double>(domain.n_points)};
  double worst = -std::numeric_limits<double>::infinity();
  std::vector<double> log_g(domain.n_points);
  for (std::size_t i = 0; i < domain.n_points; ++i) {
    const double m = g.x(i);
    const double mu = (m / w - b1) * ks2;
    log_g[i] = log_h(mu) - log_mass - 0.5 * std::log(w / ks2) - m * m / (2.0 * w) + mu * mu / (2.0 * ks2);
    worst = std::max(worst, std::abs(log_g[i]));
  }
  if (worst > 700.0) {
    std::ostringstream os;
    os << "exp((gamma - 1)(r - K)) overflows after tilting (|log| up to " << worst
       << "); shift K so that (gamma - 1)(r - K) stays moderate";
    fail(ErrorKind::Rescaling, os.str());
  }
  for (std::size_t i = 0; i < domain.n_points; ++i) g.values[i] = std::exp(log_g[i]);

  const double nyquist = g.nyquist();
  const double band = domain.band_limit > 0.0 ? domain.band_limit : std::min(4.0 / std::sqrt(w), nyquist / 4.0);
  const GridFunction phi = deconvolve_gaussian(g, w, band, opts);

  const double exponent = 1.0 / (1.0 - gamma);
  const bool integer_exponent = std::abs(exponent - std::round(exponent)) < 1e-12;
  RenyiCandidate out{phi, phi, gamma, K, 0};
  for (std::size_t i = 0; i < phi.n_points(); ++i) {
    const double t = phi.x(i);
    const double tilt = b2 * t * t + b1 * t;
    const double p = phi.values[i];
    if (p > 0.0) {
      out.log_alpha.values[i] = exponent * (tilt + std::log(p));
      out.alpha.values[i] = std::exp(out.log_alpha.values[i]);
      continue;
    }
    if (!integer_exponent) {
      std::ostringstream os;
      os << "alpha^(1 - gamma) is not positive at theta = " << t << " and 1 / (1 - gamma) is not an integer";
      fail(ErrorKind::Domain, os.str());
    }
    ++out.non_positive_points;
    out.log_alpha.values[i] = -std::numeric_limits<double>::infinity();
    out.alpha.values[i] = std::pow(std::exp(tilt) * p, exponent);
  }
  return out;
}

}  // namespace penprior
