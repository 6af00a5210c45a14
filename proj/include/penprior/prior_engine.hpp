#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "penprior/error.hpp"
#include "penprior/grid.hpp"
#include "penprior/numeric.hpp"
#include "penprior/penalty.hpp"
#include "penprior/prior.hpp"

namespace penprior {

/// Differential entropy of beta_{0,nu}. Dirac masses use the finite-precision
/// convention Ent = N ln(epsilon_machine).
inline double entropy(const PosteriorFamily& posterior, std::span<const double> nu = {}) {
  posterior.validate();
  if (posterior.kind == PosteriorKind::Dirac) return posterior.dim * std::log(posterior.epsilon_machine);
  double acc = 0.0;
  for (double s2 : posterior.variances(nu)) acc += 0.5 * std::log(2.0 * kPi * kE * s2);
  return acc;
}

/// Finite combination sum_m coeffs[m] * delta^(m) of derivatives of the Dirac
/// mass at the origin. Only even orders occur for even polynomials, so the
/// coefficients stay real.
struct DiracSeries {
  std::vector<double> coeffs;

  /// F[sum_k c_k x^(2k)] with F[x^m] = 2 pi i^m delta^(m).
  static DiracSeries fourier_of_even_polynomial(std::span<const double> even) {
    DiracSeries out;
    out.coeffs.assign(even.empty() ? 1 : 2 * even.size() - 1, 0.0);
    for (std::size_t k = 0; k < even.size(); ++k)
      out.coeffs[2 * k] = 2.0 * kPi * (k % 2 == 0 ? 1.0 : -1.0) * even[k];
    return out;
  }

  /// g * T for a smooth multiplier g given by its derivatives at 0:
  ///   g delta^(m) = sum_j C(m, j) (-1)^j g^(j)(0) delta^(m-j).
  DiracSeries times_smooth(std::span<const double> derivs_at_zero) const {
    DiracSeries out;
    out.coeffs.assign(coeffs.size(), 0.0);
    for (std::size_t m = 0; m < coeffs.size(); ++m) {
      if (coeffs[m] == 0.0) continue;
      for (std::size_t j = 0; j <= m && j < derivs_at_zero.size(); ++j) {
        const double sign = j % 2 == 0 ? 1.0 : -1.0;
        out.coeffs[m - j] += coeffs[m] * binomial_exact(static_cast<int>(m), static_cast<int>(j)) * sign *
                             derivs_at_zero[j];
      }
    }
    return out;
  }

  /// F^-1 delta^(m) = (1 / 2 pi) (-i x)^m; real for even m.
  Polynomial inverse_fourier() const {
    Polynomial p;
    p.coeffs.assign(coeffs.size(), 0.0);
    for (std::size_t m = 0; m < coeffs.size(); ++m) {
      if (coeffs[m] == 0.0) continue;
      require(m % 2 == 0, ErrorKind::UnsupportedPenalty, "odd Dirac derivative has a complex inverse transform");
      p.coeffs[m] = coeffs[m] * ((m / 2) % 2 == 0 ? 1.0 : -1.0) / (2.0 * kPi);
    }
    return p;
  }
};

/// Derivatives at 0 of 1 / F beta_{0,s2}(xi) = exp(s2 xi^2 / 2), up to `order`.
inline std::vector<double> inverse_gaussian_transform_derivatives(double s2, int order) {
  std::vector<double> d(static_cast<std::size_t>(order) + 1, 0.0);
  // g^(2i)(0) = (s2 / 2)^i (2i)! / i!
  for (int i = 0; 2 * i <= order; ++i) {
    double v = 1.0;
    for (int q = i + 1; q <= 2 * i; ++q) v *= q;
    d[static_cast<std::size_t>(2 * i)] = v * std::pow(0.5 * s2, i);
  }
  return d;
}

struct SymbolicOptions {
  /// Largest admissible polynomial degree in mu.
  int max_degree = 8;
};

/// Common variance across coordinates; the symbolic and grid engines work on a
/// single coordinate and rely on the product structure.
inline double isotropic_variance(const PosteriorFamily& posterior, std::span<const double> nu) {
  auto vars = posterior.variances(nu);
  for (double v : vars)
    require(v == vars.front(), ErrorKind::Configuration,
            "per-coordinate variances must coincide for the one-dimensional engines");
  return vars.front();
}

/// A_nu for an even polynomial penalty under a Gaussian posterior, computed with
/// the Dirac-derivative calculus. The result is exact up to rounding.
inline LogDensityPoly derive_prior_symbolic(const PenaltySpec& penalty, const PosteriorFamily& posterior,
                                            std::span<const double> nu = {}, const SymbolicOptions& opts = {}) {
  penalty.validate();
  posterior.validate();
  require(posterior.is_gaussian(), ErrorKind::Configuration, "symbolic engine needs a Gaussian posterior");
  require(penalty.is_polynomial(), ErrorKind::UnsupportedPenalty,
          std::string(to_string(penalty.kind)) + " is not an even polynomial; use the grid engine");
  require(penalty.dim == posterior.dim, ErrorKind::ShapeMismatch, "penalty and posterior dimensions differ");
  const double s2 = isotropic_variance(posterior, nu);
  const auto even = penalty.even_coefficients(s2);
  const int degree = 2 * static_cast<int>(even.size()) - 2;
  require(degree <= opts.max_degree, ErrorKind::Configuration,
          "penalty degree " + std::to_string(degree) + " exceeds the configured maximum " +
              std::to_string(opts.max_degree));

  const auto transformed = DiracSeries::fourier_of_even_polynomial(even);
  const auto divided = transformed.times_smooth(inverse_gaussian_transform_derivatives(s2, degree));
  Polynomial q = divided.inverse_fourier();

  LogDensityPoly a;
  a.dim = penalty.dim;
  a.poly.coeffs.resize(q.coeffs.size());
  for (std::size_t m = 0; m < q.coeffs.size(); ++m) a.poly.coeffs[m] = -q.coeffs[m];
  a.entropy_const = -entropy(posterior, nu);
  return a;
}

// ---------------------------------------------------------------------------
// Normalization

/// Closed form for Gaussian-shaped A, adaptive quadrature otherwise.
inline PriorDensity normalize_prior(const LogDensityPoly& a) {
  const double tol = 1e-14 * std::max(1.0, max_abs(a.poly.coeffs));
  require(a.integrable(tol), ErrorKind::NonNormalizablePrior,
          "exp(A) is not integrable: leading term of A must be an even power with negative coefficient");
  const int d = a.poly.degree(tol);
  double log_kappa_1d = 0.0;
  PriorDensity out;
  if (d == 2) {
    const double c0 = a.poly.coeffs[0];
    const double c1 = a.poly.coeffs.size() > 1 ? a.poly.coeffs[1] : 0.0;
    const double c2 = a.poly.coeffs[2];
    out = PriorDensity::gaussian(-c1 / (2.0 * c2), -1.0 / (2.0 * c2), a.dim);
    log_kappa_1d = c0 - c1 * c1 / (4.0 * c2) + 0.5 * std::log(kPi / -c2);
  } else {
    out.form = PriorForm::LogPoly;
    out.dim = a.dim;
    out.log_poly = a;
    // Shift by the peak so the integrand stays O(1).
    double w = 1.0;
    while (w < 1e6 && (a.poly(w) > a.poly(0.0) - 60.0 || a.poly(-w) > a.poly(0.0) - 60.0)) w *= 1.5;
    double peak = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 4000; ++i) peak = std::max(peak, a.poly(-w + 2.0 * w * i / 4000.0));
    auto res = integrate_real_line([&](double t) { return std::exp(a.poly(t) - peak); }, 1e-12);
    require(res.status == 0 && std::isfinite(res.value) && res.value > 0.0, ErrorKind::NonNormalizablePrior,
            "quadrature of exp(A) did not converge");
    log_kappa_1d = peak + std::log(res.value);
  }
  const double kappa_1d = std::exp(log_kappa_1d);
  require(std::isfinite(kappa_1d) && kappa_1d >= DBL_MIN, ErrorKind::NonNormalizablePrior,
          "normalization constant is infinite or underflows");
  out.log_kappa = a.entropy_const + a.dim * log_kappa_1d;
  out.kappa = std::exp(out.log_kappa);
  return out;
}

struct GridIntegrability {
  bool ok = false;
  std::string reason;
};

/// Tail probe: exp(A) must have decayed by `min_drop` nats at both ends of the
/// grid and A must not increase outward across the outer sixteenth.
inline GridIntegrability probe_grid_integrability(const GridFunction& a, double min_drop = 20.0) {
  const auto& v = a.values;
  const double peak = *std::max_element(v.begin(), v.end());
  if (v.front() > peak - min_drop || v.back() > peak - min_drop) {
    std::ostringstream os;
    os << "exp(A) has not decayed at the grid edges (A - max A = " << v.front() - peak << ", "
       << v.back() - peak << ")";
    return {false, os.str()};
  }
  const std::size_t outer = std::max<std::size_t>(v.size() / 16, 2);
  const double slack = 1e-8 * std::max(1.0, std::abs(peak));
  for (std::size_t i = 1; i < outer; ++i) {
    if (v[i - 1] > v[i] + slack) return {false, "A increases towards the lower grid edge"};
    const std::size_t j = v.size() - i;
    if (v[j] > v[j - 1] + slack) return {false, "A increases towards the upper grid edge"};
  }
  return {true, {}};
}

/// Trapezoid normalization of a grid log-density of one coordinate, replicated
/// over `dim` independent coordinates.
inline PriorDensity normalize_prior(const GridFunction& a, int dim = 1) {
  a.validate();
  require(dim >= 1, ErrorKind::InvalidParameter, "prior dimension must be >= 1");
  const auto probe = probe_grid_integrability(a);
  require(probe.ok, ErrorKind::NonNormalizablePrior, probe.reason);
  const double peak = *std::max_element(a.values.begin(), a.values.end());
  double acc = 0.0;
  for (double v : a.values) acc += std::exp(v - peak);
  const double log_kappa_1d = peak + std::log(acc * a.spacing());
  const double kappa_1d = std::exp(log_kappa_1d);
  require(std::isfinite(kappa_1d) && kappa_1d >= DBL_MIN, ErrorKind::NonNormalizablePrior,
          "normalization constant is infinite or underflows");
  PriorDensity out;
  out.form = PriorForm::Grid;
  out.dim = dim;
  out.grid = a;
  out.log_kappa = dim * log_kappa_1d;
  out.kappa = std::exp(out.log_kappa);
  return out;
}

// ---------------------------------------------------------------------------
// Dirac posteriors: A = -r.

inline PriorDensity derive_prior_dirac(const PenaltySpec& penalty) {
  penalty.validate();
  const double lam = penalty.lambda;
  switch (penalty.kind) {
    case PenaltyKind::L2: return PriorDensity::gaussian(0.0, 1.0 / (2.0 * lam), penalty.dim);
    case PenaltyKind::L1: return PriorDensity::laplace(lam, penalty.dim);
    case PenaltyKind::GroupLasso:
    case PenaltyKind::ReversedGroupLasso: return PriorDensity::exp_norm(lam, penalty.dim);
    case PenaltyKind::EvenPolynomial: {
      require(!penalty.nu_dependence, ErrorKind::InvalidParameter,
              "a Dirac posterior has no variance for a nu-dependent penalty");
      LogDensityPoly a;
      a.dim = penalty.dim;
      const auto even = penalty.even_coefficients();
      a.poly.coeffs.assign(2 * even.size() - 1, 0.0);
      for (std::size_t k = 0; k < even.size(); ++k) a.poly.coeffs[2 * k] = -even[k];
      return normalize_prior(a);
    }
    case PenaltyKind::GridSampled: {
      GridFunction a = *penalty.grid;
      for (double& v : a.values) v *= -lam;
      return normalize_prior(a, penalty.dim);
    }
  }
  fail(ErrorKind::UnsupportedPenalty, "unknown penalty kind");
}

// ---------------------------------------------------------------------------
// Grid engine

struct GridLayout {
  double lo = -20.0;
  double hi = 20.0;
  std::size_t n_points = 4096;
  double band_limit = 4.0;
};

/// Domain [-20 sigma, 20 sigma], 4096 points, band limit min(4 / sigma, Nyquist / 4).
/// The amplification exp(s2 B^2 / 2) then stays at e^8.
inline GridLayout default_grid_layout(double s2) {
  require(std::isfinite(s2) && s2 > 0.0, ErrorKind::InvalidParameter, "variance must be > 0");
  const double sigma = std::sqrt(s2);
  GridLayout g{-20.0 * sigma, 20.0 * sigma, 4096, 0.0};
  const double nyquist = kPi * static_cast<double>(g.n_points) / (g.hi - g.lo);
  g.band_limit = std::min(4.0 / sigma, nyquist / 4.0);
  return g;
}

struct DeconvolutionOptions {
  /// Degree of the least-squares polynomial removed before the DFT; -1 disables.
  int detrend_degree = 8;
  bool tikhonov = false;
  double tikhonov_floor = 1e-12;
  double underflow = 1e-300;
  double imag_tol = 1e-10;
};

namespace detail {

/// Least-squares polynomial fit in the scaled variable t = (x - center) / half_width.
inline Polynomial fit_scaled_polynomial(const GridFunction& g, int degree, double center, double half_width) {
  const auto n = static_cast<Eigen::Index>(g.n_points());
  Eigen::MatrixXd v(n, degree + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = (g.x(static_cast<std::size_t>(i)) - center) / half_width;
    double p = 1.0;
    for (int m = 0; m <= degree; ++m) {
      v(i, m) = p;
      p *= t;
    }
    y(i) = g.values[static_cast<std::size_t>(i)];
  }
  Eigen::VectorXd c = v.colPivHouseholderQr().solve(y);
  return Polynomial{std::vector<double>(c.data(), c.data() + c.size())};
}

/// q with E[q(t + Z)] = p(t) for Z ~ N(0, var): back-substitution on the Gaussian
/// moment expansion E[(t + Z)^m] = sum_j C(m, j) t^(m - j) E[Z^j].
inline Polynomial gaussian_moment_deconvolve(const Polynomial& p, double var) {
  const int d = static_cast<int>(p.coeffs.size()) - 1;
  std::vector<double> moment(static_cast<std::size_t>(d) + 1, 0.0);
  for (int j = 0; j <= d; j += 2) moment[static_cast<std::size_t>(j)] = std::pow(var, j / 2) * double_factorial_odd(j / 2);
  Polynomial q;
  q.coeffs.assign(p.coeffs.size(), 0.0);
  for (int m = d; m >= 0; --m) {
    double v = p.coeffs[static_cast<std::size_t>(m)];
    for (int mp = m + 2; mp <= d; mp += 2)
      v -= q.coeffs[static_cast<std::size_t>(mp)] * binomial_exact(mp, mp - m) *
           moment[static_cast<std::size_t>(mp - m)];
    q.coeffs[static_cast<std::size_t>(m)] = v;
  }
  return q;
}

}  // namespace detail

/// Band-limited solution Q of (Q * N(0, s2))(mu) = r(mu) on the grid of r.
inline GridFunction deconvolve_gaussian(const GridFunction& r, double s2, double band_limit,
                                        const DeconvolutionOptions& opts = {}) {
  r.validate();
  require(std::isfinite(s2) && s2 > 0.0, ErrorKind::InvalidParameter, "variance must be > 0");
  require(std::isfinite(band_limit) && band_limit > 0.0, ErrorKind::InvalidParameter, "band limit must be > 0");
  require(band_limit <= r.nyquist(), ErrorKind::Configuration,
          "band limit " + std::to_string(band_limit) + " exceeds the grid Nyquist frequency " +
              std::to_string(r.nyquist()));

  GridFunction residual = r;
  std::vector<double> trend(r.n_points(), 0.0);
  if (opts.detrend_degree >= 0) {
    const double center = 0.5 * (r.lo + r.last_x());
    const double half_width = 0.5 * (r.last_x() - r.lo);
    const Polynomial fitted = detail::fit_scaled_polynomial(r, opts.detrend_degree, center, half_width);
    const Polynomial deconv = detail::gaussian_moment_deconvolve(fitted, s2 / (half_width * half_width));
    for (std::size_t i = 0; i < r.n_points(); ++i) {
      const double t = (r.x(i) - center) / half_width;
      residual.values[i] -= fitted(t);
      trend[i] = deconv(t);
    }
  }

  Spectrum spec = dft_forward(residual);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double xi = spec.frequency(k);
    if (std::abs(xi) > band_limit) {
      spec.coeffs[k] = 0.0;
      continue;
    }
    const double f = std::exp(-0.5 * s2 * xi * xi);
    if (f < opts.underflow) {
      require(opts.tikhonov, ErrorKind::IllConditionedDeconvolution,
              "|F beta| underflows at frequency " + std::to_string(xi));
      spec.coeffs[k] *= f / (f * f + opts.tikhonov_floor * opts.tikhonov_floor);
    } else {
      spec.coeffs[k] /= f;
    }
  }
  GridFunction q = dft_inverse(spec, opts.imag_tol);
  for (std::size_t i = 0; i < q.n_points(); ++i) q.values[i] += trend[i];
  return q;
}

/// Samples the one-coordinate penalty r(t) (lambda included) on a grid.
inline GridFunction sample_penalty(const PenaltySpec& penalty, const GridLayout& layout, double s2 = 1.0) {
  penalty.validate();
  auto coord = [&](double t) -> double {
    switch (penalty.kind) {
      case PenaltyKind::L2: return penalty.lambda * t * t;
      case PenaltyKind::L1: return penalty.lambda * std::abs(t);
      case PenaltyKind::GroupLasso:
      case PenaltyKind::ReversedGroupLasso:
        require(penalty.dim == 1, ErrorKind::UnsupportedPenalty,
                "group penalties in more than one dimension are not separable");
        return penalty.lambda * std::abs(t);
      case PenaltyKind::EvenPolynomial: {
        const auto c = penalty.even_coefficients(s2);
        double acc = 0.0;
        for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * t * t + *it;
        return acc;
      }
      case PenaltyKind::GridSampled: {
        auto v = penalty.grid->interpolate(t);
        require(v.has_value(), ErrorKind::SupportViolation,
                "engine grid point " + std::to_string(t) + " lies outside the penalty grid");
        return penalty.lambda * *v;
      }
    }
    return 0.0;
  };
  return GridFunction::sample(layout.lo, layout.hi, layout.n_points, coord);
}

/// Grid samples of A = -Ent - F^-1[F r / F beta] for one coordinate.
inline GridFunction derive_prior_grid(const GridFunction& penalty, const PosteriorFamily& posterior,
                                      double band_limit, std::span<const double> nu = {},
                                      const DeconvolutionOptions& opts = {}) {
  posterior.validate();
  require(posterior.is_gaussian(), ErrorKind::Configuration, "grid engine needs a Gaussian posterior");
  const double s2 = isotropic_variance(posterior, nu);
  const double ent_1d = 0.5 * std::log(2.0 * kPi * kE * s2);
  GridFunction a = deconvolve_gaussian(penalty, s2, band_limit, opts);
  for (double& v : a.values) v = -ent_1d - v;
  return a;
}

/// Convenience overload sampling the penalty on the default layout for the posterior variance.
inline GridFunction derive_prior_grid(const PenaltySpec& penalty, const PosteriorFamily& posterior,
                                      std::span<const double> nu = {}, const DeconvolutionOptions& opts = {}) {
  const double s2 = isotropic_variance(posterior, nu);
  const auto layout = default_grid_layout(s2);
  return derive_prior_grid(sample_penalty(penalty, layout, s2), posterior, layout.band_limit, nu, opts);
}

// ---------------------------------------------------------------------------
// Condition (A)

struct ConditionAOptions {
  double symbolic_tolerance = 1e-9;
  double grid_tolerance = 1e-4;
  double probe_halfwidth = 5.0;
  int probe_points = 101;
  DeconvolutionOptions grid;
};

struct ConditionAReport {
  bool independent_of_nu = true;
  /// Max over nu pairs and probe points of |A_nu1(theta) - A_nu2(theta)|.
  double max_deviation = 0.0;
  /// Same after removing the mean difference of each pair.
  double shape_deviation = 0.0;
  bool integrable = true;
  std::vector<std::vector<double>> tested_nus;
  std::string engine;
  double tolerance = 0.0;
  std::string integrability_note;

  bool holds() const { return independent_of_nu && integrable; }
};

inline ConditionAReport check_condition_A(const PenaltySpec& penalty, const PosteriorFamily& posterior,
                                          const std::vector<std::vector<double>>& nu_samples,
                                          const ConditionAOptions& opts = {}) {
  penalty.validate();
  posterior.validate();
  ConditionAReport rep;
  rep.tested_nus = nu_samples;

  if (posterior.kind == PosteriorKind::Dirac) {
    rep.engine = "dirac";
    rep.tolerance = 0.0;
    try {
      derive_prior_dirac(penalty);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonNormalizablePrior) throw;
      rep.integrable = false;
      rep.integrability_note = e.what();
    }
    return rep;
  }

  std::vector<std::vector<double>> nus = nu_samples;
  if (nus.empty()) nus.push_back(posterior.kind == PosteriorKind::GaussianFixedVar ? posterior.sigma2
                                                                                  : std::vector<double>{1.0});
  const bool symbolic = penalty.is_polynomial();
  rep.engine = symbolic ? "symbolic" : "grid";
  rep.tolerance = symbolic ? opts.symbolic_tolerance : opts.grid_tolerance;

  double half = opts.probe_halfwidth;
  if (!symbolic)
    for (const auto& nu : nus) half = std::min(half, 10.0 * std::sqrt(isotropic_variance(posterior, nu)));
  std::vector<double> probe(static_cast<std::size_t>(opts.probe_points));
  for (std::size_t i = 0; i < probe.size(); ++i)
    probe[i] = -half + 2.0 * half * static_cast<double>(i) / static_cast<double>(probe.size() - 1);

  auto describe = [](const std::vector<double>& nu) {
    std::ostringstream os;
    os << "nu = (";
    for (std::size_t i = 0; i < nu.size(); ++i) os << (i ? ", " : "") << nu[i];
    os << ")";
    return os.str();
  };

  std::vector<std::vector<double>> profiles;
  for (const auto& nu : nus) {
    std::vector<double> prof(probe.size());
    try {
      if (symbolic) {
        const auto a = derive_prior_symbolic(penalty, posterior, nu);
        for (std::size_t i = 0; i < probe.size(); ++i) prof[i] = a.entropy_const + a.dim * a.poly(probe[i]);
        if (!a.integrable(1e-14 * std::max(1.0, max_abs(a.poly.coeffs)))) {
          rep.integrable = false;
          rep.integrability_note = "leading coefficient of A is not negative at " + describe(nu);
        }
      } else {
        const auto a = derive_prior_grid(penalty, posterior, nu, opts.grid);
        for (std::size_t i = 0; i < probe.size(); ++i) prof[i] = penalty.dim * *a.interpolate(probe[i]);
        const auto p = probe_grid_integrability(a);
        if (!p.ok) {
          rep.integrable = false;
          rep.integrability_note = p.reason + " at " + describe(nu);
        }
      }
    } catch (const Error& e) {
      throw Error(e.kind(), describe(nu) + ": " + e.what());
    }
    profiles.push_back(std::move(prof));
  }

  for (std::size_t u = 0; u < profiles.size(); ++u) {
    for (std::size_t w = u + 1; w < profiles.size(); ++w) {
      std::vector<double> diff(probe.size());
      for (std::size_t i = 0; i < probe.size(); ++i) diff[i] = profiles[u][i] - profiles[w][i];
      rep.max_deviation = std::max(rep.max_deviation, max_abs(diff));
      const double offset = mean(diff);
      for (double& d : diff) d -= offset;
      rep.shape_deviation = std::max(rep.shape_deviation, max_abs(diff));
    }
  }
  rep.independent_of_nu = rep.max_deviation <= rep.tolerance;
  return rep;
}

}  // namespace penprior
