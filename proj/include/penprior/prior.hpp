#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "penprior/error.hpp"
#include "penprior/grid.hpp"
#include "penprior/numeric.hpp"

namespace penprior {

/// Polynomial log-density A(theta) = entropy_const + sum_c poly(theta_c).
struct LogDensityPoly {
  Polynomial poly;
  /// The -Ent(beta_{0,nu}) term, summed over coordinates.
  double entropy_const = 0.0;
  int dim = 1;

  double operator()(std::span<const double> theta) const {
    double acc = entropy_const;
    for (double t : theta) acc += poly(t);
    return acc;
  }
  double coordinate(double t) const { return poly(t); }

  /// exp(A) integrable iff the leading term is an even power with negative coefficient.
  bool integrable(double tol = 0.0) const {
    const int d = poly.degree(tol);
    return d >= 2 && d % 2 == 0 && poly.coeffs[d] < 0.0;
  }
};

enum class PriorForm { Gaussian, Laplace, ExpNorm, LogPoly, Grid };

inline std::string_view to_string(PriorForm f) {
  switch (f) {
    case PriorForm::Gaussian: return "Gaussian";
    case PriorForm::Laplace: return "Laplace";
    case PriorForm::ExpNorm: return "ExpNorm";
    case PriorForm::LogPoly: return "LogPoly";
    case PriorForm::Grid: return "Grid";
  }
  return "?";
}

/// A prior alpha = exp(A) / kappa, where kappa = integral of exp(A) for the A that
/// produced it. Gaussian, Laplace, LogPoly and Grid forms are
/// products of identical coordinate densities over `dim` coordinates; ExpNorm is
/// the joint density proportional to exp(-rate * ||theta||) on R^dim.
struct PriorDensity {
  PriorForm form = PriorForm::Gaussian;
  int dim = 1;
  double mean = 0.0;
  double var = 1.0;
  double rate = 1.0;
  std::optional<LogDensityPoly> log_poly;
  /// Grid form: samples of the unnormalized log-density A on one coordinate.
  std::optional<GridFunction> grid;
  double kappa = 1.0;
  double log_kappa = 0.0;

  static PriorDensity gaussian(double mean, double var, int dim = 1) {
    require(std::isfinite(var) && var > 0.0, ErrorKind::InvalidParameter, "Gaussian variance must be > 0");
    PriorDensity p{PriorForm::Gaussian, dim, mean, var};
    p.log_kappa = 0.5 * dim * std::log(2.0 * kPi * var);
    p.kappa = std::exp(p.log_kappa);
    return p;
  }
  static PriorDensity laplace(double rate, int dim = 1) {
    require(std::isfinite(rate) && rate > 0.0, ErrorKind::InvalidParameter, "Laplace rate must be > 0");
    PriorDensity p{PriorForm::Laplace, dim};
    p.rate = rate;
    p.log_kappa = dim * std::log(2.0 / rate);
    p.kappa = std::exp(p.log_kappa);
    return p;
  }
  /// Normalization rate^P / (S_{P-1} Gamma(P)).
  static PriorDensity exp_norm(double rate, int p_dim) {
    require(std::isfinite(rate) && rate > 0.0, ErrorKind::InvalidParameter, "ExpNorm rate must be > 0");
    require(p_dim >= 1, ErrorKind::InvalidParameter, "ExpNorm dimension must be >= 1");
    PriorDensity p{PriorForm::ExpNorm, p_dim};
    p.rate = rate;
    p.log_kappa = log_sphere_surface(p_dim) + std::lgamma(static_cast<double>(p_dim)) -
                  p_dim * std::log(rate);
    p.kappa = std::exp(p.log_kappa);
    return p;
  }

  /// Coordinate-wise product structure (KL additivity applies).
  bool separable() const { return form != PriorForm::ExpNorm || dim == 1; }

  /// Unnormalized log-density of one coordinate (separable forms only).
  double log_kernel_1d(double t) const {
    switch (form) {
      case PriorForm::Gaussian: return -(t - mean) * (t - mean) / (2.0 * var);
      case PriorForm::Laplace: return -rate * std::abs(t);
      case PriorForm::ExpNorm: return -rate * std::abs(t);
      case PriorForm::LogPoly: return log_poly->coordinate(t);
      case PriorForm::Grid: {
        auto v = grid->interpolate(t);
        return v ? *v : -std::numeric_limits<double>::infinity();
      }
    }
    return 0.0;
  }

  /// Log of the normalizer of one coordinate's kernel. Named forms use their
  /// intrinsic normalization; tabulated forms derive it from log_kappa.
  double coordinate_log_norm() const {
    switch (form) {
      case PriorForm::Gaussian: return 0.5 * std::log(2.0 * kPi * var);
      case PriorForm::Laplace:
      case PriorForm::ExpNorm: return std::log(2.0 / rate);
      case PriorForm::LogPoly: return (log_kappa - log_poly->entropy_const) / dim;
      case PriorForm::Grid: return log_kappa / dim;
    }
    return 0.0;
  }

  /// Normalized log-density of one coordinate (separable forms only).
  double log_density_1d(double t) const {
    require(separable(), ErrorKind::InvalidParameter, "ExpNorm prior is not separable");
    return log_kernel_1d(t) - coordinate_log_norm();
  }

  double log_density(std::span<const double> theta) const {
    require(theta.size() == static_cast<std::size_t>(dim), ErrorKind::ShapeMismatch,
            "prior dimension " + std::to_string(dim) + " but theta has " + std::to_string(theta.size()));
    if (form == PriorForm::ExpNorm) {
      double s = 0.0;
      for (double t : theta) s += t * t;
      return -rate * std::sqrt(s) -
             (log_sphere_surface(dim) + std::lgamma(static_cast<double>(dim)) - dim * std::log(rate));
    }
    double acc = 0.0;
    for (double t : theta) acc += log_kernel_1d(t);
    return acc - dim * coordinate_log_norm();
  }

  double density(std::span<const double> theta) const { return std::exp(log_density(theta)); }

  double density_1d(double t) const { return std::exp(log_density_1d(t)); }

  /// Effective 1-D support used for quadrature and tabulated sampling.
  std::pair<double, double> support_1d() const {
    switch (form) {
      case PriorForm::Gaussian: {
        const double w = 40.0 * std::sqrt(var);
        return {mean - w, mean + w};
      }
      case PriorForm::Laplace:
      case PriorForm::ExpNorm: return {-80.0 / rate, 80.0 / rate};
      case PriorForm::Grid: return {grid->x(0), grid->last_x()};
      case PriorForm::LogPoly: {
        // Walk outwards until the kernel has dropped 60 nats below its value at 0.
        const double peak = log_poly->coordinate(0.0);
        double w = 1.0;
        while (w < 1e6 && (log_poly->coordinate(w) > peak - 60.0 || log_poly->coordinate(-w) > peak - 60.0))
          w *= 1.5;
        return {-w, w};
      }
    }
    return {-1.0, 1.0};
  }

  /// Per-coordinate mean and second moment, closed form where available.
  std::pair<double, double> coordinate_moments() const {
    switch (form) {
      case PriorForm::Gaussian: return {mean, var + mean * mean};
      case PriorForm::Laplace: return {0.0, 2.0 / (rate * rate)};
      case PriorForm::ExpNorm: return {0.0, (dim + 1.0) / (rate * rate)};
      case PriorForm::LogPoly:
      case PriorForm::Grid: break;
    }
    auto [a, b] = support_1d();
    auto m0 = integrate_interval([&](double t) { return density_1d(t); }, a, b, 1e-12).value;
    auto m1 = integrate_interval([&](double t) { return t * density_1d(t); }, a, b, 1e-12).value;
    auto m2 = integrate_interval([&](double t) { return t * t * density_1d(t); }, a, b, 1e-12).value;
    return {m1 / m0, m2 / m0};
  }

  struct CdfTable {
    std::vector<double> xs;
    std::vector<double> cdf;
    double inverse_cdf(double u) const {
      auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
      if (it == cdf.begin()) return xs.front();
      if (it == cdf.end()) return xs.back();
      const auto i = static_cast<std::size_t>(it - cdf.begin());
      const double span = cdf[i] - cdf[i - 1];
      const double frac = span > 0.0 ? (u - cdf[i - 1]) / span : 0.0;
      return xs[i - 1] + frac * (xs[i] - xs[i - 1]);
    }
  };

  /// Tabulated CDF of one coordinate over support_1d().
  CdfTable cdf_table(std::size_t n = 1 << 14) const {
    auto [a, b] = support_1d();
    CdfTable t;
    t.xs.resize(n);
    t.cdf.resize(n);
    std::vector<double> dens(n);
    for (std::size_t i = 0; i < n; ++i) {
      t.xs[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
      dens[i] = density_1d(t.xs[i]);
    }
    t.cdf[0] = 0.0;
    for (std::size_t i = 1; i < n; ++i)
      t.cdf[i] = t.cdf[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (t.xs[i] - t.xs[i - 1]);
    const double total = t.cdf.back();
    require(total > 0.0 && std::isfinite(total), ErrorKind::NumericalFailure, "prior CDF table degenerate");
    for (double& c : t.cdf) c /= total;
    return t;
  }
};

/// Draws joint samples from a prior. Tabulated forms precompute their CDF once.
class PriorSampler {
 public:
  explicit PriorSampler(PriorDensity prior) : prior_(std::move(prior)) {
    if (prior_.form == PriorForm::LogPoly || prior_.form == PriorForm::Grid) table_ = prior_.cdf_table();
  }

  const PriorDensity& prior() const { return prior_; }

  template <class Rng>
  void operator()(Rng& rng, std::span<double> out) const {
    require(out.size() == static_cast<std::size_t>(prior_.dim), ErrorKind::ShapeMismatch, "sample buffer size");
    switch (prior_.form) {
      case PriorForm::Gaussian: {
        std::normal_distribution<double> n(prior_.mean, std::sqrt(prior_.var));
        for (double& o : out) o = n(rng);
        return;
      }
      case PriorForm::Laplace: {
        std::exponential_distribution<double> e(prior_.rate);
        std::bernoulli_distribution sign(0.5);
        for (double& o : out) o = sign(rng) ? e(rng) : -e(rng);
        return;
      }
      case PriorForm::ExpNorm: {
        // Radius ~ Gamma(shape P, rate lambda); direction uniform on the sphere.
        std::gamma_distribution<double> radius(static_cast<double>(prior_.dim), 1.0 / prior_.rate);
        std::normal_distribution<double> n(0.0, 1.0);
        double norm = 0.0;
        do {
          norm = 0.0;
          for (double& o : out) {
            o = n(rng);
            norm += o * o;
          }
        } while (norm == 0.0);
        const double r = radius(rng) / std::sqrt(norm);
        for (double& o : out) o *= r;
        return;
      }
      case PriorForm::LogPoly:
      case PriorForm::Grid: {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (double& o : out) o = table_->inverse_cdf(u(rng));
        return;
      }
    }
  }

 private:
  PriorDensity prior_;
  std::optional<PriorDensity::CdfTable> table_;
};

}  // namespace penprior
