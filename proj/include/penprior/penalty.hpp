#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "penprior/error.hpp"
#include "penprior/grid.hpp"
#include "penprior/numeric.hpp"

namespace penprior {

enum class PenaltyKind { L2, L1, GroupLasso, ReversedGroupLasso, EvenPolynomial, GridSampled };

inline std::string_view to_string(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::L2: return "L2";
    case PenaltyKind::L1: return "L1";
    case PenaltyKind::GroupLasso: return "GroupLasso";
    case PenaltyKind::ReversedGroupLasso: return "ReversedGroupLasso";
    case PenaltyKind::EvenPolynomial: return "EvenPolynomial";
    case PenaltyKind::GridSampled: return "GridSampled";
  }
  return "?";
}

inline PenaltyKind penalty_kind_from_string(std::string_view s) {
  if (s == "L2" || s == "l2") return PenaltyKind::L2;
  if (s == "L1" || s == "l1") return PenaltyKind::L1;
  if (s == "GroupLasso" || s == "group-lasso") return PenaltyKind::GroupLasso;
  if (s == "ReversedGroupLasso" || s == "reversed-group-lasso") return PenaltyKind::ReversedGroupLasso;
  if (s == "EvenPolynomial" || s == "poly") return PenaltyKind::EvenPolynomial;
  if (s == "GridSampled" || s == "grid") return PenaltyKind::GridSampled;
  fail(ErrorKind::UnsupportedPenalty, "unknown penalty kind '" + std::string(s) + "'");
}

/// Variance-dependent coefficients of an even polynomial penalty:
///   c_k(s) = sum_j power[k][j] * s^j + log[k] * ln(s),   s = sigma^2.
/// Covers the a(s) + b(s) mu^2 family and its perturbations.
struct NuDependence {
  std::vector<std::vector<double>> power;
  std::vector<double> log;

  std::size_t size() const { return std::max(power.size(), log.size()); }

  std::vector<double> coefficients(double sigma2) const {
    require(sigma2 > 0.0 && std::isfinite(sigma2), ErrorKind::InvalidParameter,
            "variance parameter must be positive");
    std::vector<double> c(size(), 0.0);
    for (std::size_t k = 0; k < power.size(); ++k) {
      double s_pow = 1.0;
      for (double coef : power[k]) {
        c[k] += coef * s_pow;
        s_pow *= sigma2;
      }
    }
    for (std::size_t k = 0; k < log.size(); ++k) c[k] += log[k] * std::log(sigma2);
    return c;
  }
};

/// A penalty r(mu, nu) = lambda * r~(mu, nu).
struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::L2;
  double lambda = 1.0;
  int dim = 1;
  /// EvenPolynomial: coefficient of mu^(2k) is poly_coeffs[k].
  std::vector<double> poly_coeffs;
  std::optional<GridFunction> grid;
  std::optional<NuDependence> nu_dependence;

  static PenaltySpec l2(double lambda, int dim = 1) { return {PenaltyKind::L2, lambda, dim}; }
  static PenaltySpec l1(double lambda, int dim = 1) { return {PenaltyKind::L1, lambda, dim}; }
  static PenaltySpec group_lasso(double lambda, int dim) {
    return {PenaltyKind::GroupLasso, lambda, dim};
  }
  static PenaltySpec reversed_group_lasso(double lambda, int dim) {
    return {PenaltyKind::ReversedGroupLasso, lambda, dim};
  }
  static PenaltySpec even_polynomial(std::vector<double> coeffs, double lambda = 1.0, int dim = 1) {
    PenaltySpec p{PenaltyKind::EvenPolynomial, lambda, dim};
    p.poly_coeffs = std::move(coeffs);
    return p;
  }
  /// Builds an even polynomial from ascending monomial coefficients; odd terms
  /// are not representable by the symbolic calculus.
  static PenaltySpec from_monomials(std::span<const double> monomials, double lambda = 1.0,
                                    int dim = 1) {
    std::vector<double> even;
    for (std::size_t m = 0; m < monomials.size(); ++m) {
      if (m % 2 == 1) {
        require(monomials[m] == 0.0, ErrorKind::UnsupportedPenalty,
                "odd-degree term mu^" + std::to_string(m) + " in polynomial penalty");
      } else {
        even.push_back(monomials[m]);
      }
    }
    return even_polynomial(std::move(even), lambda, dim);
  }
  static PenaltySpec nu_family(NuDependence dep, double lambda = 1.0, int dim = 1) {
    PenaltySpec p{PenaltyKind::EvenPolynomial, lambda, dim};
    p.nu_dependence = std::move(dep);
    return p;
  }
  static PenaltySpec grid_sampled(GridFunction g, double lambda = 1.0, int dim = 1) {
    PenaltySpec p{PenaltyKind::GridSampled, lambda, dim};
    p.grid = std::move(g);
    return p;
  }

  void validate() const {
    require(std::isfinite(lambda) && lambda > 0.0, ErrorKind::InvalidParameter, "lambda must be > 0");
    require(dim >= 1, ErrorKind::InvalidParameter, "penalty dimension must be >= 1");
    if (kind == PenaltyKind::EvenPolynomial && !nu_dependence) {
      require(!poly_coeffs.empty(), ErrorKind::InvalidParameter, "polynomial penalty has no coefficients");
      for (double c : poly_coeffs)
        require(std::isfinite(c), ErrorKind::InvalidParameter, "polynomial coefficients must be finite");
      require(poly_coeffs.back() > 0.0, ErrorKind::InvalidParameter,
              "leading coefficient of an even polynomial penalty must be > 0");
    }
    if (kind == PenaltyKind::GridSampled) {
      require(grid.has_value(), ErrorKind::InvalidParameter, "grid penalty without samples");
      grid->validate();
    }
  }

  bool is_polynomial() const {
    return kind == PenaltyKind::L2 || kind == PenaltyKind::EvenPolynomial;
  }

  /// Coefficients (lambda included) of mu^(2k) for one coordinate with variance sigma2.
  std::vector<double> even_coefficients(double sigma2 = 1.0) const {
    std::vector<double> c;
    if (kind == PenaltyKind::L2) {
      c = {0.0, 1.0};
    } else if (kind == PenaltyKind::EvenPolynomial) {
      c = nu_dependence ? nu_dependence->coefficients(sigma2) : poly_coeffs;
    } else {
      fail(ErrorKind::UnsupportedPenalty,
           std::string(to_string(kind)) + " is not an even polynomial penalty");
    }
    for (double& v : c) v *= lambda;
    return c;
  }

  /// r_nu(mu). `nu` holds per-coordinate variances (size 1 broadcasts, empty
  /// means the penalty does not depend on nu).
  double evaluate(std::span<const double> mu, std::span<const double> nu = {}) const {
    require(mu.size() == static_cast<std::size_t>(dim), ErrorKind::ShapeMismatch,
            "penalty dimension " + std::to_string(dim) + " but mu has " + std::to_string(mu.size()));
    auto var_of = [&](std::size_t c) {
      if (nu.empty()) return 1.0;
      return nu.size() == 1 ? nu[0] : nu[c];
    };
    double acc = 0.0;
    switch (kind) {
      case PenaltyKind::L2:
        for (double m : mu) acc += m * m;
        return lambda * acc;
      case PenaltyKind::L1:
        for (double m : mu) acc += std::abs(m);
        return lambda * acc;
      case PenaltyKind::GroupLasso:
      case PenaltyKind::ReversedGroupLasso:
        for (double m : mu) acc += m * m;
        return lambda * std::sqrt(acc);
      case PenaltyKind::EvenPolynomial:
        for (std::size_t c = 0; c < mu.size(); ++c) {
          auto coeffs = even_coefficients(var_of(c));
          const double m2 = mu[c] * mu[c];
          double term = 0.0;
          for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) term = term * m2 + *it;
          acc += term;
        }
        return acc;
      case PenaltyKind::GridSampled:
        for (double m : mu) {
          auto v = grid->interpolate(m);
          require(v.has_value(), ErrorKind::SupportViolation,
                  "mu = " + std::to_string(m) + " lies outside the penalty grid");
          acc += *v;
        }
        return lambda * acc;
    }
    return acc;
  }

  double evaluate_scalar(double mu, double sigma2 = 1.0) const {
    const double m[1] = {mu};
    const double s[1] = {sigma2};
    return evaluate(m, s);
  }
};

enum class PosteriorKind { Dirac, GaussianFixedVar, GaussianFreeVar };

inline std::string_view to_string(PosteriorKind k) {
  switch (k) {
    case PosteriorKind::Dirac: return "Dirac";
    case PosteriorKind::GaussianFixedVar: return "GaussianFixedVar";
    case PosteriorKind::GaussianFreeVar: return "GaussianFreeVar";
  }
  return "?";
}

inline PosteriorKind posterior_kind_from_string(std::string_view s) {
  if (s == "Dirac" || s == "dirac") return PosteriorKind::Dirac;
  if (s == "GaussianFixedVar" || s == "gaussian") return PosteriorKind::GaussianFixedVar;
  if (s == "GaussianFreeVar" || s == "gaussian-free") return PosteriorKind::GaussianFreeVar;
  fail(ErrorKind::InvalidParameter, "unknown posterior kind '" + std::string(s) + "'");
}

inline constexpr double kDefaultEpsilonMachine = 0x1p-52;

/// Translation-invariant variational family beta_{mu,nu}(theta) = beta_{0,nu}(theta - mu).
struct PosteriorFamily {
  PosteriorKind kind = PosteriorKind::Dirac;
  int dim = 1;
  /// Fixed per-coordinate variances (size 1 broadcasts); GaussianFixedVar only.
  std::vector<double> sigma2;
  double epsilon_machine = kDefaultEpsilonMachine;

  static PosteriorFamily dirac(int dim = 1, double eps = kDefaultEpsilonMachine) {
    return {PosteriorKind::Dirac, dim, {}, eps};
  }
  static PosteriorFamily gaussian_fixed(double s2, int dim = 1) {
    return {PosteriorKind::GaussianFixedVar, dim, {s2}};
  }
  static PosteriorFamily gaussian_free(int dim = 1) { return {PosteriorKind::GaussianFreeVar, dim, {}}; }

  bool is_gaussian() const { return kind != PosteriorKind::Dirac; }

  void validate() const {
    require(dim >= 1, ErrorKind::InvalidParameter, "posterior dimension must be >= 1");
    if (kind == PosteriorKind::Dirac)
      require(std::isfinite(epsilon_machine) && epsilon_machine > 0.0, ErrorKind::InvalidParameter,
              "epsilon_machine must be positive");
    if (kind == PosteriorKind::GaussianFixedVar) {
      require(sigma2.size() == 1 || sigma2.size() == static_cast<std::size_t>(dim),
              ErrorKind::InvalidParameter, "sigma2 must have 1 or dim entries");
      for (double s : sigma2)
        require(std::isfinite(s) && s > 0.0, ErrorKind::InvalidParameter, "sigma2 must be finite and > 0");
    }
  }

  /// Per-coordinate variances for parameter nu; fixed-variance families ignore nu.
  std::vector<double> variances(std::span<const double> nu = {}) const {
    require(kind != PosteriorKind::Dirac, ErrorKind::InvalidParameter, "Dirac posterior has no variance");
    std::span<const double> src = kind == PosteriorKind::GaussianFixedVar ? std::span<const double>(sigma2) : nu;
    require(src.size() == 1 || src.size() == static_cast<std::size_t>(dim), ErrorKind::InvalidParameter,
            "variance parameter must have 1 or dim entries");
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (std::size_t c = 0; c < out.size(); ++c) {
      out[c] = src.size() == 1 ? src[0] : src[c];
      require(std::isfinite(out[c]) && out[c] > 0.0, ErrorKind::InvalidParameter,
              "variance must be finite and > 0");
    }
    return out;
  }
};

}  // namespace penprior
