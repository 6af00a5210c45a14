#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include "penprior/error.hpp"

namespace penprior {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kE = std::numbers::e;
/// ln(2πe), the per-coordinate Gaussian entropy offset.
inline const double kLog2PiE = std::log(2.0 * kPi * kE);

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
}

/// Exact for the small arguments used by the polynomial calculus (n <= 40).
inline double binomial_exact(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return std::round(out);
}

/// (2k-1)!! with the convention (-1)!! = 1.
inline double double_factorial_odd(int k) {
  double out = 1.0;
  for (int i = 1; i <= 2 * k - 1; i += 2) out *= i;
  return out;
}

/// Surface area of the unit (p-1)-sphere embedded in R^p.
inline double sphere_surface(int p) {
  return 2.0 * std::pow(kPi, 0.5 * p) / std::tgamma(0.5 * p);
}

inline double log_sphere_surface(int p) {
  return std::log(2.0) + 0.5 * p * std::log(kPi) - std::lgamma(0.5 * p);
}

/// Dense polynomial with ascending monomial coefficients.
struct Polynomial {
  std::vector<double> coeffs;

  double operator()(double x) const {
    double acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
    return acc;
  }

  /// Degree after dropping trailing coefficients with |c| <= tol; -1 for zero.
  int degree(double tol = 0.0) const {
    for (int k = static_cast<int>(coeffs.size()) - 1; k >= 0; --k)
      if (std::abs(coeffs[k]) > tol) return k;
    return -1;
  }

  double leading(double tol = 0.0) const {
    int d = degree(tol);
    return d < 0 ? 0.0 : coeffs[d];
  }
};

inline double max_abs(std::span<const double> xs) {
  double m = 0.0;
  for (double x : xs) m = std::max(m, std::abs(x));
  return m;
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Composite trapezoid on a uniform grid of spacing h.
inline double trapezoid(std::span<const double> ys, double h) {
  if (ys.size() < 2) return 0.0;
  double s = 0.5 * (ys.front() + ys.back());
  for (std::size_t i = 1; i + 1 < ys.size(); ++i) s += ys[i];
  return s * h;
}

/// Gauss–Hermite rule for the weight exp(-x^2).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  /// E[f(X)] for X ~ N(mean, var).
  template <class F>
  double expectation(double mean_value, double var, F&& f) const {
    const double scale = std::sqrt(2.0 * var);
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(mean_value + scale * nodes[i]);
    return acc / std::sqrt(kPi);
  }
};

inline GaussHermiteRule gauss_hermite_rule(int n) {
  require(n >= 1, ErrorKind::Configuration, "Gauss-Hermite order must be positive");
  std::unique_ptr<gsl_integration_fixed_workspace, decltype(&gsl_integration_fixed_free)> ws(
      gsl_integration_fixed_alloc(gsl_integration_fixed_hermite, static_cast<std::size_t>(n), 0.0,
                                  1.0, 0.0, 0.0),
      &gsl_integration_fixed_free);
  require(ws != nullptr, ErrorKind::NumericalFailure, "GSL could not build Gauss-Hermite rule");
  GaussHermiteRule rule;
  const double* x = gsl_integration_fixed_nodes(ws.get());
  const double* w = gsl_integration_fixed_weights(ws.get());
  rule.nodes.assign(x, x + n);
  rule.weights.assign(w, w + n);
  return rule;
}

namespace detail {

inline double gsl_trampoline(double x, void* params) {
  return (*static_cast<const std::function<double(double)>*>(params))(x);
}

struct GslErrorHandlerGuard {
  gsl_error_handler_t* previous;
  GslErrorHandlerGuard() : previous(gsl_set_error_handler_off()) {}
  ~GslErrorHandlerGuard() { gsl_set_error_handler(previous); }
};

}  // namespace detail

struct IntegralResult {
  double value = 0.0;
  double abs_error = 0.0;
  int status = 0;
};

/// Adaptive integral over the whole real line (QUADPACK QAGI).
inline IntegralResult integrate_real_line(const std::function<double(double)>& f,
                                          double rel_tol = 1e-12) {
  detail::GslErrorHandlerGuard guard;
  std::unique_ptr<gsl_integration_workspace, decltype(&gsl_integration_workspace_free)> ws(
      gsl_integration_workspace_alloc(2000), &gsl_integration_workspace_free);
  gsl_function fn{&detail::gsl_trampoline, const_cast<std::function<double(double)>*>(&f)};
  IntegralResult out;
  out.status = gsl_integration_qagi(&fn, 0.0, rel_tol, 2000, ws.get(), &out.value, &out.abs_error);
  return out;
}

/// Adaptive integral over [a, b] (QUADPACK QAGS).
inline IntegralResult integrate_interval(const std::function<double(double)>& f, double a, double b,
                                         double rel_tol = 1e-12) {
  detail::GslErrorHandlerGuard guard;
  std::unique_ptr<gsl_integration_workspace, decltype(&gsl_integration_workspace_free)> ws(
      gsl_integration_workspace_alloc(2000), &gsl_integration_workspace_free);
  gsl_function fn{&detail::gsl_trampoline, const_cast<std::function<double(double)>*>(&f)};
  IntegralResult out;
  out.status = gsl_integration_qags(&fn, a, b, 0.0, rel_tol, 2000, ws.get(), &out.value, &out.abs_error);
  return out;
}

}  // namespace penprior
