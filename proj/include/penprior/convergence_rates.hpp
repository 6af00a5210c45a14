#pragma once

#include <gsl/gsl_cdf.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "penprior/error.hpp"
#include "penprior/numeric.hpp"

namespace penprior {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// One coordinate of a product distribution: Gaussian or uniform on [lo, hi].
struct CoordinateDistribution {
  enum class Kind { Gaussian, Uniform } kind = Kind::Gaussian;
  double a = 0.0;  // mean, or lower bound
  double b = 1.0;  // variance, or upper bound

  static CoordinateDistribution gaussian(double mean, double variance) {
    require(variance > 0.0 && std::isfinite(mean), ErrorKind::InvalidParameter, "gaussian needs variance > 0");
    return {Kind::Gaussian, mean, variance};
  }
  static CoordinateDistribution uniform(double lo, double hi) {
    require(lo < hi, ErrorKind::InvalidParameter, "uniform needs lo < hi");
    return {Kind::Uniform, lo, hi};
  }

  double density(double x) const {
    if (kind == Kind::Uniform) return x >= a && x <= b ? 1.0 / (b - a) : 0.0;
    return std::exp(-0.5 * (x - a) * (x - a) / b) / std::sqrt(2.0 * kPi * b);
  }

  double log_density(double x) const {
    if (kind == Kind::Uniform)
      return x >= a && x <= b ? -std::log(b - a) : -std::numeric_limits<double>::infinity();
    return -0.5 * (x - a) * (x - a) / b - 0.5 * std::log(2.0 * kPi * b);
  }

  double cdf(double x) const {
    if (kind == Kind::Uniform) return std::clamp((x - a) / (b - a), 0.0, 1.0);
    return gsl_cdf_gaussian_P(x - a, std::sqrt(b));
  }

  double quantile(double u) const {
    if (kind == Kind::Uniform) return a + u * (b - a);
    return a + gsl_cdf_gaussian_Pinv(u, std::sqrt(b));
  }

  /// Mass of [lo, hi]; symmetric tails are taken from the nearer side for accuracy.
  double mass(const Interval& I) const {
    if (kind == Kind::Gaussian && I.lo > a) {
      const double s = std::sqrt(b);
      return gsl_cdf_gaussian_Q(I.lo - a, s) - gsl_cdf_gaussian_Q(I.hi - a, s);
    }
    return cdf(I.hi) - cdf(I.lo);
  }
};

using ProductDistribution = std::vector<CoordinateDistribution>;

/// Gaussian mean estimation: p_w(y) = N(w, noise_variance I). Per observation,
/// D(p_0 || p_w) = |w - w*|^2 / (2 noise_variance).
struct ToyModel {
  std::vector<double> w_star{0.0};
  double noise_variance = 1.0;
  /// Radius of the sup-norm ball on which the Lipschitz bound holds.
  double radius = 1.0;
  /// Lipschitz constant: D(p_0 || p_w) <= k |w - w*|_inf on the ball.
  double lipschitz = 0.5;

  /// Tightest k for the radius: m * r / (2 noise_variance).
  static ToyModel standard(std::vector<double> w_star = {0.0}, double noise_variance = 1.0, double radius = 1.0) {
    ToyModel m{std::move(w_star), noise_variance, radius, 0.0};
    m.lipschitz = static_cast<double>(m.w_star.size()) * radius / (2.0 * noise_variance);
    return m;
  }

  std::size_t dim() const { return w_star.size(); }

  double divergence_per_sample(std::span<const double> w) const {
    double s = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) s += (w[j] - w_star[j]) * (w[j] - w_star[j]);
    return s / (2.0 * noise_variance);
  }

  void validate() const {
    require(!w_star.empty(), ErrorKind::InvalidParameter, "w* is empty");
    require(noise_variance > 0.0 && radius > 0.0 && lipschitz > 0.0, ErrorKind::InvalidParameter,
            "noise variance, radius and Lipschitz constant must be > 0");
    // On the ball |w - w*|^2 <= m r |w - w*|_inf, so k >= m r / (2 noise_var) is required.
    require(lipschitz * (1.0 + 1e-12) >= static_cast<double>(dim()) * radius / (2.0 * noise_variance),
            ErrorKind::HypothesisViolation, "Lipschitz constant does not dominate D on the ball");
  }
};

struct RateWitness {
  double C1 = 0.0;
  double C2 = 0.0;
  double C3 = 0.0;
  std::function<double(long)> eps;
  /// Sets W~_j^n, one interval per coordinate.
  std::function<std::vector<Interval>(long)> sets;
  ProductDistribution beta_tilde;
  ProductDistribution alpha;
  /// Exponent when eps_n = n^{-gamma/2}; informational.
  std::optional<double> gamma;
};

inline void check_constants(double C1, double C2, double C3) {
  require(C1 >= 0.0 && C2 >= 0.0 && C3 >= 0.0 && std::isfinite(C1 + C2 + C3), ErrorKind::InvalidWitness,
          "constants must be finite and >= 0");
  require(C1 + C2 + C3 > 0.0, ErrorKind::InvalidWitness, "constants must have a positive sum");
}

inline void check_rate_sequence(double eps, long n) {
  require(n >= 1 && eps > 0.0 && std::isfinite(eps), ErrorKind::InvalidWitness, "need n >= 1 and eps_n > 0");
  const double ne2 = static_cast<double>(n) * eps * eps;
  require(ne2 >= 1.0 - 1e-12, ErrorKind::InvalidWitness,
          "n eps_n^2 = " + std::to_string(ne2) + " < 1 at n = " + std::to_string(n));
}

/// (C1 + C2 + C3) eps_n^2.
inline double rate_bound(double C1, double C2, double C3, double eps, long n) {
  check_constants(C1, C2, C3);
  check_rate_sequence(eps, n);
  return (C1 + C2 + C3) * eps * eps;
}

struct WitnessCheck {
  long n = 1;
  double eps = 1.0;
  double bound_value = 0.0;
  /// Largest D^(n) over the probes divided by C1 n eps^2 (<= 1 when the condition holds).
  double divergence_ratio = 0.0;
  /// Largest ln(beta~/alpha) over the probes.
  double max_log_ratio = 0.0;
  /// -sum_j ln beta~_j(W~_j).
  double mass_term = 0.0;
  bool divergence_ok = false;
  bool log_ratio_ok = false;
  bool mass_ok = false;
  bool conditions_hold = false;
  /// Monte-Carlo estimate of R_n for beta~ truncated to W~ and its standard error.
  double R_n_estimate = 0.0;
  double R_n_std_error = 0.0;
  /// Same quantity by adaptive quadrature.
  double R_n_quadrature = 0.0;
  bool R_n_within_bound = false;
  bool inconclusive = false;
};

struct WitnessReport {
  std::vector<WitnessCheck> per_n;
  int probe_points = 101;

  /// Every n satisfied the hypotheses and the bound.
  bool all_hold() const {
    return std::all_of(per_n.begin(), per_n.end(),
                       [](const WitnessCheck& c) { return c.conditions_hold && c.R_n_within_bound; });
  }
};

namespace detail {

inline void check_product(const ProductDistribution& d, std::size_t dim, const char* what) {
  require(d.size() == dim, ErrorKind::ShapeMismatch, std::string(what) + " dimension differs from the model");
}

/// Probe points: the full 101^m tensor grid for m <= 3, otherwise the
/// per-coordinate diagonal plus every corner (m <= 16).
inline std::vector<std::vector<double>> probe_points(const std::vector<Interval>& sets, int per_axis) {
  const std::size_t m = sets.size();
  auto axis = [&](std::size_t j, int t) {
    return sets[j].lo + (sets[j].hi - sets[j].lo) * static_cast<double>(t) / (per_axis - 1);
  };
  std::vector<std::vector<double>> pts;
  if (m <= 3) {
    std::size_t total = 1;
    for (std::size_t j = 0; j < m; ++j) total *= static_cast<std::size_t>(per_axis);
    for (std::size_t k = 0; k < total; ++k) {
      std::vector<double> w(m);
      std::size_t rem = k;
      for (std::size_t j = 0; j < m; ++j) {
        w[j] = axis(j, static_cast<int>(rem % static_cast<std::size_t>(per_axis)));
        rem /= static_cast<std::size_t>(per_axis);
      }
      pts.push_back(std::move(w));
    }
    return pts;
  }
  require(m <= 16, ErrorKind::InvalidParameter, "set probing supports at most 16 coordinates");
  for (int t = 0; t < per_axis; ++t) {
    std::vector<double> w(m);
    for (std::size_t j = 0; j < m; ++j) w[j] = axis(j, t);
    pts.push_back(std::move(w));
  }
  for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
    std::vector<double> w(m);
    for (std::size_t j = 0; j < m; ++j) w[j] = (mask >> j) & 1 ? sets[j].hi : sets[j].lo;
    pts.push_back(std::move(w));
  }
  return pts;
}

inline double log_product(const ProductDistribution& d, std::span<const double> w) {
  double s = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) s += d[j].log_density(w[j]);
  return s;
}

}  // namespace detail

/// Checks the three hypotheses at each n and estimates R_n for beta~ truncated
/// to W~: (1/n) E D^(n) + (1/n) KL(trunc || alpha). The set inclusions are
/// probed on a grid; interval masses are exact.
inline WitnessReport verify_witness(const ToyModel& model, const RateWitness& witness, const std::vector<long>& n_list,
                                    std::size_t mc_samples = 100000, std::uint64_t seed = 0) {
  model.validate();
  check_constants(witness.C1, witness.C2, witness.C3);
  require(static_cast<bool>(witness.eps) && static_cast<bool>(witness.sets), ErrorKind::InvalidWitness,
          "witness needs eps_n and the sets W~");
  require(!n_list.empty(), ErrorKind::InvalidParameter, "n list is empty");
  const std::size_t m = model.dim();
  detail::check_product(witness.beta_tilde, m, "beta~");
  detail::check_product(witness.alpha, m, "alpha");

  WitnessReport rep;
  std::mt19937_64 rng(seed);
  for (long n : n_list) {
    WitnessCheck c;
    c.n = n;
    c.eps = witness.eps(n);
    c.bound_value = rate_bound(witness.C1, witness.C2, witness.C3, c.eps, n);
    const double budget = static_cast<double>(n) * c.eps * c.eps;
    const auto sets = witness.sets(n);
    require(sets.size() == m, ErrorKind::ShapeMismatch, "W~ has the wrong number of coordinates");
    for (const auto& s : sets) require(s.lo < s.hi, ErrorKind::InvalidWitness, "degenerate interval in W~");

    c.max_log_ratio = -std::numeric_limits<double>::infinity();
    double max_div = 0.0;
    for (const auto& w : detail::probe_points(sets, rep.probe_points)) {
      max_div = std::max(max_div, static_cast<double>(n) * model.divergence_per_sample(w));
      c.max_log_ratio =
          std::max(c.max_log_ratio, detail::log_product(witness.beta_tilde, w) - detail::log_product(witness.alpha, w));
    }
    const double div_budget = witness.C1 * budget;
    c.divergence_ratio = div_budget > 0.0 ? max_div / div_budget : (max_div > 0.0 ? HUGE_VAL : 0.0);
    c.divergence_ok = max_div <= div_budget * (1.0 + 1e-12);
    c.log_ratio_ok = c.max_log_ratio <= witness.C2 * budget + 1e-12;

    c.mass_term = 0.0;
    std::vector<double> masses(m);
    for (std::size_t j = 0; j < m; ++j) {
      masses[j] = witness.beta_tilde[j].mass(sets[j]);
      c.mass_term -= std::log(masses[j]);
    }
    c.mass_ok = c.mass_term <= witness.C3 * budget * (1.0 + 1e-12);
    c.conditions_hold = c.divergence_ok && c.log_ratio_ok && c.mass_ok;

    // KL(trunc beta~ || alpha) = E_trunc ln(beta~/alpha) + mass_term.
    double kl = c.mass_term, kl_var = 0.0;
    double ed = 0.0, ed_var = 0.0;
    double ed_quad = 0.0, kl_quad = c.mass_term;
    for (std::size_t j = 0; j < m; ++j) {
      const auto& bt = witness.beta_tilde[j];
      const auto& al = witness.alpha[j];
      const double ws = model.w_star[j];
      const double u0 = bt.cdf(sets[j].lo), u1 = bt.cdf(sets[j].hi);
      std::uniform_real_distribution<double> u(u0, u1);
      double s1 = 0.0, s2 = 0.0, r1 = 0.0, r2 = 0.0;
      for (std::size_t k = 0; k < mc_samples; ++k) {
        const double w = std::clamp(bt.quantile(u(rng)), sets[j].lo, sets[j].hi);
        const double d = (w - ws) * (w - ws) / (2.0 * model.noise_variance);
        const double lr = bt.log_density(w) - al.log_density(w);
        s1 += d;
        s2 += d * d;
        r1 += lr;
        r2 += lr * lr;
      }
      const double N = static_cast<double>(mc_samples);
      if (mc_samples > 0) {
        ed += s1 / N;
        ed_var += std::max(0.0, s2 / N - (s1 / N) * (s1 / N)) / N;
        kl += r1 / N;
        kl_var += std::max(0.0, r2 / N - (r1 / N) * (r1 / N)) / N;
      }
      const auto dq = integrate_interval(
          [&](double w) { return bt.density(w) * (w - ws) * (w - ws) / (2.0 * model.noise_variance); }, sets[j].lo,
          sets[j].hi, 1e-10);
      ed_quad += dq.value / masses[j];
      const auto rq = integrate_interval(
          [&](double w) { return bt.density(w) * (bt.log_density(w) - al.log_density(w)); }, sets[j].lo, sets[j].hi,
          1e-10);
      kl_quad += rq.value / masses[j];
    }
    // (1/n) E D^(n) = E D per sample.
    c.R_n_estimate = ed + kl / static_cast<double>(n);
    c.R_n_std_error = std::sqrt(ed_var + kl_var / (static_cast<double>(n) * static_cast<double>(n)));
    c.R_n_quadrature = ed_quad + kl_quad / static_cast<double>(n);
    c.inconclusive = mc_samples < 100 || !std::isfinite(c.R_n_estimate) || !std::isfinite(c.R_n_std_error) ||
                     std::abs(c.R_n_estimate - c.R_n_quadrature) > 5.0 * c.R_n_std_error + 1e-12 * c.R_n_quadrature;
    c.R_n_within_bound = c.R_n_estimate <= c.bound_value + 3.0 * c.R_n_std_error;
    rep.per_n.push_back(c);
  }
  return rep;
}

/// Witness built for the toy model: eps_n = n^{-gamma/2} (so sup eps_n = 1),
/// W~_j = [w*_j - r eps_n^2, w*_j + r eps_n^2], beta~ = alpha, C1 = r k, C2 = 0,
/// and C3 the largest -sum ln alpha_j(W~_j) / (n eps_n^2) over every integer n
/// in [n_min, n_max].
inline RateWitness corollary_rate(const ToyModel& model, double gamma, const ProductDistribution& prior,
                                  long n_min = 1, long n_max = 100000) {
  model.validate();
  require(gamma > 0.0 && gamma < 1.0, ErrorKind::InvalidParameter, "gamma must lie in (0, 1)");
  require(n_min >= 1 && n_max >= n_min, ErrorKind::InvalidParameter, "need 1 <= n_min <= n_max");
  detail::check_product(prior, model.dim(), "prior");
  for (std::size_t j = 0; j < model.dim(); ++j)
    require(prior[j].density(model.w_star[j]) > 0.0, ErrorKind::HypothesisViolation,
            "prior density vanishes at w*_" + std::to_string(j));

  RateWitness w;
  w.gamma = gamma;
  w.eps = [gamma](long n) { return std::pow(static_cast<double>(n), -gamma / 2.0); };
  const auto w_star = model.w_star;
  const double r = model.radius;
  w.sets = [w_star, r, gamma](long n) {
    const double half = r * std::pow(static_cast<double>(n), -gamma);
    std::vector<Interval> out;
    for (double c : w_star) out.push_back({c - half, c + half});
    return out;
  };
  w.alpha = prior;
  w.beta_tilde = prior;
  w.C1 = r * model.lipschitz;
  w.C2 = 0.0;

  auto ratio = [&](long n) {
    double t = 0.0;
    const auto sets = w.sets(n);
    for (std::size_t j = 0; j < sets.size(); ++j) t -= std::log(prior[j].mass(sets[j]));
    return t / std::pow(static_cast<double>(n), 1.0 - gamma);
  };
  double c3 = 0.0;
  if (n_max - n_min <= 2'000'000) {
    for (long n = n_min; n <= n_max; ++n) c3 = std::max(c3, ratio(n));
  } else {
    const double l0 = std::log(static_cast<double>(n_min)), l1 = std::log(static_cast<double>(n_max));
    for (int k = 0; k <= 200000; ++k) {
      const long n = std::clamp(std::lround(std::exp(l0 + (l1 - l0) * k / 200000.0)), n_min, n_max);
      c3 = std::max(c3, ratio(n));
    }
  }
  w.C3 = c3;
  return w;
}

}  // namespace penprior
