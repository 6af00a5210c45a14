#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <optional>
#include <vector>

#include <fftw3.h>

#include "penprior/error.hpp"
#include "penprior/numeric.hpp"

namespace penprior {

/// Uniform, endpoint-exclusive samples of a real function on [lo, hi).
struct GridFunction {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> values;

  std::size_t n_points() const { return values.size(); }
  double spacing() const { return (hi - lo) / static_cast<double>(values.size()); }
  double x(std::size_t i) const { return lo + static_cast<double>(i) * spacing(); }
  /// Largest angular frequency resolved by the grid.
  double nyquist() const { return kPi / spacing(); }
  double last_x() const { return x(values.size() - 1); }

  void validate() const {
    require(hi > lo, ErrorKind::Configuration, "grid requires hi > lo");
    require(values.size() >= 8 && is_power_of_two(values.size()), ErrorKind::Configuration,
            "grid size must be a power of two >= 8");
    for (double v : values)
      require(std::isfinite(v), ErrorKind::InvalidParameter, "grid values must be finite");
  }

  template <class F>
  static GridFunction sample(double lo, double hi, std::size_t n, F&& f) {
    GridFunction g{lo, hi, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) g.values[i] = f(g.x(i));
    return g;
  }

  /// Four-point Lagrange (cubic) interpolation, linear in the outermost cells;
  /// empty outside [x(0), x(n-1)].
  std::optional<double> interpolate(double t) const {
    const double h = spacing();
    const double u = (t - lo) / h;
    const double last = static_cast<double>(values.size() - 1);
    if (!(u >= -1e-12 && u <= last + 1e-12)) return std::nullopt;
    const double uc = std::clamp(u, 0.0, last);
    auto i = static_cast<std::size_t>(std::floor(uc));
    if (i >= values.size() - 1) return values.back();
    const double f = uc - static_cast<double>(i);
    if (i == 0 || i + 2 >= values.size()) return values[i] + f * (values[i + 1] - values[i]);
    const double ym = values[i - 1], y0 = values[i], y1 = values[i + 1], y2 = values[i + 2];
    return -f * (f - 1.0) * (f - 2.0) / 6.0 * ym + (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0 * y0 -
           (f + 1.0) * f * (f - 2.0) / 2.0 * y1 + (f + 1.0) * f * (f - 1.0) / 6.0 * y2;
  }
};

/// Unnormalized DFT coefficients of a GridFunction plus the grid geometry.
struct Spectrum {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::complex<double>> coeffs;

  std::size_t size() const { return coeffs.size(); }
  double spacing() const { return (hi - lo) / static_cast<double>(coeffs.size()); }
  /// Angular frequency of bin k; the Nyquist bin is reported as +pi/h.
  double frequency(std::size_t k) const {
    const auto n = static_cast<long long>(coeffs.size());
    long long kk = static_cast<long long>(k);
    if (kk > n / 2) kk -= n;
    return 2.0 * kPi * static_cast<double>(kk) / (static_cast<double>(n) * spacing());
  }
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

inline void run_dft(std::vector<std::complex<double>>& in, std::vector<std::complex<double>>& out,
                    int sign) {
  out.assign(in.size(), {});
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_1d(static_cast<int>(in.size()), reinterpret_cast<fftw_complex*>(in.data()),
                            reinterpret_cast<fftw_complex*>(out.data()), sign, FFTW_ESTIMATE);
  }
  require(plan != nullptr, ErrorKind::NumericalFailure, "FFTW planning failed");
  fftw_execute(plan);
  std::lock_guard lock(fftw_planner_mutex());
  fftw_destroy_plan(plan);
}

}  // namespace detail

inline Spectrum dft_forward(const GridFunction& g) {
  g.validate();
  std::vector<std::complex<double>> in(g.values.begin(), g.values.end());
  Spectrum s{g.lo, g.hi, {}};
  detail::run_dft(in, s.coeffs, FFTW_FORWARD);
  return s;
}

/// Complex inverse DFT, normalized so that inverse(forward(g)) == g.
inline std::vector<std::complex<double>> dft_inverse_complex(const Spectrum& s) {
  std::vector<std::complex<double>> in = s.coeffs;
  std::vector<std::complex<double>> out;
  detail::run_dft(in, out, FFTW_BACKWARD);
  const double inv_n = 1.0 / static_cast<double>(s.coeffs.size());
  for (auto& v : out) v *= inv_n;
  return out;
}

/// Real inverse DFT. The imaginary residue must stay below imag_tol relative to
/// max(1, max|Re|); larger residue signals a non-Hermitian spectrum.
inline GridFunction dft_inverse(const Spectrum& s, double imag_tol = 1e-10) {
  auto out = dft_inverse_complex(s);
  GridFunction g{s.lo, s.hi, std::vector<double>(out.size())};
  double max_re = 1.0;
  double max_im = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    g.values[i] = out[i].real();
    max_re = std::max(max_re, std::abs(out[i].real()));
    max_im = std::max(max_im, std::abs(out[i].imag()));
  }
  require(max_im <= imag_tol * max_re, ErrorKind::NumericalFailure,
          "inverse DFT left an imaginary residue of " + std::to_string(max_im));
  return g;
}

}  // namespace penprior
