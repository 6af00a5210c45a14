#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "penprior/prior_engine.hpp"

using namespace penprior;

namespace {

constexpr double kTwoPiE = 2.0 * kPi * kE;

// Closed form A for r = a + b mu^2 under N(mu, s2): -1/2 ln(2 pi e s2) - a + s2 b - b theta^2.
double quadratic_prior_log(double a, double b, double s2, double theta) {
  return -0.5 * std::log(kTwoPiE * s2) - a + s2 * b - b * theta * theta;
}

// Penalty family with a(s2) = s2 b0 - a0 - 1/2 ln(2 pi e s2), b(s2) = b0.
PenaltySpec rigid_family(double a0, double b0, double extra_s2_squared = 0.0) {
  NuDependence dep;
  dep.power = {{-a0 - 0.5 * std::log(kTwoPiE), b0, extra_s2_squared}, {b0}};
  dep.log = {-0.5};
  return PenaltySpec::nu_family(dep);
}

// Direct Riemann-sum convolution (Q * N(0, s2))(mu) over the grid; no FFT.
double direct_convolution(const GridFunction& q, double s2, double mu) {
  const double h = q.spacing();
  double acc = 0.0;
  for (std::size_t i = 0; i < q.n_points(); ++i) {
    const double d = mu - q.x(i);
    acc += q.values[i] * std::exp(-d * d / (2.0 * s2));
  }
  return acc * h / std::sqrt(2.0 * kPi * s2);
}

}  // namespace

TEST(Entropy, GaussianAndDiracConventions) {
  EXPECT_NEAR(entropy(PosteriorFamily::gaussian_fixed(1.0 / kTwoPiE)), 0.0, 1e-15);
  EXPECT_NEAR(entropy(PosteriorFamily::gaussian_fixed(1.0)), 1.4189385332046727, 1e-12);
  EXPECT_NEAR(entropy(PosteriorFamily::dirac(3)), 3.0 * std::log(0x1p-52), 1e-12);
  const double nu[] = {1.0, 2.0};
  EXPECT_NEAR(entropy(PosteriorFamily::gaussian_free(2), nu), 0.5 * std::log(kTwoPiE) + 0.5 * std::log(2 * kTwoPiE),
              1e-12);
  auto bad = PosteriorFamily::gaussian_fixed(std::nan(""));
  EXPECT_THROW(entropy(bad), Error);
}

TEST(Dft, RoundtripOnRandomGrid) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 3.0);
  for (std::size_t size : {8u, 64u, 1024u}) {
    GridFunction g{-2.0, 5.0, std::vector<double>(size)};
    for (double& v : g.values) v = n(rng);
    auto back = dft_inverse(dft_forward(g));
    for (std::size_t i = 0; i < size; ++i) EXPECT_NEAR(back.values[i], g.values[i], 1e-10);
  }
}

TEST(Symbolic, QuadraticMatchesClosedForm) {
  for (double s2 : {0.25, 1.0, 4.0}) {
    const double lam = 1.7;
    auto a = derive_prior_symbolic(PenaltySpec::l2(lam), PosteriorFamily::gaussian_fixed(s2));
    for (double t : {-3.0, -0.5, 0.0, 1.0, 2.5}) {
      const double theta[] = {t};
      EXPECT_NEAR(a(theta), quadratic_prior_log(0.0, lam, s2, t), 1e-12);
    }
  }
}

TEST(Symbolic, RigidFamilyIsNuIndependent) {
  const double a0 = 0.3, b0 = 0.8;
  for (double s2 : {0.25, 1.0, 4.0}) {
    const double nu[] = {s2};
    auto a = derive_prior_symbolic(rigid_family(a0, b0), PosteriorFamily::gaussian_free(), nu);
    for (double t : {-2.0, 0.0, 1.5}) {
      const double theta[] = {t};
      EXPECT_NEAR(a(theta), a0 - b0 * t * t, 1e-12);
    }
  }
}

TEST(Symbolic, QuarticReproducesPenaltyUnderQuadrature) {
  const double lam = 0.6, s2 = 0.7;
  const auto post = PosteriorFamily::gaussian_fixed(s2);
  auto a = derive_prior_symbolic(PenaltySpec::even_polynomial({0.0, 0.0, 1.0}, lam), post);
  const double ent = entropy(post);
  const auto gh = gauss_hermite_rule(64);
  for (double mu = -3.0; mu <= 3.0; mu += 0.25) {
    const double expected_a = gh.expectation(mu, s2, [&](double t) {
      const double th[] = {t};
      return a(th);
    });
    EXPECT_NEAR(-ent - expected_a, lam * std::pow(mu, 4), 1e-8) << "mu = " << mu;
  }
}

TEST(Symbolic, OcticReproducesPenaltyUnderQuadrature) {
  const double s2 = 1.3;
  const auto post = PosteriorFamily::gaussian_fixed(s2);
  const std::vector<double> c = {0.5, -0.2, 0.1, 0.03, 0.002};
  auto a = derive_prior_symbolic(PenaltySpec::even_polynomial(c), post);
  const auto gh = gauss_hermite_rule(64);
  for (double mu = -2.0; mu <= 2.0; mu += 0.5) {
    const double eq = gh.expectation(mu, s2, [&](double t) { return a.poly(t); });
    double r = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) r += c[k] * std::pow(mu, 2 * k);
    EXPECT_NEAR(-eq, r, 1e-9);
  }
}

TEST(Symbolic, RejectsUnsupportedInputs) {
  const double odd[] = {0.0, 1.0, 1.0};
  try {
    PenaltySpec::from_monomials(odd);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedPenalty);
  }
  try {
    derive_prior_symbolic(PenaltySpec::l1(1.0), PosteriorFamily::gaussian_fixed(1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedPenalty);
  }
  try {
    derive_prior_symbolic(PenaltySpec::even_polynomial({0, 0, 0, 0, 0, 1}), PosteriorFamily::gaussian_fixed(1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Configuration);
  }
}

TEST(Dirac, NamedFamilies) {
  auto g = derive_prior_dirac(PenaltySpec::l2(1.0));
  EXPECT_EQ(g.form, PriorForm::Gaussian);
  EXPECT_DOUBLE_EQ(g.mean, 0.0);
  EXPECT_DOUBLE_EQ(g.var, 0.5);

  auto l = derive_prior_dirac(PenaltySpec::l1(2.0));
  EXPECT_EQ(l.form, PriorForm::Laplace);
  for (double t : {-1.0, 0.0, 0.3}) EXPECT_NEAR(l.density_1d(t), std::exp(-2.0 * std::abs(t)), 1e-15);

  auto e = derive_prior_dirac(PenaltySpec::group_lasso(1.5, 3));
  EXPECT_EQ(e.form, PriorForm::ExpNorm);
  EXPECT_EQ(e.dim, 3);
  // lambda^P / (S_{P-1} Gamma(P)) with S_2 = 4 pi, Gamma(3) = 2.
  const double origin[] = {0.0, 0.0, 0.0};
  EXPECT_NEAR(e.density(origin), std::pow(1.5, 3) / (4.0 * kPi * 2.0), 1e-14);
}

TEST(Dirac, GridPenaltyMatchesGaussian) {
  auto r = GridFunction::sample(-10.0, 10.0, 2048, [](double t) { return t * t; });
  auto p = derive_prior_dirac(PenaltySpec::grid_sampled(r));
  EXPECT_EQ(p.form, PriorForm::Grid);
  for (std::size_t i = 0; i < r.n_points(); i += 7) {
    const double t = r.x(i);
    EXPECT_NEAR(p.density_1d(t), std::exp(-t * t) / std::sqrt(kPi), 1e-6);
  }
}

TEST(Dirac, PolynomialPenaltyNormalizes) {
  auto p = derive_prior_dirac(PenaltySpec::even_polynomial({0.4, 0.0, 1.0}));
  EXPECT_EQ(p.form, PriorForm::LogPoly);
  auto mass = integrate_real_line([&](double t) { return p.density_1d(t); });
  EXPECT_NEAR(mass.value, 1.0, 1e-9);
  // A = -r carries the constant, so kappa includes exp(-0.4).
  auto raw = integrate_real_line([](double t) { return std::exp(-std::pow(t, 4)); });
  EXPECT_NEAR(p.log_kappa, -0.4 + std::log(raw.value), 1e-9);
}

TEST(Normalize, ClosedFormAndFailures) {
  LogDensityPoly a{Polynomial{{0.0, 0.0, -1.0}}, 0.0, 1};
  auto p = normalize_prior(a);
  EXPECT_EQ(p.form, PriorForm::Gaussian);
  EXPECT_NEAR(p.var, 0.5, 1e-15);
  EXPECT_NEAR(p.kappa, std::sqrt(kPi), 1e-14);

  LogDensityPoly up{Polynomial{{0.0, 0.0, 1.0}}, 0.0, 1};
  try {
    normalize_prior(up);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonNormalizablePrior);
  }

  auto flat = GridFunction::sample(-5.0, 5.0, 256, [](double) { return 0.0; });
  EXPECT_THROW(normalize_prior(flat), Error);
}

TEST(Normalize, ShiftedGaussianShape) {
  // A = 2 + 3 theta - theta^2 -> N(1.5, 0.5), kappa = exp(2 + 9/4) sqrt(pi).
  LogDensityPoly a{Polynomial{{2.0, 3.0, -1.0}}, -0.7, 1};
  auto p = normalize_prior(a);
  EXPECT_NEAR(p.mean, 1.5, 1e-14);
  EXPECT_NEAR(p.var, 0.5, 1e-14);
  EXPECT_NEAR(p.log_kappa, -0.7 + 2.0 + 2.25 + 0.5 * std::log(kPi), 1e-13);
}

TEST(Grid, QuadraticAgreesWithSymbolic) {
  const double lam = 1.3, s2 = 0.25;
  auto r = GridFunction::sample(-20.0, 20.0, 4096, [&](double t) { return lam * t * t; });
  const auto post = PosteriorFamily::gaussian_fixed(s2);
  auto grid_a = derive_prior_grid(r, post, 4.0);
  auto sym = derive_prior_symbolic(PenaltySpec::l2(lam), post);
  for (std::size_t i = 0; i < r.n_points(); ++i) {
    const double t = r.x(i);
    if (std::abs(t) > 5.0) continue;
    const double th[] = {t};
    ASSERT_NEAR(grid_a.values[i], sym(th), 1e-5) << "theta = " << t;
  }
}

TEST(Grid, ZeroPenaltyGivesConstant) {
  const double s2 = 0.8;
  auto r = GridFunction::sample(-10.0, 10.0, 512, [](double) { return 0.0; });
  auto a = derive_prior_grid(r, PosteriorFamily::gaussian_fixed(s2), 2.0);
  for (double v : a.values) EXPECT_NEAR(v, -0.5 * std::log(kTwoPiE * s2), 1e-12);
}

TEST(Grid, ConvolutionRoundtrip) {
  const double s2 = 1.0;
  const auto post = PosteriorFamily::gaussian_fixed(s2);
  for (const auto& pen : {PenaltySpec::l2(2.0), PenaltySpec::even_polynomial({0.1, 0.5, 0.05})}) {
    auto a = derive_prior_grid(pen, post);
    GridFunction q = a;
    const double ent = entropy(post);
    for (double& v : q.values) v = -ent - v;
    const double quarter = 0.25 * (a.hi - a.lo);
    for (double mu = -quarter; mu <= quarter; mu += quarter / 10.0) {
      EXPECT_NEAR(direct_convolution(q, s2, mu), pen.evaluate_scalar(mu), 1e-4) << "mu = " << mu;
    }
  }
}

TEST(Grid, AgreementPropertyAcrossDegreesAndVariances) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (double s2 : {0.25, 1.0, 4.0}) {
    for (int trial = 0; trial < 3; ++trial) {
      std::vector<double> c = {u(rng) - 0.5, u(rng)};
      if (trial > 0) c.push_back(0.1 * u(rng));
      auto pen = PenaltySpec::even_polynomial(c);
      const auto post = PosteriorFamily::gaussian_fixed(s2);
      auto ga = derive_prior_grid(pen, post);
      auto sa = derive_prior_symbolic(pen, post);
      const double quarter = 0.25 * (ga.hi - ga.lo);
      double worst = 0.0;
      for (std::size_t i = 0; i < ga.n_points(); ++i) {
        const double t = ga.x(i);
        if (std::abs(t) > quarter) continue;
        const double th[] = {t};
        worst = std::max(worst, std::abs(ga.values[i] - sa(th)));
      }
      EXPECT_LE(worst, 1e-4) << "s2 = " << s2 << " trial " << trial;
    }
  }
}

TEST(Grid, RawTransformPathOnGaussianBump) {
  // r = -c exp(-x^2 / (2 s)) deconvolves to -c sqrt(s / (s - s2)) exp(-x^2 / (2 (s - s2))).
  const double c = 0.7, s = 1.0, s2 = 0.25;
  auto r = GridFunction::sample(-20.0, 20.0, 2048, [&](double x) { return -c * std::exp(-x * x / (2 * s)); });
  DeconvolutionOptions opts;
  opts.detrend_degree = -1;
  auto q = deconvolve_gaussian(r, s2, 8.0, opts);
  for (std::size_t i = 0; i < q.n_points(); ++i) {
    const double x = q.x(i);
    const double expected = -c * std::sqrt(s / (s - s2)) * std::exp(-x * x / (2 * (s - s2)));
    ASSERT_NEAR(q.values[i], expected, 1e-9);
  }
}

TEST(Grid, RawTransformPathOnHarmonic) {
  const double len = 16.0, s2 = 0.5;
  const double omega = 2.0 * kPi * 3.0 / len;
  auto r = GridFunction::sample(-8.0, 8.0, 256, [&](double x) { return std::cos(omega * x); });
  DeconvolutionOptions opts;
  opts.detrend_degree = -1;
  auto q = deconvolve_gaussian(r, s2, 2.0 * omega, opts);
  for (std::size_t i = 0; i < q.n_points(); ++i)
    EXPECT_NEAR(q.values[i], std::exp(0.5 * s2 * omega * omega) * std::cos(omega * q.x(i)), 1e-11);
}

TEST(Grid, ConfigurationAndConditioningErrors) {
  auto r = GridFunction::sample(-20.0, 20.0, 4096, [](double t) { return t * t; });
  try {
    derive_prior_grid(r, PosteriorFamily::gaussian_fixed(1.0), r.nyquist() * 1.01);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Configuration);
  }
  try {
    derive_prior_grid(r, PosteriorFamily::gaussian_fixed(4.0), 30.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IllConditionedDeconvolution);
    EXPECT_NE(std::string(e.what()).find("frequency"), std::string::npos);
  }
  DeconvolutionOptions opts;
  opts.tikhonov = true;
  EXPECT_NO_THROW(derive_prior_grid(r, PosteriorFamily::gaussian_fixed(4.0), 30.0, {}, opts));
}

TEST(Grid, NormalizedGridPriorIntegratesToOne) {
  const auto post = PosteriorFamily::gaussian_fixed(0.25);
  auto a = derive_prior_grid(PenaltySpec::l2(1.0), post);
  auto p = normalize_prior(a);
  auto mass = integrate_interval([&](double t) { return p.density_1d(t); }, a.lo, a.last_x(), 1e-10);
  EXPECT_NEAR(mass.value, 1.0, 1e-6);
}

TEST(ConditionA, RigidFamilyAccepted) {
  auto rep = check_condition_A(rigid_family(0.2, 0.5), PosteriorFamily::gaussian_free(), {{0.25}, {1.0}, {4.0}});
  EXPECT_TRUE(rep.independent_of_nu);
  EXPECT_TRUE(rep.integrable);
  EXPECT_TRUE(rep.holds());
  EXPECT_LE(rep.max_deviation, 1e-9);
  EXPECT_EQ(rep.engine, "symbolic");
}

TEST(ConditionA, PerturbedFamilyRejected) {
  auto rep =
      check_condition_A(rigid_family(0.2, 0.5, 0.01), PosteriorFamily::gaussian_free(), {{0.25}, {1.0}, {4.0}});
  EXPECT_FALSE(rep.independent_of_nu);
  EXPECT_NEAR(rep.max_deviation, 0.01 * (16.0 - 0.0625), 1e-9);
  EXPECT_LE(rep.shape_deviation, 1e-9);
}

TEST(ConditionA, ConstantCoefficientsRejected) {
  NuDependence dep;
  dep.power = {{0.0}, {1.0}};
  auto rep = check_condition_A(PenaltySpec::nu_family(dep), PosteriorFamily::gaussian_free(), {{0.25}, {1.0}});
  EXPECT_FALSE(rep.independent_of_nu);
  const double expected = std::abs(quadratic_prior_log(0, 1, 0.25, 0) - quadratic_prior_log(0, 1, 1.0, 0));
  EXPECT_NEAR(rep.max_deviation, expected, 1e-12);
}

TEST(ConditionA, SingleSampleIsVacuous) {
  auto rep = check_condition_A(PenaltySpec::l2(1.0), PosteriorFamily::gaussian_fixed(1.0), {});
  EXPECT_TRUE(rep.independent_of_nu);
  EXPECT_EQ(rep.max_deviation, 0.0);
  auto dirac = check_condition_A(PenaltySpec::l1(1.0), PosteriorFamily::dirac(), {});
  EXPECT_TRUE(dirac.holds());
}

TEST(ConditionA, FailureCarriesNu) {
  NuDependence dep;
  dep.power = {{0.0}, {1.0}};
  auto pen = PenaltySpec::nu_family(dep);
  try {
    check_condition_A(pen, PosteriorFamily::gaussian_free(), {{1.0}, {-2.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("nu = (-2)"), std::string::npos) << e.what();
  }
}
