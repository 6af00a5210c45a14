// Derive the prior behind a penalty, check it, and plan per-layer factors.
#include <cmath>
#include <cstdio>

#include "penprior/penprior.hpp"

using namespace penprior;

int main() {
  // MAP view: an L1 penalty is a Laplace prior.
  const auto laplace = derive_prior_dirac(PenaltySpec::l1(4.0));
  const auto kl = verify_correspondence(PenaltySpec::l1(4.0), PosteriorFamily::dirac(), laplace,
                                        mu_line(-3.0, 3.0, 21), {});
  std::printf("L1(4) -> %s prior, max residual %.2e\n", std::string(to_string(laplace.form)).c_str(),
              kl.max_residual);

  // Gaussian posterior with variance 0.5: a quartic penalty needs a polynomial log-prior.
  const auto post = PosteriorFamily::gaussian_fixed(0.5);
  const auto quartic = PenaltySpec::even_polynomial({0.0, 0.4, 0.1});
  const auto log_prior = derive_prior_symbolic(quartic, post);
  std::printf("quartic log-prior:");
  for (std::size_t k = 0; k < log_prior.poly.coeffs.size(); ++k)
    if (std::abs(log_prior.poly.coeffs[k]) > 1e-12) std::printf(" %+.4f t^%zu", log_prior.poly.coeffs[k], k);
  std::printf("\n");

  // Same penalty through the Fourier engine; compare at the origin.
  const auto grid = derive_prior_grid(quartic, post);
  const double origin[] = {0.0};
  std::printf("grid engine at 0: %.6f, symbolic: %.6f\n", grid.interpolate(0.0).value(), log_prior(origin));

  // Per-layer group-Lasso factors for a 784-300-10 MLP.
  const ArchitectureSpec arch{{{1, 300, 784}, {2, 10, 300}}, 60000, 100};
  const auto p = plan(arch, PlanPenalty::GroupLasso, Scheme::Bayesian);
  std::printf("%s", to_csv(p).c_str());
  return 0;
}
