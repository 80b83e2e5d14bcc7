#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cfglab/diffusion.hpp"
#include "cfglab/world.hpp"

namespace cfglab {

struct FrechetResult {
  double distance = 0.0;
  bool regularized = false;  // a rank-deficient covariance needed the 1e-6 I bump
};

// Gaussian fit of a sample set (mean and unbiased covariance), reusable when
// one side of the distance stays fixed across many calls.
struct GaussianMoments {
  std::vector<double> mean;
  std::vector<std::vector<double>> cov;
};

// needs at least d+1 samples so the unbiased covariance is defined
GaussianMoments fit_gaussian_moments(const std::vector<std::vector<double>>& samples);

// Squared 2-Wasserstein distance between Gaussians fit by moments:
// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa^{1/2} Sb Sa^{1/2})^{1/2}).
// Covariances are the unbiased sample estimates; needs at least d+1 samples per side.
FrechetResult frechet_gaussian_moments(const GaussianMoments& a, const GaussianMoments& b);
FrechetResult frechet_gaussian_checked(const std::vector<std::vector<double>>& a,
                                       const std::vector<std::vector<double>>& b);
double frechet_gaussian(const std::vector<std::vector<double>>& a,
                        const std::vector<std::vector<double>>& b);

// Mean Bayes posterior of the target class over clean samples; in [0, 1].
double alignment_metric(const std::vector<std::vector<double>>& samples, const Condition& cond,
                        const MixtureWorld& world);
// Mean log posterior of the target class (same samples, log scale).
double mean_log_posterior(const std::vector<std::vector<double>>& samples, const Condition& cond,
                          const MixtureWorld& world);

struct BootstrapCI {
  double mean = 0.0;
  double lo = 0.0;   // 2.5th percentile
  double hi = 0.0;   // 97.5th percentile
};

// Percentile bootstrap for the mean of `values`; deterministic in `seed`.
BootstrapCI bootstrap_mean_ci(const std::vector<double>& values, int resamples,
                              std::uint64_t seed);

// A judge score for one clean sample under its condition.
using JudgeFn = std::function<double(const std::vector<double>& x, const Condition& cond)>;

struct WinRateResult {
  double rate = 0.0;
  BootstrapCI ci;
};

// Paired side-by-side judging: a wins when the judge scores it strictly higher
// (ties within 1e-9 count half). Inputs are paired by index.
WinRateResult win_rate(const std::vector<std::vector<double>>& samples_a,
                       const std::vector<std::vector<double>>& samples_b,
                       const JudgeFn& judge, const std::vector<Condition>& conds,
                       int resamples = 2000, std::uint64_t seed = 17);

}  // namespace cfglab
