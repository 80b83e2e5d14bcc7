#include "cfglab/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cfglab/rng.hpp"

namespace cfglab {

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

Eigen::VectorXd to_eigen_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd to_eigen_mat(const std::vector<std::vector<double>>& m) {
  const auto d = static_cast<Eigen::Index>(m.size());
  Eigen::MatrixXd out(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (static_cast<Eigen::Index>(m[static_cast<std::size_t>(i)].size()) != d) {
      throw std::invalid_argument("frechet_gaussian: covariance must be square");
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      out(i, j) = m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return out;
}

}  // namespace

GaussianMoments fit_gaussian_moments(const std::vector<std::vector<double>>& samples) {
  if (samples.empty()) throw std::invalid_argument("frechet_gaussian: empty sample set");
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto d = static_cast<Eigen::Index>(samples[0].size());
  if (samples.size() < samples[0].size() + 1) {
    throw std::invalid_argument("frechet_gaussian: need at least d+1 samples per set");
  }
  Eigen::MatrixXd data(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(samples[static_cast<std::size_t>(i)].size()) != d) {
      throw std::invalid_argument("frechet_gaussian: ragged sample set");
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      data(i, j) = samples[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  const Eigen::VectorXd mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);

  GaussianMoments m;
  m.mean.assign(mean.data(), mean.data() + d);
  m.cov.assign(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(d)));
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      m.cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = cov(i, j);
    }
  }
  return m;
}

FrechetResult frechet_gaussian_moments(const GaussianMoments& a, const GaussianMoments& b) {
  if (a.mean.size() != b.mean.size()) {
    throw std::invalid_argument("frechet_gaussian: dimension mismatch between sets");
  }
  const Eigen::VectorXd mean_a = to_eigen_vec(a.mean);
  const Eigen::VectorXd mean_b = to_eigen_vec(b.mean);

  FrechetResult out;
  Eigen::MatrixXd cov_a = to_eigen_mat(a.cov);
  Eigen::MatrixXd cov_b = to_eigen_mat(b.cov);
  auto lift_if_deficient = [&out](Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.eigenvalues().minCoeff() < 1e-12) {
      out.regularized = true;
      m += 1e-6 * Eigen::MatrixXd::Identity(m.rows(), m.cols());
    }
  };
  lift_if_deficient(cov_a);
  lift_if_deficient(cov_b);

  const Eigen::MatrixXd root_a = psd_sqrt(cov_a);
  const Eigen::MatrixXd sandwich = root_a * cov_b * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sandwich);
  const double tr_cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double mean_term = (mean_a - mean_b).squaredNorm();
  out.distance = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * tr_cross;
  // clamp the tiny negative residue the subtraction can leave on identical inputs
  if (out.distance < 0.0 && out.distance > -1e-9) out.distance = 0.0;
  return out;
}

FrechetResult frechet_gaussian_checked(const std::vector<std::vector<double>>& a,
                                       const std::vector<std::vector<double>>& b) {
  return frechet_gaussian_moments(fit_gaussian_moments(a), fit_gaussian_moments(b));
}

double frechet_gaussian(const std::vector<std::vector<double>>& a,
                        const std::vector<std::vector<double>>& b) {
  return frechet_gaussian_checked(a, b).distance;
}

double alignment_metric(const std::vector<std::vector<double>>& samples, const Condition& cond,
                        const MixtureWorld& world) {
  if (!cond.is_conditional()) {
    throw std::invalid_argument("alignment_metric: needs a class condition");
  }
  const int c = cond.class_label();
  double acc = 0.0;
  for (const auto& x : samples) acc += world.posterior_class_prob(x, c);
  return samples.empty() ? 0.0 : acc / static_cast<double>(samples.size());
}

double mean_log_posterior(const std::vector<std::vector<double>>& samples, const Condition& cond,
                          const MixtureWorld& world) {
  if (!cond.is_conditional()) {
    throw std::invalid_argument("mean_log_posterior: needs a class condition");
  }
  const int c = cond.class_label();
  double acc = 0.0;
  for (const auto& x : samples) acc += std::log(world.posterior_class_prob(x, c));
  return samples.empty() ? 0.0 : acc / static_cast<double>(samples.size());
}

BootstrapCI bootstrap_mean_ci(const std::vector<double>& values, int resamples,
                              std::uint64_t seed) {
  if (values.empty()) throw std::invalid_argument("bootstrap_mean_ci: empty input");
  if (resamples < 2) throw std::invalid_argument("bootstrap_mean_ci: need >= 2 resamples");

  BootstrapCI out;
  double acc = 0.0;
  for (double v : values) acc += v;
  out.mean = acc / static_cast<double>(values.size());

  Rng rng(seed);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  const std::size_t n = values.size();
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[rng.uniform_index(n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  // percentile indices for a central 95% interval
  const auto lo_idx = static_cast<std::size_t>(0.025 * (resamples - 1) + 0.5);
  const auto hi_idx = static_cast<std::size_t>(0.975 * (resamples - 1) + 0.5);
  out.lo = means[lo_idx];
  out.hi = means[hi_idx];
  return out;
}

WinRateResult win_rate(const std::vector<std::vector<double>>& samples_a,
                       const std::vector<std::vector<double>>& samples_b,
                       const JudgeFn& judge, const std::vector<Condition>& conds,
                       int resamples, std::uint64_t seed) {
  if (samples_a.size() != samples_b.size() || samples_a.size() != conds.size()) {
    throw std::invalid_argument("win_rate: inputs must be paired by index");
  }
  if (samples_a.empty()) throw std::invalid_argument("win_rate: empty input");

  std::vector<double> wins(samples_a.size());
  long balance = 0;  // wins minus losses; keeps the rate exactly antisymmetric
  for (std::size_t i = 0; i < samples_a.size(); ++i) {
    const double sa = judge(samples_a[i], conds[i]);
    const double sb = judge(samples_b[i], conds[i]);
    if (std::abs(sa - sb) <= 1e-9) {
      wins[i] = 0.5;
    } else if (sa > sb) {
      wins[i] = 1.0;
      ++balance;
    } else {
      wins[i] = 0.0;
      --balance;
    }
  }
  WinRateResult out;
  out.ci = bootstrap_mean_ci(wins, resamples, seed);
  out.rate = 0.5 + static_cast<double>(balance) / (2.0 * static_cast<double>(wins.size()));
  return out;
}

}  // namespace cfglab
