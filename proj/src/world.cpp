#include "cfglab/world.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cfglab {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
constexpr double kSumTol = 1e-12;

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

double log_sum_exp(const std::vector<double>& terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (double t : terms) m = std::max(m, t);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  return m + std::log(acc);
}

}  // namespace

MixtureWorld MixtureWorld::from_components(
    std::vector<std::vector<GaussianComponent>> per_class, std::vector<double> priors) {
  if (per_class.empty() || per_class.size() != priors.size()) {
    throw std::invalid_argument("MixtureWorld: need one component list and one prior per class");
  }
  if (per_class[0].empty() || per_class[0][0].mean.empty()) {
    throw std::invalid_argument("MixtureWorld: first class has no usable component");
  }

  MixtureWorld w;
  w.dim_ = static_cast<int>(per_class[0][0].mean.size());
  w.priors_ = priors;

  double prior_sum = 0.0;
  for (double p : priors) {
    if (!(p > 0.0)) throw std::invalid_argument("MixtureWorld: class priors must be positive");
    prior_sum += p;
  }
  if (std::abs(prior_sum - 1.0) > kSumTol) {
    throw std::invalid_argument("MixtureWorld: class priors must sum to 1");
  }

  w.class_offsets_.push_back(0);
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const auto& comps = per_class[c];
    if (comps.empty()) {
      throw std::invalid_argument("MixtureWorld: every class needs at least one component");
    }
    double weight_sum = 0.0;
    for (const auto& g : comps) {
      if (!(g.weight > 0.0)) {
        throw std::invalid_argument("MixtureWorld: component weights must be positive");
      }
      weight_sum += g.weight;
      if (static_cast<int>(g.mean.size()) != w.dim_) {
        throw std::invalid_argument("MixtureWorld: component mean dimension mismatch");
      }
      if (static_cast<int>(g.cov.size()) != w.dim_) {
        throw std::invalid_argument("MixtureWorld: covariance must be d x d");
      }
      Eigen::MatrixXd cov(w.dim_, w.dim_);
      for (int i = 0; i < w.dim_; ++i) {
        if (static_cast<int>(g.cov[static_cast<std::size_t>(i)].size()) != w.dim_) {
          throw std::invalid_argument("MixtureWorld: covariance must be d x d");
        }
        for (int j = 0; j < w.dim_; ++j) {
          cov(i, j) = g.cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
      }
      if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw std::invalid_argument("MixtureWorld: covariance must be symmetric");
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
      if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0) {
        throw std::invalid_argument("MixtureWorld: covariance must be positive definite");
      }
      Comp comp;
      comp.mean = to_eigen(g.mean);
      comp.basis = es.eigenvectors();
      comp.eig = es.eigenvalues();
      comp.sqrt_eig = comp.eig.cwiseSqrt();
      w.comps_.push_back(std::move(comp));
    }
    if (std::abs(weight_sum - 1.0) > kSumTol) {
      throw std::invalid_argument("MixtureWorld: component weights must sum to 1 per class");
    }
    for (const auto& g : comps) {
      w.class_log_w_.push_back(std::log(g.weight));
      w.marginal_log_w_.push_back(std::log(priors[c]) + std::log(g.weight));
    }
    w.class_offsets_.push_back(static_cast<int>(w.comps_.size()));
  }
  return w;
}

MixtureWorld MixtureWorld::preset(const std::string& name) {
  auto iso = [](double v) {
    return std::vector<std::vector<double>>{{v, 0.0}, {0.0, v}};
  };
  auto four_corner = [&](double m) {
    std::vector<std::vector<GaussianComponent>> per_class{
        {{0.5, {-m, -m}, iso(0.4)}, {0.5, {-m, +m}, iso(0.4)}},
        {{0.5, {+m, -m}, iso(0.4)}, {0.5, {+m, +m}, iso(0.4)}},
    };
    return from_components(std::move(per_class), {0.5, 0.5});
  };
  if (name == "default") return four_corner(2.0);
  if (name == "hard") return four_corner(0.8);
  throw std::invalid_argument("MixtureWorld: unknown preset '" + name + "'");
}

MixtureWorld MixtureWorld::standard_normal(int d) {
  if (d < 1) throw std::invalid_argument("MixtureWorld: dimension must be positive");
  GaussianComponent g;
  g.weight = 1.0;
  g.mean.assign(static_cast<std::size_t>(d), 0.0);
  g.cov.assign(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(d), 0.0));
  for (int i = 0; i < d; ++i) g.cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1.0;
  return from_components({{g}}, {1.0});
}

void MixtureWorld::check_class(int c) const {
  if (c < 0 || c >= num_classes()) {
    throw std::invalid_argument("MixtureWorld: class label out of range");
  }
}

int MixtureWorld::components_in(int c) const {
  check_class(c);
  return class_offsets_[static_cast<std::size_t>(c) + 1] - class_offsets_[static_cast<std::size_t>(c)];
}

double MixtureWorld::class_prior(int c) const {
  check_class(c);
  return priors_[static_cast<std::size_t>(c)];
}

std::vector<double> MixtureWorld::class_mean(int c) const {
  check_class(c);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim_);
  for (int k = class_offsets_[static_cast<std::size_t>(c)];
       k < class_offsets_[static_cast<std::size_t>(c) + 1]; ++k) {
    m += std::exp(class_log_w_[static_cast<std::size_t>(k)]) * comps_[static_cast<std::size_t>(k)].mean;
  }
  return to_std(m);
}

std::vector<std::vector<double>> MixtureWorld::component_means(int c) const {
  check_class(c);
  std::vector<std::vector<double>> out;
  for (int k = class_offsets_[static_cast<std::size_t>(c)];
       k < class_offsets_[static_cast<std::size_t>(c) + 1]; ++k) {
    out.push_back(to_std(comps_[static_cast<std::size_t>(k)].mean));
  }
  return out;
}

std::vector<double> MixtureWorld::sample_data(const Condition& cond, Rng& rng) const {
  int c;
  if (cond.is_conditional()) {
    c = cond.class_label();
    check_class(c);
  } else if (num_classes() == 1) {
    c = 0;
  } else {
    const double u = rng.uniform();
    double acc = 0.0;
    c = num_classes() - 1;
    for (int i = 0; i < num_classes(); ++i) {
      acc += priors_[static_cast<std::size_t>(i)];
      if (u < acc) {
        c = i;
        break;
      }
    }
  }

  const int lo = class_offsets_[static_cast<std::size_t>(c)];
  const int hi = class_offsets_[static_cast<std::size_t>(c) + 1];
  int k = lo;
  if (hi - lo > 1) {
    const double u = rng.uniform();
    double acc = 0.0;
    k = hi - 1;
    for (int i = lo; i < hi; ++i) {
      acc += std::exp(class_log_w_[static_cast<std::size_t>(i)]);
      if (u < acc) {
        k = i;
        break;
      }
    }
  }

  const Comp& comp = comps_[static_cast<std::size_t>(k)];
  const Eigen::VectorXd z = to_eigen(rng.normal_vec(static_cast<std::size_t>(dim_)));
  return to_std(comp.mean + comp.basis * comp.sqrt_eig.cwiseProduct(z));
}

double MixtureWorld::comp_log_density(const Comp& comp, const Eigen::VectorXd& x,
                                      double ab) const {
  // noised component: N(sqrt(ab) mean, basis diag(ab eig + 1 - ab) basis^T)
  const Eigen::VectorXd y = comp.basis.transpose() * (x - std::sqrt(ab) * comp.mean);
  double quad = 0.0, logdet = 0.0;
  for (int i = 0; i < dim_; ++i) {
    const double lam = ab * comp.eig[i] + (1.0 - ab);
    quad += y[i] * y[i] / lam;
    logdet += std::log(lam);
  }
  return -0.5 * (dim_ * kLog2Pi + logdet + quad);
}

double MixtureWorld::mixture_log_density(int lo, int hi, const std::vector<double>& lw,
                                         const Eigen::VectorXd& x, double ab) const {
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(hi - lo));
  for (int k = lo; k < hi; ++k) {
    terms.push_back(lw[static_cast<std::size_t>(k)] +
                    comp_log_density(comps_[static_cast<std::size_t>(k)], x, ab));
  }
  return log_sum_exp(terms);
}

Eigen::VectorXd MixtureWorld::mixture_eps(int lo, int hi, const std::vector<double>& lw,
                                          const Eigen::VectorXd& x, double ab) const {
  // grad log p = sum_k gamma_k * grad log N_k; eps = -sqrt(1-ab) * grad log p
  std::vector<double> logs(static_cast<std::size_t>(hi - lo));
  double m = -std::numeric_limits<double>::infinity();
  for (int k = lo; k < hi; ++k) {
    logs[static_cast<std::size_t>(k - lo)] =
        lw[static_cast<std::size_t>(k)] + comp_log_density(comps_[static_cast<std::size_t>(k)], x, ab);
    m = std::max(m, logs[static_cast<std::size_t>(k - lo)]);
  }
  double norm = 0.0;
  for (double l : logs) norm += std::exp(l - m);

  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim_);
  for (int k = lo; k < hi; ++k) {
    const Comp& comp = comps_[static_cast<std::size_t>(k)];
    const double gamma = std::exp(logs[static_cast<std::size_t>(k - lo)] - m) / norm;
    if (gamma == 0.0) continue;
    Eigen::VectorXd y = comp.basis.transpose() * (x - std::sqrt(ab) * comp.mean);
    for (int i = 0; i < dim_; ++i) y[i] /= ab * comp.eig[i] + (1.0 - ab);
    acc += gamma * (comp.basis * y);  // = gamma * S_k^{-1} (x - m_k)
  }
  return std::sqrt(1.0 - ab) * acc;
}

double MixtureWorld::cond_log_density(const Eigen::VectorXd& x, double ab,
                                      const Condition& cond) const {
  if (cond.is_conditional()) {
    const int c = cond.class_label();
    check_class(c);
    return mixture_log_density(class_offsets_[static_cast<std::size_t>(c)],
                               class_offsets_[static_cast<std::size_t>(c) + 1], class_log_w_, x,
                               ab);
  }
  return mixture_log_density(0, static_cast<int>(comps_.size()), marginal_log_w_, x, ab);
}

double MixtureWorld::log_density(const std::vector<double>& x, int t, const Condition& cond,
                                 const NoiseSchedule& sched) const {
  if (static_cast<int>(x.size()) != dim_) {
    throw std::invalid_argument("MixtureWorld: query dimension mismatch");
  }
  return cond_log_density(to_eigen(x), sched.alpha_bar(t), cond);
}

std::vector<double> MixtureWorld::exact_eps(const std::vector<double>& x, int t,
                                            const Condition& cond,
                                            const NoiseSchedule& sched) const {
  if (static_cast<int>(x.size()) != dim_) {
    throw std::invalid_argument("MixtureWorld: query dimension mismatch");
  }
  if (t < 1) throw std::invalid_argument("MixtureWorld: exact_eps needs t >= 1");
  const double ab = sched.alpha_bar(t);
  const Eigen::VectorXd xe = to_eigen(x);
  if (cond.is_conditional()) {
    const int c = cond.class_label();
    check_class(c);
    return to_std(mixture_eps(class_offsets_[static_cast<std::size_t>(c)],
                              class_offsets_[static_cast<std::size_t>(c) + 1], class_log_w_, xe,
                              ab));
  }
  return to_std(mixture_eps(0, static_cast<int>(comps_.size()), marginal_log_w_, xe, ab));
}

double MixtureWorld::posterior_at(const Eigen::VectorXd& x, double ab, int c) const {
  std::vector<double> class_logs(static_cast<std::size_t>(num_classes()));
  for (int i = 0; i < num_classes(); ++i) {
    class_logs[static_cast<std::size_t>(i)] =
        std::log(priors_[static_cast<std::size_t>(i)]) +
        mixture_log_density(class_offsets_[static_cast<std::size_t>(i)],
                            class_offsets_[static_cast<std::size_t>(i) + 1], class_log_w_, x, ab);
  }
  const double total = log_sum_exp(class_logs);
  return std::exp(class_logs[static_cast<std::size_t>(c)] - total);
}

double MixtureWorld::posterior_class_prob(const std::vector<double>& x, int t, int c,
                                          const NoiseSchedule& sched) const {
  if (static_cast<int>(x.size()) != dim_) {
    throw std::invalid_argument("MixtureWorld: query dimension mismatch");
  }
  check_class(c);
  return posterior_at(to_eigen(x), sched.alpha_bar(t), c);
}

double MixtureWorld::posterior_class_prob(const std::vector<double>& x, int c) const {
  if (static_cast<int>(x.size()) != dim_) {
    throw std::invalid_argument("MixtureWorld: query dimension mismatch");
  }
  check_class(c);
  return posterior_at(to_eigen(x), 1.0, c);
}

}  // namespace cfglab
