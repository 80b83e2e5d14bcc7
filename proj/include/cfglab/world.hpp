#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "cfglab/diffusion.hpp"
#include "cfglab/rng.hpp"
#include "cfglab/schedule.hpp"

namespace cfglab {

// One mixture component in plain buffers, used for construction and config loading.
struct GaussianComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<std::vector<double>> cov;  // dense, symmetric positive-definite
};

// Class-conditional Gaussian mixture with closed-form noisy marginals. Densities
// under the forward process stay mixtures: component k at level ab becomes
// N(sqrt(ab) mu_k, ab Sigma_k + (1 - ab) I), so scores, eps-predictions and class
// posteriors are all exact. Plays the role of the denoising network.
class MixtureWorld {
 public:
  static MixtureWorld from_components(std::vector<std::vector<GaussianComponent>> per_class,
                                      std::vector<double> priors);
  // "default": two well-separated 2-component classes; "hard": same shape, strong overlap
  static MixtureWorld preset(const std::string& name);
  static MixtureWorld standard_normal(int d);

  int dim() const { return dim_; }
  int num_classes() const { return static_cast<int>(class_offsets_.size()) - 1; }
  int components_in(int c) const;
  double class_prior(int c) const;

  // exact first moment of class c's clean mixture
  std::vector<double> class_mean(int c) const;
  // means of the individual components of class c
  std::vector<std::vector<double>> component_means(int c) const;

  // one clean draw from the conditional (or, for the unconditional tag, marginal) law
  std::vector<double> sample_data(const Condition& cond, Rng& rng) const;

  // log p_t(x | cond) of the noised mixture; t = 0 is the clean density
  double log_density(const std::vector<double>& x, int t, const Condition& cond,
                     const NoiseSchedule& sched) const;

  // eps_hat(x, t | cond) = -sqrt(1 - ab_t) * grad_x log p_t(x | cond); t >= 1
  std::vector<double> exact_eps(const std::vector<double>& x, int t, const Condition& cond,
                                const NoiseSchedule& sched) const;

  // Bayes posterior of class c given the noised latent; sums to 1 over classes
  double posterior_class_prob(const std::vector<double>& x, int t, int c,
                              const NoiseSchedule& sched) const;
  // clean-latent posterior (t = 0 without needing a schedule)
  double posterior_class_prob(const std::vector<double>& x, int c) const;

 private:
  struct Comp {
    Eigen::VectorXd mean;
    Eigen::MatrixXd basis;   // eigenvectors Q of Sigma
    Eigen::VectorXd eig;     // eigenvalues of Sigma, all positive
    Eigen::VectorXd sqrt_eig;
  };

  MixtureWorld() = default;

  // log N(x; sqrt(ab) mean, ab Sigma + (1 - ab) I) via the cached eigenbasis
  double comp_log_density(const Comp& comp, const Eigen::VectorXd& x, double ab) const;
  // mixture over comps_[lo..hi) with absolute-indexed log weights lw
  double mixture_log_density(int lo, int hi, const std::vector<double>& lw,
                             const Eigen::VectorXd& x, double ab) const;
  Eigen::VectorXd mixture_eps(int lo, int hi, const std::vector<double>& lw,
                              const Eigen::VectorXd& x, double ab) const;
  double cond_log_density(const Eigen::VectorXd& x, double ab, const Condition& cond) const;
  double posterior_at(const Eigen::VectorXd& x, double ab, int c) const;
  void check_class(int c) const;

  int dim_ = 0;
  std::vector<Comp> comps_;            // all classes, flattened
  std::vector<int> class_offsets_;     // size C+1, comps_ of class c in [off[c], off[c+1])
  std::vector<double> class_log_w_;    // per comp: log weight within its class
  std::vector<double> marginal_log_w_; // per comp: log prior + log weight
  std::vector<double> priors_;
};

}  // namespace cfglab
