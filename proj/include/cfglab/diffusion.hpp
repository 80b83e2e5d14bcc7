#pragma once

#include <optional>
#include <vector>

#include "cfglab/rng.hpp"
#include "cfglab/schedule.hpp"

namespace cfglab {

// A latent vector tagged with its timestep. t = 0 is clean data, t = T pure noise.
struct LatentState {
  std::vector<double> x;
  int t = 0;
};

// Conditioning signal: either a class label or nothing (the unconditional branch).
class Condition {
 public:
  static Condition none() { return Condition(std::nullopt); }
  static Condition label(int k) { return Condition(k); }

  bool is_conditional() const { return label_.has_value(); }
  int class_label() const;

  bool operator==(const Condition& other) const { return label_ == other.label_; }

 private:
  explicit Condition(std::optional<int> k) : label_(k) {}
  std::optional<int> label_;
};

// x_t = sqrt(ab) * x0 + sqrt(1 - ab) * noise
std::vector<double> forward_noise(const std::vector<double>& x0, double alpha_bar,
                                  const std::vector<double>& noise);
std::vector<double> forward_noise(const std::vector<double>& x0, int t,
                                  const std::vector<double>& noise, const NoiseSchedule& sched);

// x0_hat = (x_t - sqrt(1 - ab) * eps_hat) / sqrt(ab); ab = 0 is singular
std::vector<double> predict_x0(const std::vector<double>& xt, const std::vector<double>& eps_hat,
                               double alpha_bar);
std::vector<double> predict_x0(const std::vector<double>& xt, const std::vector<double>& eps_hat,
                               int t, const NoiseSchedule& sched);

// eps_uncond + s * (eps_cond - eps_uncond)
std::vector<double> cfg_combine(const std::vector<double>& eps_uncond,
                                const std::vector<double>& eps_cond, double s);

// One ancestral step t -> t-1 with the small posterior variance; the t = 1 step
// is noiseless and lands exactly on predict_x0.
LatentState ddpm_step(const LatentState& state, const std::vector<double>& eps_guided,
                      const NoiseSchedule& sched, const std::vector<double>& noise);

// Deterministic step t -> t-1 (eta = 0): re-noise x0_hat to level t-1 along eps_guided.
LatentState ddim_step(const LatentState& state, const std::vector<double>& eps_guided,
                      const NoiseSchedule& sched);

}  // namespace cfglab
