#include "cfglab/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace cfglab {

namespace {
void check_same_size(const std::vector<double>& a, const std::vector<double>& b,
                     const char* where) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(where) + ": dimension mismatch");
  }
}
}  // namespace

int Condition::class_label() const {
  if (!label_.has_value()) {
    throw std::logic_error("Condition: unconditional branch has no class label");
  }
  return *label_;
}

std::vector<double> forward_noise(const std::vector<double>& x0, double alpha_bar,
                                  const std::vector<double>& noise) {
  check_same_size(x0, noise, "forward_noise");
  if (!(alpha_bar >= 0.0) || alpha_bar > 1.0) {
    throw std::invalid_argument("forward_noise: alpha_bar must lie in [0, 1]");
  }
  const double a = std::sqrt(alpha_bar);
  const double b = std::sqrt(1.0 - alpha_bar);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * noise[i];
  return out;
}

std::vector<double> forward_noise(const std::vector<double>& x0, int t,
                                  const std::vector<double>& noise, const NoiseSchedule& sched) {
  return forward_noise(x0, sched.alpha_bar(t), noise);
}

std::vector<double> predict_x0(const std::vector<double>& xt, const std::vector<double>& eps_hat,
                               double alpha_bar) {
  check_same_size(xt, eps_hat, "predict_x0");
  if (!(alpha_bar > 0.0) || alpha_bar > 1.0) {
    throw std::invalid_argument("predict_x0: singular timestep, alpha_bar must lie in (0, 1]");
  }
  const double inv = 1.0 / std::sqrt(alpha_bar);
  const double b = std::sqrt(1.0 - alpha_bar);
  std::vector<double> out(xt.size());
  for (std::size_t i = 0; i < xt.size(); ++i) out[i] = inv * (xt[i] - b * eps_hat[i]);
  return out;
}

std::vector<double> predict_x0(const std::vector<double>& xt, const std::vector<double>& eps_hat,
                               int t, const NoiseSchedule& sched) {
  return predict_x0(xt, eps_hat, sched.alpha_bar(t));
}

std::vector<double> cfg_combine(const std::vector<double>& eps_uncond,
                                const std::vector<double>& eps_cond, double s) {
  check_same_size(eps_uncond, eps_cond, "cfg_combine");
  std::vector<double> out(eps_uncond.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = eps_uncond[i] + s * (eps_cond[i] - eps_uncond[i]);
  }
  return out;
}

LatentState ddpm_step(const LatentState& state, const std::vector<double>& eps_guided,
                      const NoiseSchedule& sched, const std::vector<double>& noise) {
  const int t = state.t;
  if (t < 1 || t > sched.steps()) {
    throw std::invalid_argument("ddpm_step: cannot step, state.t must lie in [1, T]");
  }
  check_same_size(state.x, eps_guided, "ddpm_step");
  check_same_size(state.x, noise, "ddpm_step");

  const double ab_t = sched.alpha_bar(t);

  // the final step is the posterior mean with alpha_bar(0) = 1, which is x0_hat itself
  if (t == 1) {
    return LatentState{predict_x0(state.x, eps_guided, ab_t), 0};
  }

  const double a_t = sched.step_alpha(t);
  const double beta_t = 1.0 - a_t;

  // posterior mean in the eps parameterization
  const double inv_sqrt_a = 1.0 / std::sqrt(a_t);
  const double eps_coef = beta_t / std::sqrt(1.0 - ab_t);
  const double sigma = std::sqrt(sched.posterior_variance(t));

  std::vector<double> out(state.x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = inv_sqrt_a * (state.x[i] - eps_coef * eps_guided[i]) + sigma * noise[i];
  }
  return LatentState{std::move(out), t - 1};
}

LatentState ddim_step(const LatentState& state, const std::vector<double>& eps_guided,
                      const NoiseSchedule& sched) {
  const int t = state.t;
  if (t < 1 || t > sched.steps()) {
    throw std::invalid_argument("ddim_step: cannot step, state.t must lie in [1, T]");
  }
  check_same_size(state.x, eps_guided, "ddim_step");

  const std::vector<double> x0 = predict_x0(state.x, eps_guided, sched.alpha_bar(t));
  const double ab_prev = sched.alpha_bar(t - 1);
  const double a = std::sqrt(ab_prev);
  const double b = std::sqrt(1.0 - ab_prev);
  std::vector<double> out(state.x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps_guided[i];
  return LatentState{std::move(out), t - 1};
}

}  // namespace cfglab
