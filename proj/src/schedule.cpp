#include "cfglab/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace cfglab {

namespace {
constexpr double kTerminalCeiling = 1e-3;
constexpr double kPi = 3.14159265358979323846;
}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar)
    : alpha_bar_(std::move(alpha_bar)) {
  if (alpha_bar_.size() < 2) {
    throw std::invalid_argument("NoiseSchedule: need at least one step");
  }
  if (alpha_bar_.front() != 1.0) {
    throw std::invalid_argument("NoiseSchedule: alpha_bar(0) must be exactly 1");
  }
  for (std::size_t t = 0; t < alpha_bar_.size(); ++t) {
    const double a = alpha_bar_[t];
    if (!(a > 0.0) || a > 1.0 || !std::isfinite(a)) {
      throw std::invalid_argument("NoiseSchedule: alpha_bar must lie in (0, 1]");
    }
    if (t > 0 && !(a < alpha_bar_[t - 1])) {
      throw std::invalid_argument("NoiseSchedule: alpha_bar must be strictly decreasing");
    }
  }
  if (!(alpha_bar_.back() < kTerminalCeiling)) {
    throw std::invalid_argument("NoiseSchedule: alpha_bar(T) must be below 1e-3");
  }
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar) {
  return NoiseSchedule(std::move(alpha_bar));
}

NoiseSchedule NoiseSchedule::cosine(int steps) {
  if (steps < 2) throw std::invalid_argument("NoiseSchedule::cosine: steps must be >= 2");
  const double s = 0.008;
  auto f = [&](double t) {
    const double u = (t / steps + s) / (1.0 + s) * (kPi / 2.0);
    const double c = std::cos(u);
    return c * c;
  };
  std::vector<double> ab(static_cast<std::size_t>(steps) + 1);
  ab[0] = 1.0;
  // accumulate per-step ratios with the usual 0.999 cap on beta so the
  // terminal value stays a representable positive number
  for (int t = 1; t <= steps; ++t) {
    double ratio = f(static_cast<double>(t)) / f(static_cast<double>(t - 1));
    if (ratio < 1e-3) ratio = 1e-3;
    ab[static_cast<std::size_t>(t)] = ab[static_cast<std::size_t>(t) - 1] * ratio;
  }
  return NoiseSchedule(std::move(ab));
}

NoiseSchedule NoiseSchedule::linear(int steps) {
  if (steps < 2) throw std::invalid_argument("NoiseSchedule::linear: steps must be >= 2");
  // classic 1000-step beta endpoints rescaled to the requested step count
  const double scale = 1000.0 / steps;
  const double beta_lo = 1e-4 * scale;
  const double beta_hi = 0.02 * scale;
  std::vector<double> ab(static_cast<std::size_t>(steps) + 1);
  ab[0] = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double beta = beta_lo + (beta_hi - beta_lo) * (t - 1) / (steps - 1);
    ab[static_cast<std::size_t>(t)] = ab[static_cast<std::size_t>(t) - 1] * (1.0 - beta);
  }
  return NoiseSchedule(std::move(ab));
}

NoiseSchedule NoiseSchedule::from_family(const std::string& family, int steps) {
  if (family == "cosine") return cosine(steps);
  if (family == "linear") return linear(steps);
  throw std::invalid_argument("NoiseSchedule: unknown family '" + family + "'");
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps()) {
    throw std::out_of_range("NoiseSchedule: timestep out of range");
  }
  return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::step_alpha(int t) const {
  if (t < 1 || t > steps()) {
    throw std::out_of_range("NoiseSchedule: step_alpha needs t in [1, T]");
  }
  return alpha_bar_[static_cast<std::size_t>(t)] / alpha_bar_[static_cast<std::size_t>(t) - 1];
}

double NoiseSchedule::posterior_variance(int t) const {
  const double a = step_alpha(t);  // validates range
  return (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t)) * (1.0 - a);
}

}  // namespace cfglab
