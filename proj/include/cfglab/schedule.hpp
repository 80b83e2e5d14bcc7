#pragma once

#include <string>
#include <vector>

namespace cfglab {

/// Cumulative signal-retention sequence of the forward corruption process.
/// alpha_bar(0) == 1 (clean data), alpha_bar(T) < 1e-3 (near-pure noise),
/// strictly decreasing in between. Construction validates all of it.
class NoiseSchedule {
 public:
  static NoiseSchedule cosine(int steps);
  static NoiseSchedule linear(int steps);
  static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar);
  static NoiseSchedule from_family(const std::string& family, int steps);

  int steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
  double alpha_bar(int t) const;

  /// Per-step retention ratio alpha_bar(t) / alpha_bar(t-1), t in [1, T].
  double step_alpha(int t) const;

  /// "Small" posterior variance of the reverse step t -> t-1.
  double posterior_variance(int t) const;

 private:
  explicit NoiseSchedule(std::vector<double> alpha_bar);
  std::vector<double> alpha_bar_;
};

}  // namespace cfglab
