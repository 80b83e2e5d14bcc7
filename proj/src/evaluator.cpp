#include "cfglab/evaluator.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace cfglab {

namespace {
// cost model shared by the op-count report: one d-dim Gaussian evaluation in a
// cached eigenbasis (rotate, scale, dot, log terms)
long gaussian_eval_ops(int d) { return static_cast<long>(d) * d + 4L * d + 8; }
}  // namespace

AlignmentOracle::AlignmentOracle(MixtureWorld world, NoiseSchedule sched)
    : world_(std::move(world)), sched_(std::move(sched)) {}

double AlignmentOracle::score(const std::vector<double>& x, int t, const Condition& cond) const {
  if (!cond.is_conditional()) {
    throw std::invalid_argument("alignment-oracle: needs a class condition");
  }
  return std::log(world_.posterior_class_prob(x, t, cond.class_label(), sched_));
}

long AlignmentOracle::score_ops() const {
  long comps = 0;
  for (int c = 0; c < world_.num_classes(); ++c) comps += world_.components_in(c);
  return comps * gaussian_eval_ops(world_.dim()) + 4L * comps + 2L * world_.num_classes();
}

QualityOracle::QualityOracle(MixtureWorld world, NoiseSchedule sched)
    : world_(std::move(world)), sched_(std::move(sched)) {}

double QualityOracle::score(const std::vector<double>& x, int t, const Condition&) const {
  return world_.log_density(x, t, Condition::none(), sched_);
}

long QualityOracle::score_ops() const {
  long comps = 0;
  for (int c = 0; c < world_.num_classes(); ++c) comps += world_.components_in(c);
  return comps * gaussian_eval_ops(world_.dim()) + 4L * comps;
}

MlpEvaluator::MlpEvaluator(std::string kind, Mlp net, int steps, bool conditional,
                           double out_scale, double out_shift)
    : kind_(std::move(kind)),
      net_(std::move(net)),
      steps_(steps),
      conditional_(conditional),
      out_scale_(out_scale),
      out_shift_(out_shift) {}

double MlpEvaluator::score(const std::vector<double>& x, int t, const Condition& cond) const {
  if (conditional_ && !cond.is_conditional()) {
    throw std::invalid_argument(kind_ + ": needs a class condition");
  }
  const int cls = conditional_ ? cond.class_label() : -1;
  const double t_frac = static_cast<double>(t) / static_cast<double>(steps_);
  return out_scale_ * net_.forward(x, t_frac, cls) + out_shift_;
}

double bt_probability(double score_i, double score_j) {
  // softplus in a stable form; clamp keeps the ratio away from 0/0
  auto positive = [](double s) {
    const double sp = s > 30.0 ? s : std::log1p(std::exp(s));
    return std::max(sp, 1e-300);
  };
  const double pi = positive(score_i);
  const double pj = positive(score_j);
  return pi / (pi + pj);
}

double LossWeightSchedule::weight(double t) const {
  if (t_max <= t_min) {
    throw std::invalid_argument("LossWeightSchedule: t_max must exceed t_min");
  }
  if (t < t_min || t > t_max) {
    throw std::invalid_argument("LossWeightSchedule: timestep outside [t_min, t_max]");
  }
  const double cut = t_cut();
  if (t > cut) return floor;
  const double u = (cut - t) / (cut - t_min);  // 0 at the cutoff, 1 at t_min
  if (ramp == Ramp::linear) return floor + (1.0 - floor) * u;
  // ratio grouped so u = 1 cancels exactly and the ramp tops out at 1.0
  return floor + (1.0 - floor) * (std::expm1(k * u) / std::expm1(k));
}

}  // namespace cfglab
