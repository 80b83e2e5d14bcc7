#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cfglab/diffusion.hpp"
#include "cfglab/mlp.hpp"
#include "cfglab/schedule.hpp"
#include "cfglab/world.hpp"

namespace cfglab {

// Uniform scoring contract over noisy latents: greater is always better,
// whatever the quality dimension. Implementations are immutable once built.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual double score(const std::vector<double>& x, int t, const Condition& cond) const = 0;
  virtual std::string kind() const = 0;
  virtual bool needs_condition() const = 0;
  // documented multiply-add estimate of one score call
  virtual long score_ops() const = 0;
};

using EvaluatorPtr = std::shared_ptr<const Evaluator>;

// log Bayes posterior of the conditioned class under the noised world law
class AlignmentOracle final : public Evaluator {
 public:
  AlignmentOracle(MixtureWorld world, NoiseSchedule sched);
  double score(const std::vector<double>& x, int t, const Condition& cond) const override;
  std::string kind() const override { return "alignment-oracle"; }
  bool needs_condition() const override { return true; }
  long score_ops() const override;

 private:
  MixtureWorld world_;
  NoiseSchedule sched_;
};

// marginal log density of the noised world law (realness signal, no condition)
class QualityOracle final : public Evaluator {
 public:
  QualityOracle(MixtureWorld world, NoiseSchedule sched);
  double score(const std::vector<double>& x, int t, const Condition& cond) const override;
  std::string kind() const override { return "quality-oracle"; }
  bool needs_condition() const override { return false; }
  long score_ops() const override;

 private:
  MixtureWorld world_;
  NoiseSchedule sched_;
};

// Learned scorer: the network output is the score. For the discriminator the
// head output is the logit of realness, so the score is already the log-odds.
// Capability regressors de-standardize with the stored target moments.
class MlpEvaluator final : public Evaluator {
 public:
  MlpEvaluator(std::string kind, Mlp net, int steps, bool conditional, double out_scale = 1.0,
               double out_shift = 0.0);
  double score(const std::vector<double>& x, int t, const Condition& cond) const override;
  std::string kind() const override { return kind_; }
  bool needs_condition() const override { return conditional_; }
  long score_ops() const override { return net_.forward_ops(); }

  const Mlp& net() const { return net_; }
  int steps() const { return steps_; }
  double out_scale() const { return out_scale_; }
  double out_shift() const { return out_shift_; }

 private:
  std::string kind_;
  Mlp net_;
  int steps_;  // schedule length the scorer was trained against
  bool conditional_;
  double out_scale_, out_shift_;  // score = scale * net(x,t,c) + shift
};

// Bradley-Terry win probability with scores mapped positive through softplus.
double bt_probability(double score_i, double score_j);

// Time-dependent loss weight: floor plateau on high noise, ramp to 1 at t_min.
struct LossWeightSchedule {
  enum class Ramp { exponential, linear };

  int t_min = 0;
  int t_max = 0;
  double floor = 0.05;
  double k = 5.0;  // ramp sharpness
  Ramp ramp = Ramp::exponential;

  double t_cut() const { return t_min + (t_max - t_min) / 3.0; }
  double weight(double t) const;
};

}  // namespace cfglab
