#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cfglab/evaluator.hpp"
#include "cfglab/mlp.hpp"
#include "cfglab/schedule.hpp"
#include "cfglab/world.hpp"

namespace cfglab {

// One pairwise preference between two generated latents under the same condition.
struct PreferencePair {
  std::vector<double> x_i;
  std::vector<double> x_j;
  Condition cond = Condition::label(0);
  bool i_preferred = true;
};

// One regression example: clean latent, its condition, and the oracle score.
struct CapabilityExample {
  std::vector<double> x0;
  int cls = 0;
  double score = 0.0;
};

struct TrainHyper {
  int steps = 1500;
  int batch = 64;
  double lr = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  double temperature = 1.0;  // contrastive softmax temperature
  // loss weighting over timesteps; t_max = -1 means the schedule length
  int t_min = 0;
  int t_max = -1;
  double weight_floor = 0.05;
  double weight_k = 5.0;
  LossWeightSchedule::Ramp ramp = LossWeightSchedule::Ramp::exponential;
  // architecture; input_dim / num_classes are filled by each trainer
  int hidden = 64;
  int hidden_layers = 3;
  int time_embed = 16;
  int class_embed = 8;
};

// in-batch softmax contrastive objective over classes on noised latents
std::shared_ptr<MlpEvaluator> train_alignment(const MixtureWorld& world,
                                              const NoiseSchedule& sched,
                                              const TrainHyper& hyper);

// logistic real-vs-generated objective; score is the realness log-odds
std::shared_ptr<MlpEvaluator> train_discriminator(const std::vector<std::vector<double>>& real_set,
                                                  const std::vector<std::vector<double>>& generated_set,
                                                  const NoiseSchedule& sched,
                                                  const TrainHyper& hyper);

// Bradley-Terry preference objective on noised pairs
std::shared_ptr<MlpEvaluator> train_reward(const std::vector<PreferencePair>& pairs,
                                           const NoiseSchedule& sched, const TrainHyper& hyper);

// MSE regression to oracle scores, standardized targets
std::shared_ptr<MlpEvaluator> train_capability(const std::vector<CapabilityExample>& dataset,
                                               const NoiseSchedule& sched,
                                               const TrainHyper& hyper);

// default programmatic oracle: negative squared distance to the nearest
// component mean of the example's class
double capability_oracle(const MixtureWorld& world, const std::vector<double>& x0, int cls);

// draws a class from the world's priors
int draw_class(const MixtureWorld& world, Rng& rng);

// conditional draws labeled by the oracle alignment margin at the clean level;
// pairs with margin below min_margin are redrawn
std::vector<PreferencePair> make_preference_pairs(const MixtureWorld& world, int n,
                                                  std::uint64_t seed, double min_margin = 0.0);

std::vector<CapabilityExample> make_capability_dataset(const MixtureWorld& world, int n,
                                                       std::uint64_t seed);

// held-out probes ----------------------------------------------------------

// fraction of draws whose argmax-over-classes score matches the true class
double alignment_accuracy(const Evaluator& ev, const MixtureWorld& world,
                          const NoiseSchedule& sched, int t, int n, std::uint64_t seed);

// Mann-Whitney AUC of matched-condition scores over mismatched-condition scores
double matched_mismatch_auc(const Evaluator& ev, const MixtureWorld& world,
                            const NoiseSchedule& sched, int t, int n, std::uint64_t seed);

// Mann-Whitney AUC of set_a scores over set_b scores after noising to level t
double two_set_auc(const Evaluator& ev, const std::vector<std::vector<double>>& set_a,
                   const std::vector<std::vector<double>>& set_b, const NoiseSchedule& sched,
                   int t, std::uint64_t seed);

// fraction of pairs ranked consistently with their labels at noise level t
double reward_pair_accuracy(const Evaluator& ev, const std::vector<PreferencePair>& pairs,
                            const NoiseSchedule& sched, int t, std::uint64_t seed);

struct RegressionProbe {
  double mse = 0.0;
  double target_variance = 0.0;
};
RegressionProbe capability_probe(const Evaluator& ev, const std::vector<CapabilityExample>& dataset,
                                 const NoiseSchedule& sched, int t, std::uint64_t seed);

// serialization -------------------------------------------------------------

// self-describing binary: magic, JSON header, raw little-endian doubles
void save_evaluator(const MlpEvaluator& ev, const std::string& path);
std::shared_ptr<MlpEvaluator> load_evaluator(const std::string& path);

}  // namespace cfglab
