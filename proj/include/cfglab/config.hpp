#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfglab/evaluator.hpp"
#include "cfglab/guidance.hpp"
#include "cfglab/schedule.hpp"
#include "cfglab/training.hpp"
#include "cfglab/world.hpp"

namespace cfglab {

// Experiment configs are flat INI-style text: [section] headers (some named,
// like "[policy sweep]"), one "key = value" per line, "#" comments. Values are
// typed scalars or bracketed lists. Parsing validates everything up front and
// reports every problem at once, each with its line number.

struct ConfigIssue {
  int line = 0;
  std::string message;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  static std::string render(const std::vector<ConfigIssue>& issues);
  std::vector<ConfigIssue> issues_;
};

struct WorldSpec {
  std::string preset;  // empty means inline components below
  int dim = 0;
  int classes = 0;
  std::vector<double> priors;  // empty means uniform
  std::vector<std::vector<GaussianComponent>> components;
};

struct ScheduleSpec {
  std::string family = "cosine";
  int steps = 200;
};

struct EvaluatorSpec {
  std::string name;
  std::string kind;      // alignment-oracle, quality-oracle, mlp-alignment, mlp-reward, mlp-capability
  std::string artifact;  // parameter file, mlp-* kinds only; defaults to "<name>.bin"
  int train_n = 4000;    // dataset size for the trainers that need one
  TrainHyper hyper;
};

struct PolicySpec {
  std::string name;
  std::string kind;  // fixed, interval, annealing, lookup, dynamic
  // fixed
  double scale = 7.5;
  // interval
  double s_hi = 11.0;
  int t_lo = 0;
  int t_hi = 0;
  double s_out = 1.0;
  // annealing
  double s_start = 15.0;
  double s_end = 1.0;
  std::string shape = "linear";
  // lookup
  std::vector<double> table;
  // dynamic
  std::vector<double> candidates;
  std::vector<std::string> evaluators;
  std::string weighting = "adaptive";
  std::vector<double> coefficients;
  double tie_default = 7.5;
};

struct FilterSpec {
  int B = 4;
  int K = 1;
  double fraction = 0.25;
  std::string evaluator;
  std::string policy;
};

struct ExperimentSpec {
  int cells = 500;
  int truth_draws = 5000;
  int resamples = 2000;
  std::uint64_t master_seed = 1;
  std::string sampler = "ddpm";
  int workers = 0;  // 0 means all available cores
  std::string baseline;  // defaults to the first policy
  std::string policy;    // the single policy run by sample/search
  std::vector<int> conds;  // class labels cycled over cells; empty means all
};

struct RunConfig {
  WorldSpec world;
  ScheduleSpec schedule;
  std::vector<EvaluatorSpec> evaluators;
  std::vector<PolicySpec> policies;
  ExperimentSpec experiment;
  FilterSpec filter;
  bool has_filter = false;
  std::string output_dir;

  const PolicySpec* find_policy(const std::string& name) const;
  const EvaluatorSpec* find_evaluator(const std::string& name) const;
};

// throws ConfigError carrying every issue found
RunConfig parse_config(const std::string& text);

// canonical text form; parse(serialize(cfg)) reproduces cfg
std::string serialize_config(const RunConfig& cfg);

// construction of live objects from validated specs ---------------------------

MixtureWorld build_world(const WorldSpec& spec);
NoiseSchedule build_schedule(const ScheduleSpec& spec);

// oracle kinds are built directly; mlp-* kinds load their artifact, resolved
// against artifact_root when the path is relative
EvaluatorPtr build_evaluator(const EvaluatorSpec& spec, const MixtureWorld& world,
                             const NoiseSchedule& sched, const std::string& artifact_root);

GuidancePolicy build_policy(const PolicySpec& spec,
                            const std::map<std::string, EvaluatorPtr>& evaluators,
                            const NoiseSchedule& sched);

}  // namespace cfglab
