#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "cfglab/evaluator.hpp"
#include "cfglab/guidance.hpp"
#include "cfglab/metrics.hpp"
#include "cfglab/schedule.hpp"
#include "cfglab/world.hpp"

namespace cfglab {

// Best-of-B filtering ---------------------------------------------------------

struct FilterConfig {
  int B = 4;
  int K = 1;
  double fraction = 0.25;  // share of reverse steps completed before ranking
  EvaluatorPtr evaluator;
};

struct FilterResult {
  std::vector<std::vector<double>> samples;  // K survivors, best score first
  std::vector<int> kept;                     // chain indices of the survivors
  NfeCounter nfe;                            // truncated chains included
};

// Runs B chains on streams mix_seed(seed, b), ranks the partial latents with
// cfg.evaluator at the filter point, completes only the top K. Score ties
// break toward the lower chain index.
FilterResult filter_best_of(const FilterConfig& cfg, const MixtureWorld& world,
                            const NoiseSchedule& sched, const GuidancePolicy& policy,
                            const Condition& cond, std::uint64_t seed,
                            SamplerKind sampler = SamplerKind::ddpm);

// Paired policy comparison ----------------------------------------------------

// One experiment cell: a condition plus the chain's RNG stream. Policies run
// on the same cell list share x_T and every per-step noise draw.
struct CellSpec {
  Condition cond = Condition::none();
  std::uint64_t seed = 0;
};

// n cells cycling the class labels; cell i runs on stream mix_seed(master, i).
std::vector<CellSpec> make_cells(int n, int n_classes, std::uint64_t master);

struct PolicyCells {
  std::vector<std::vector<double>> samples;  // one per cell
  std::vector<ScheduleTrace> traces;         // filled only when keep_traces
  NfeCounter nfe;                            // summed over cells
};

PolicyCells run_policy_cells(const MixtureWorld& world, const NoiseSchedule& sched,
                             const GuidancePolicy& policy, const std::vector<CellSpec>& cells,
                             SamplerKind sampler = SamplerKind::ddpm, int workers = 1,
                             bool keep_traces = false);

struct PolicyEntry {
  std::string name;
  GuidancePolicy policy;
};

struct CompareConfig {
  int cells = 500;         // (cond, seed) pairs per policy
  int truth_draws = 5000;  // ground-truth draws per class for the Frechet fit
  int resamples = 2000;    // bootstrap resamples for every interval
  std::uint64_t master_seed = 1;
  SamplerKind sampler = SamplerKind::ddpm;
  int workers = 1;
  int baseline = 0;  // row the paired contrasts are measured against
};

struct PolicyRow {
  std::string name;
  int cells = 0;
  double alignment = 0.0;  // mean target-class posterior of the clean samples
  BootstrapCI alignment_ci;
  double log_posterior = 0.0;
  BootstrapCI log_posterior_ci;
  double frechet = 0.0;  // class-conditional distance to truth, class average
  BootstrapCI frechet_ci;
  bool frechet_regularized = false;
  long nfe_denoiser = 0;
  long evaluator_calls = 0;
  double est_ops = 0.0;
  // paired contrasts vs the baseline row (this row minus baseline); the
  // baseline row carries degenerate zero intervals and win rate 0.5
  BootstrapCI d_alignment;
  BootstrapCI d_frechet;
  WinRateResult win_vs_base;  // judged by the target-class posterior
};

struct MetricsReport {
  std::vector<PolicyRow> rows;
  int baseline = 0;
  int truth_draws = 0;
  std::uint64_t master_seed = 0;
};

// Runs every policy on the shared cell list and assembles the table. All
// intervals are percentile bootstraps over cells; the Frechet resamples are
// shared across policies so the d_frechet interval is a paired contrast.
MetricsReport compare_policies(const std::vector<PolicyEntry>& entries, const MixtureWorld& world,
                               const NoiseSchedule& sched, const CompareConfig& cfg);

void write_compare_csv(const MetricsReport& report, std::ostream& out);

// Schedule aggregation --------------------------------------------------------

struct ScheduleAggregate {
  // indexed [t - 1] for t = 1..T
  std::vector<double> mean;
  std::vector<double> median;
  std::vector<double> smoothed_norm_median;  // candidate range mapped to [0, 1]
  double cand_lo = 0.0, cand_hi = 0.0;
};

// Per-timestep aggregates of chosen scales across traces. Median of an even
// count averages the middle pair. Smoothing is a centered moving average of
// the normalized median, window T/20 clipped at the ends.
ScheduleAggregate aggregate_schedules(const std::vector<ScheduleTrace>& traces);

void write_schedule_csv(const ScheduleAggregate& agg, std::ostream& out);

// Arithmetic cost model --------------------------------------------------------

// Documented multiply-add estimates. One denoiser call evaluates every mixture
// component's quadratic form in the cached eigenbasis (d^2 + 4d + 8 madds, as
// for the oracle evaluators) plus the eps assembly (2d + 4 per component).
double denoiser_ops_per_call(const MixtureWorld& world);
// One sampler advance: recombination, posterior-mean update, noise add.
double sampler_ops_per_step(int dim);

struct OpCountRow {
  std::string component;
  long calls = 0;
  double ops_per_call = 0.0;
  double total = 0.0;
};

struct OpCountReport {
  std::vector<OpCountRow> rows;
  double total = 0.0;
  double evaluator_overhead_pct = 0.0;  // evaluator share of the grand total
};

// Cost table for an instrumented run: `steps` reverse steps, the dynamic
// candidate count (0 for static policies), the evaluators consulted per
// candidate. Evaluator calls split evenly across evaluators by construction.
OpCountReport op_count_report(const NfeCounter& nfe, int steps,
                              const std::vector<EvaluatorPtr>& evaluators, std::size_t candidates,
                              const MixtureWorld& world);

void write_op_count_csv(const OpCountReport& report, std::ostream& out);

}  // namespace cfglab
