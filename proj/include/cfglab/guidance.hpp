#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "cfglab/diffusion.hpp"
#include "cfglab/evaluator.hpp"
#include "cfglab/rng.hpp"
#include "cfglab/schedule.hpp"
#include "cfglab/world.hpp"

namespace cfglab {

enum class SamplerKind { ddpm, ddim };

// Strictly increasing list of guidance scales searched per step.
struct GuidanceCandidateSet {
  std::vector<double> scales;

  GuidanceCandidateSet() = default;
  explicit GuidanceCandidateSet(std::vector<double> s);

  static GuidanceCandidateSet default_set();  // [1, 3, 7.5, 11, 15]

  std::size_t size() const { return scales.size(); }
};

// Guidance policies ----------------------------------------------------------

struct FixedPolicy {
  double s = 7.5;
};

// s_hi inside [t_lo, t_hi], s_out (unguided by default) elsewhere
struct IntervalPolicy {
  double s_hi = 11.0;
  int t_lo = 0;
  int t_hi = 0;
  double s_out = 1.0;
};

// scale ramps s_start -> s_end across the reverse chain (t = T down to 1)
struct AnnealingPolicy {
  enum class Shape { linear, cosine };
  double s_start = 15.0;
  double s_end = 1.0;
  Shape shape = Shape::linear;
};

// fixed per-timestep table; entry [t-1] is the scale applied at step t
struct StaticLookupPolicy {
  std::vector<double> table;
};

enum class Weighting { linear, adaptive };

// greedy per-step search over the candidate set, scored by the evaluators
struct DynamicPolicy {
  GuidanceCandidateSet candidates = GuidanceCandidateSet::default_set();
  std::vector<EvaluatorPtr> evaluators;
  Weighting weighting = Weighting::adaptive;
  // linear weighting coefficients, one per evaluator; empty means uniform
  std::vector<double> coefficients;
  // ties resolve toward this scale, then toward the smaller candidate
  double tie_default = 7.5;
};

using GuidancePolicy =
    std::variant<FixedPolicy, IntervalPolicy, AnnealingPolicy, StaticLookupPolicy, DynamicPolicy>;

// human-readable policy tag used in reports ("fixed", "dynamic", ...)
std::string policy_name(const GuidancePolicy& policy);

// Trace and counters ---------------------------------------------------------

struct TraceRecord {
  int t = 0;
  double chosen_scale = 0.0;
  // chosen candidate's per-evaluator scores, raw and candidate-normalized
  std::vector<double> eval_raw;
  std::vector<double> eval_norm;
  std::vector<double> weights;
  // combined score per candidate, in candidate-set order
  std::vector<double> candidate_scores;
};

struct ScheduleTrace {
  std::vector<std::string> evaluator_kinds;
  std::vector<double> candidate_scales;
  std::vector<TraceRecord> records;  // one per reverse step, t = T first
};

struct NfeCounter {
  long denoiser = 0;
  long evaluator_calls = 0;
};

// Operations ------------------------------------------------------------------

// schedule value of a non-dynamic policy at step t (t in [1, T])
double scale_at(const GuidancePolicy& policy, int t, const NoiseSchedule& sched);

// Per-evaluator influence from consecutive normalized scores: relative
// improvement (curr - prev)/prev, clamped at 0, renormalized to sum 1;
// all-zero (or empty prev, the no-history boundary) falls back to uniform.
std::vector<double> adaptive_weights(const std::vector<double>& prev,
                                     const std::vector<double>& curr);

struct SelectResult {
  double scale = 0.0;
  LatentState next;  // the chosen candidate's state, so callers never re-step
  TraceRecord record;
};

// Per-evaluator running score extrema over a chain, shared by the candidate
// normalization and the adaptive-weight recurrence so both read scores on the
// same [0, 1] scale.
struct ScoreExtrema {
  std::vector<double> lo, hi;

  explicit ScoreExtrema(std::size_t n_evaluators = 0);
  void observe(std::size_t e, double value);
};

// One greedy step: recombine eps under every candidate scale, advance each with
// the shared noise draw, score the candidates at t-1, return the argmax scale.
// Candidate scores are min-max normalized per evaluator before the weighted
// combination; with `extrema` the running chain extrema (updated with this
// step's scores) set the scale, otherwise just this step's candidate range.
SelectResult dynamic_select(const LatentState& state, const std::vector<double>& eps_cond,
                            const std::vector<double>& eps_uncond,
                            const GuidanceCandidateSet& cands,
                            const std::vector<EvaluatorPtr>& evaluators,
                            const std::vector<double>& weights, const NoiseSchedule& sched,
                            const std::vector<double>& shared_noise, const Condition& cond,
                            SamplerKind sampler = SamplerKind::ddpm, double tie_default = 7.5,
                            ScoreExtrema* extrema = nullptr);

struct ChainResult {
  std::vector<double> sample;
  ScheduleTrace trace;
  NfeCounter nfe;
};

// Resumable reverse chain from x_T ~ N(0, I) under one policy. The analytic
// world stands in for the denoiser; every step costs exactly two denoiser
// calls (conditional + unconditional), whatever the candidate count. Policy
// configuration errors surface at construction.
class ChainRunner {
 public:
  ChainRunner(const MixtureWorld& world, const NoiseSchedule& sched, const GuidancePolicy& policy,
              const Condition& cond, std::uint64_t seed, SamplerKind sampler = SamplerKind::ddpm);

  int t() const { return state_.t; }
  bool done() const { return state_.t == 0; }
  const LatentState& state() const { return state_; }
  const NfeCounter& nfe() const { return nfe_; }

  void step();                 // one reverse step; requires !done()
  void run_until(int t_stop);  // steps while t > t_stop
  ChainResult finish();        // runs to t = 0 and moves the result out

 private:
  const MixtureWorld* world_;
  const NoiseSchedule* sched_;
  GuidancePolicy policy_;
  const DynamicPolicy* dyn_ = nullptr;  // points into policy_ when dynamic
  Condition cond_;
  SamplerKind sampler_;
  Rng rng_;
  LatentState state_;
  ScheduleTrace trace_;
  NfeCounter nfe_;
  std::vector<double> fixed_weights_;
  // chosen-candidate score history per evaluator plus running extrema over all
  // candidate scores, shared by selection and the adaptive recurrence
  std::vector<std::vector<double>> history_;
  ScoreExtrema extrema_;
};

// Full reverse chain in one call.
ChainResult run_guided_chain(const MixtureWorld& world, const NoiseSchedule& sched,
                             const GuidancePolicy& policy, const Condition& cond,
                             std::uint64_t seed, SamplerKind sampler = SamplerKind::ddpm);

// trace CSV: t, chosen_scale, per-evaluator raw/norm/weight, per-candidate score
void write_trace_csv(const ScheduleTrace& trace, std::ostream& out);

// inverse of write_trace_csv; evaluator kinds and candidate scales are
// recovered from the comment line and the header column names
ScheduleTrace read_trace_csv(std::istream& in);

}  // namespace cfglab
