#include "cfglab/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace cfglab {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kWeightEps = 1e-6;  // floor on the relative-improvement denominator

void check_step_range(int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) {
    throw std::out_of_range("guidance: timestep outside [1, T]");
  }
}

LatentState advance(const LatentState& state, const std::vector<double>& eps_guided,
                    const NoiseSchedule& sched, const std::vector<double>& noise,
                    SamplerKind sampler) {
  if (sampler == SamplerKind::ddim) return ddim_step(state, eps_guided, sched);
  return ddpm_step(state, eps_guided, sched, noise);
}

// running min-max map used before the adaptive-weight recurrence; a collapsed
// range pins to the midpoint so deltas vanish instead of exploding
double min_max_norm(double v, double lo, double hi) {
  const double range = hi - lo;
  if (range > 0.0) return (v - lo) / range;
  return 0.5;
}

}  // namespace

GuidanceCandidateSet::GuidanceCandidateSet(std::vector<double> s) : scales(std::move(s)) {
  if (scales.empty()) {
    throw std::invalid_argument("GuidanceCandidateSet: empty candidate set");
  }
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!std::isfinite(scales[i])) {
      throw std::invalid_argument("GuidanceCandidateSet: scales must be finite");
    }
    if (i > 0 && scales[i] <= scales[i - 1]) {
      throw std::invalid_argument("GuidanceCandidateSet: scales must be strictly increasing");
    }
  }
}

GuidanceCandidateSet GuidanceCandidateSet::default_set() {
  return GuidanceCandidateSet({1.0, 3.0, 7.5, 11.0, 15.0});
}

std::string policy_name(const GuidancePolicy& policy) {
  struct Namer {
    std::string operator()(const FixedPolicy&) const { return "fixed"; }
    std::string operator()(const IntervalPolicy&) const { return "interval"; }
    std::string operator()(const AnnealingPolicy&) const { return "annealing"; }
    std::string operator()(const StaticLookupPolicy&) const { return "static-lookup"; }
    std::string operator()(const DynamicPolicy&) const { return "dynamic"; }
  };
  return std::visit(Namer{}, policy);
}

double scale_at(const GuidancePolicy& policy, int t, const NoiseSchedule& sched) {
  check_step_range(t, sched);

  struct Scaler {
    int t;
    const NoiseSchedule& sched;

    double operator()(const FixedPolicy& p) const { return p.s; }

    double operator()(const IntervalPolicy& p) const {
      if (p.t_lo >= p.t_hi || p.t_lo < 0 || p.t_hi > sched.steps()) {
        throw std::invalid_argument("IntervalPolicy: requires 0 <= t_lo < t_hi <= T");
      }
      return (t >= p.t_lo && t <= p.t_hi) ? p.s_hi : p.s_out;
    }

    double operator()(const AnnealingPolicy& p) const {
      const int T = sched.steps();
      const double u = T > 1 ? static_cast<double>(t - 1) / static_cast<double>(T - 1) : 1.0;
      const double ramp =
          p.shape == AnnealingPolicy::Shape::cosine ? 0.5 * (1.0 - std::cos(kPi * u)) : u;
      return p.s_end + (p.s_start - p.s_end) * ramp;
    }

    double operator()(const StaticLookupPolicy& p) const {
      if (static_cast<int>(p.table.size()) != sched.steps()) {
        throw std::invalid_argument("StaticLookupPolicy: table must cover every timestep");
      }
      return p.table[static_cast<std::size_t>(t - 1)];
    }

    double operator()(const DynamicPolicy&) const {
      throw std::invalid_argument("scale_at: dynamic policy has no static schedule");
    }
  };
  return std::visit(Scaler{t, sched}, policy);
}

std::vector<double> adaptive_weights(const std::vector<double>& prev,
                                     const std::vector<double>& curr) {
  const std::size_t n = curr.size();
  if (n == 0) return {};
  const std::vector<double> uniform(n, 1.0 / static_cast<double>(n));
  if (prev.empty()) return uniform;  // no-history boundary
  if (prev.size() != n) {
    throw std::invalid_argument("adaptive_weights: score vectors must align");
  }

  std::vector<double> w(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double alpha = (curr[i] - prev[i]) / std::max(prev[i], kWeightEps);
    w[i] = std::max(alpha, 0.0);
    sum += w[i];
  }
  if (sum <= 0.0) return uniform;
  for (double& v : w) v /= sum;
  return w;
}

ScoreExtrema::ScoreExtrema(std::size_t n_evaluators)
    : lo(n_evaluators, std::numeric_limits<double>::infinity()),
      hi(n_evaluators, -std::numeric_limits<double>::infinity()) {}

void ScoreExtrema::observe(std::size_t e, double value) {
  lo[e] = std::min(lo[e], value);
  hi[e] = std::max(hi[e], value);
}

SelectResult dynamic_select(const LatentState& state, const std::vector<double>& eps_cond,
                            const std::vector<double>& eps_uncond,
                            const GuidanceCandidateSet& cands,
                            const std::vector<EvaluatorPtr>& evaluators,
                            const std::vector<double>& weights, const NoiseSchedule& sched,
                            const std::vector<double>& shared_noise, const Condition& cond,
                            SamplerKind sampler, double tie_default, ScoreExtrema* extrema) {
  if (cands.scales.empty()) {
    throw std::invalid_argument("dynamic_select: empty candidate set");
  }
  if (evaluators.empty()) {
    throw std::invalid_argument("dynamic_select: need at least one evaluator");
  }
  if (weights.size() != evaluators.size()) {
    throw std::invalid_argument("dynamic_select: one weight per evaluator");
  }
  if (extrema != nullptr && extrema->lo.size() != evaluators.size()) {
    throw std::invalid_argument("dynamic_select: extrema sized for a different evaluator set");
  }
  check_step_range(state.t, sched);

  const std::size_t ns = cands.scales.size();
  const std::size_t ne = evaluators.size();

  std::vector<LatentState> nexts;
  nexts.reserve(ns);
  for (double s : cands.scales) {
    nexts.push_back(advance(state, cfg_combine(eps_uncond, eps_cond, s), sched, shared_noise,
                            sampler));
  }

  // raw[e][k]: evaluator e on candidate k, conditioned at the next timestep
  std::vector<std::vector<double>> raw(ne, std::vector<double>(ns));
  for (std::size_t e = 0; e < ne; ++e) {
    for (std::size_t k = 0; k < ns; ++k) {
      raw[e][k] = evaluators[e]->score(nexts[k].x, nexts[k].t, cond);
    }
  }

  // the candidate argmax runs on raw scores: an evaluator only steers the
  // choice in proportion to how much its score still varies across candidates.
  // normalized values (against running extrema when a chain passes them) are
  // kept for the trace and for the weight recurrence upstream
  std::vector<std::vector<double>> norm(ne, std::vector<double>(ns));
  for (std::size_t e = 0; e < ne; ++e) {
    double lo, hi;
    if (extrema != nullptr) {
      for (std::size_t k = 0; k < ns; ++k) extrema->observe(e, raw[e][k]);
      lo = extrema->lo[e];
      hi = extrema->hi[e];
    } else {
      const auto mm = std::minmax_element(raw[e].begin(), raw[e].end());
      lo = *mm.first;
      hi = *mm.second;
    }
    for (std::size_t k = 0; k < ns; ++k) norm[e][k] = min_max_norm(raw[e][k], lo, hi);
  }

  std::vector<double> combined(ns, 0.0);
  for (std::size_t k = 0; k < ns; ++k) {
    for (std::size_t e = 0; e < ne; ++e) combined[k] += weights[e] * raw[e][k];
  }

  // argmax; exact ties resolve toward tie_default, then the smaller scale
  std::size_t best = 0;
  for (std::size_t k = 1; k < ns; ++k) {
    if (combined[k] > combined[best]) {
      best = k;
    } else if (combined[k] == combined[best]) {
      const double dk = std::abs(cands.scales[k] - tie_default);
      const double db = std::abs(cands.scales[best] - tie_default);
      if (dk < db || (dk == db && cands.scales[k] < cands.scales[best])) best = k;
    }
  }

  SelectResult out;
  out.scale = cands.scales[best];
  out.next = nexts[best];
  out.record.t = state.t;
  out.record.chosen_scale = out.scale;
  out.record.weights = weights;
  out.record.candidate_scores = std::move(combined);
  out.record.eval_raw.resize(ne);
  out.record.eval_norm.resize(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    out.record.eval_raw[e] = raw[e][best];
    out.record.eval_norm[e] = norm[e][best];
  }
  return out;
}

ChainRunner::ChainRunner(const MixtureWorld& world, const NoiseSchedule& sched,
                         const GuidancePolicy& policy, const Condition& cond, std::uint64_t seed,
                         SamplerKind sampler)
    : world_(&world),
      sched_(&sched),
      policy_(policy),
      cond_(cond),
      sampler_(sampler),
      rng_(seed),
      state_{{}, sched.steps()} {
  dyn_ = std::get_if<DynamicPolicy>(&policy_);
  if (dyn_ != nullptr) {
    if (dyn_->evaluators.empty()) {
      throw std::invalid_argument("run_guided_chain: dynamic policy needs evaluators");
    }
    const std::size_t ne = dyn_->evaluators.size();
    if (dyn_->weighting == Weighting::linear) {
      if (dyn_->coefficients.empty()) {
        fixed_weights_.assign(ne, 1.0 / static_cast<double>(ne));
      } else {
        if (dyn_->coefficients.size() != ne) {
          throw std::invalid_argument("run_guided_chain: one coefficient per evaluator");
        }
        double sum = 0.0;
        for (double c : dyn_->coefficients) {
          if (c < 0.0) throw std::invalid_argument("run_guided_chain: negative coefficient");
          sum += c;
        }
        if (sum <= 0.0) throw std::invalid_argument("run_guided_chain: zero coefficient sum");
        fixed_weights_ = dyn_->coefficients;
        for (double& c : fixed_weights_) c /= sum;
      }
    }
    for (const auto& ev : dyn_->evaluators) trace_.evaluator_kinds.push_back(ev->kind());
    trace_.candidate_scales = dyn_->candidates.scales;
    history_.resize(ne);
    extrema_ = ScoreExtrema(ne);
  }

  trace_.records.reserve(static_cast<std::size_t>(sched.steps()));
  state_.x = rng_.normal_vec(static_cast<std::size_t>(world.dim()));
}

void ChainRunner::step() {
  if (done()) throw std::logic_error("ChainRunner::step: chain already finished");
  const int t = state_.t;
  const auto eps_c = world_->exact_eps(state_.x, t, cond_, *sched_);
  const auto eps_u = world_->exact_eps(state_.x, t, Condition::none(), *sched_);
  nfe_.denoiser += 2;

  std::vector<double> noise;
  if (sampler_ == SamplerKind::ddpm) {
    noise = rng_.normal_vec(static_cast<std::size_t>(world_->dim()));
  }

  if (dyn_ == nullptr) {
    const double s = scale_at(policy_, t, *sched_);
    state_ = advance(state_, cfg_combine(eps_u, eps_c, s), *sched_, noise, sampler_);
    TraceRecord rec;
    rec.t = t;
    rec.chosen_scale = s;
    trace_.records.push_back(std::move(rec));
    return;
  }

  std::vector<double> weights;
  if (dyn_->weighting == Weighting::linear) {
    weights = fixed_weights_;
  } else {
    // Eq-style relative improvement needs two visited steps; before that the
    // boundary rule is uniform
    const std::size_t ne = dyn_->evaluators.size();
    std::vector<double> prev, curr;
    if (history_[0].size() >= 2) {
      prev.resize(ne);
      curr.resize(ne);
      for (std::size_t e = 0; e < ne; ++e) {
        const auto& h = history_[e];
        prev[e] = min_max_norm(h[h.size() - 2], extrema_.lo[e], extrema_.hi[e]);
        curr[e] = min_max_norm(h[h.size() - 1], extrema_.lo[e], extrema_.hi[e]);
      }
    }
    weights = adaptive_weights(prev, curr);
    if (weights.empty()) weights.assign(ne, 1.0 / static_cast<double>(ne));
  }

  auto sel = dynamic_select(state_, eps_c, eps_u, dyn_->candidates, dyn_->evaluators, weights,
                            *sched_, noise, cond_, sampler_, dyn_->tie_default, &extrema_);
  nfe_.evaluator_calls += static_cast<long>(dyn_->candidates.size() * dyn_->evaluators.size());

  for (std::size_t e = 0; e < dyn_->evaluators.size(); ++e) {
    history_[e].push_back(sel.record.eval_raw[e]);
  }

  state_ = std::move(sel.next);
  trace_.records.push_back(std::move(sel.record));
}

void ChainRunner::run_until(int t_stop) {
  while (state_.t > t_stop) step();
}

ChainResult ChainRunner::finish() {
  run_until(0);
  ChainResult out;
  out.sample = state_.x;
  out.trace = std::move(trace_);
  out.nfe = nfe_;
  return out;
}

ChainResult run_guided_chain(const MixtureWorld& world, const NoiseSchedule& sched,
                             const GuidancePolicy& policy, const Condition& cond,
                             std::uint64_t seed, SamplerKind sampler) {
  return ChainRunner(world, sched, policy, cond, seed, sampler).finish();
}

void write_trace_csv(const ScheduleTrace& trace, std::ostream& out) {
  out << "# schema_version 1\n";
  if (!trace.evaluator_kinds.empty()) {
    out << "# evaluators:";
    for (std::size_t e = 0; e < trace.evaluator_kinds.size(); ++e) {
      out << (e == 0 ? " " : ",") << trace.evaluator_kinds[e];
    }
    out << "\n";
  }

  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };

  out << "t,chosen_scale";
  for (std::size_t e = 0; e < trace.evaluator_kinds.size(); ++e) {
    out << ",e" << e << "_raw,e" << e << "_norm,e" << e << "_weight";
  }
  for (std::size_t k = 0; k < trace.candidate_scales.size(); ++k) {
    out << ",cand_";
    num(trace.candidate_scales[k]);
    out << "_score";
  }
  out << "\n";

  for (const auto& rec : trace.records) {
    out << rec.t << ",";
    num(rec.chosen_scale);
    for (std::size_t e = 0; e < trace.evaluator_kinds.size(); ++e) {
      out << ",";
      num(rec.eval_raw.empty() ? 0.0 : rec.eval_raw[e]);
      out << ",";
      num(rec.eval_norm.empty() ? 0.0 : rec.eval_norm[e]);
      out << ",";
      num(rec.weights.empty() ? 0.0 : rec.weights[e]);
    }
    for (std::size_t k = 0; k < trace.candidate_scales.size(); ++k) {
      out << ",";
      num(rec.candidate_scores.empty() ? 0.0 : rec.candidate_scores[k]);
    }
    out << "\n";
  }
}

ScheduleTrace read_trace_csv(std::istream& in) {
  ScheduleTrace trace;
  std::string line;
  bool header_seen = false;
  std::size_t n_evals = 0;

  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
      std::size_t comma = s.find(',', pos);
      if (comma == std::string::npos) comma = s.size();
      out.push_back(s.substr(pos, comma - pos));
      pos = comma + 1;
    }
    return out;
  };

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string tag = "# evaluators: ";
      if (line.rfind(tag, 0) == 0) {
        for (const auto& kind : split(line.substr(tag.size())))
          if (!kind.empty()) trace.evaluator_kinds.push_back(kind);
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      for (const auto& col : split(line)) {
        if (col.rfind("cand_", 0) == 0 && col.size() > 11 &&
            col.compare(col.size() - 6, 6, "_score") == 0) {
          trace.candidate_scales.push_back(std::stod(col.substr(5, col.size() - 11)));
        }
      }
      n_evals = trace.evaluator_kinds.size();
      continue;
    }
    const auto cols = split(line);
    const std::size_t expected = 2 + 3 * n_evals + trace.candidate_scales.size();
    if (cols.size() != expected)
      throw std::invalid_argument("trace row has " + std::to_string(cols.size()) +
                                  " columns, header implies " + std::to_string(expected));
    TraceRecord rec;
    rec.t = std::stoi(cols[0]);
    rec.chosen_scale = std::stod(cols[1]);
    for (std::size_t e = 0; e < n_evals; ++e) {
      rec.eval_raw.push_back(std::stod(cols[2 + 3 * e]));
      rec.eval_norm.push_back(std::stod(cols[3 + 3 * e]));
      rec.weights.push_back(std::stod(cols[4 + 3 * e]));
    }
    for (std::size_t k = 0; k < trace.candidate_scales.size(); ++k)
      rec.candidate_scores.push_back(std::stod(cols[2 + 3 * n_evals + k]));
    trace.records.push_back(std::move(rec));
  }
  if (!header_seen) throw std::invalid_argument("trace stream has no header row");
  return trace;
}

}  // namespace cfglab
