#include "cfglab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <variant>

#include "cfglab/parallel.hpp"
#include "cfglab/rng.hpp"

namespace cfglab {

namespace {

// Stream offsets keep chain seeds (stream = cell index), truth draws, and
// bootstrap draws on disjoint splitmix inputs under one master seed.
constexpr std::uint64_t kTruthStream = 1u << 20;
constexpr std::uint64_t kBootStream = 1u << 21;
constexpr std::uint64_t kJudgeStream = 1u << 22;

void format_num(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

const DynamicPolicy* as_dynamic(const GuidancePolicy& policy) {
  return std::get_if<DynamicPolicy>(&policy);
}

// 95% percentile interval; index convention shared with bootstrap_mean_ci
void percentile_95(std::vector<double> draws, BootstrapCI& ci) {
  std::sort(draws.begin(), draws.end());
  const auto n = draws.size();
  const auto lo_idx = static_cast<std::size_t>(0.025 * static_cast<double>(n - 1) + 0.5);
  const auto hi_idx = static_cast<std::size_t>(0.975 * static_cast<double>(n - 1) + 0.5);
  ci.lo = draws[lo_idx];
  ci.hi = draws[hi_idx];
}

}  // namespace

FilterResult filter_best_of(const FilterConfig& cfg, const MixtureWorld& world,
                            const NoiseSchedule& sched, const GuidancePolicy& policy,
                            const Condition& cond, std::uint64_t seed, SamplerKind sampler) {
  if (cfg.B < 1) throw std::invalid_argument("filter_best_of: B must be >= 1");
  if (cfg.K < 1 || cfg.K > cfg.B) {
    throw std::invalid_argument("filter_best_of: need 1 <= K <= B");
  }
  if (!(cfg.fraction > 0.0) || cfg.fraction > 1.0) {
    throw std::invalid_argument("filter_best_of: fraction must be in (0, 1]");
  }
  if (!cfg.evaluator) throw std::invalid_argument("filter_best_of: evaluator is required");

  const int T = sched.steps();
  const int steps_done = std::clamp(static_cast<int>(std::llround(cfg.fraction * T)), 1, T);
  const int t_filter = T - steps_done;

  std::vector<ChainRunner> runners;
  runners.reserve(static_cast<std::size_t>(cfg.B));
  for (int b = 0; b < cfg.B; ++b) {
    runners.emplace_back(world, sched, policy, cond, mix_seed(seed, static_cast<std::uint64_t>(b)),
                         sampler);
  }

  FilterResult out;
  std::vector<double> scores(static_cast<std::size_t>(cfg.B));
  for (int b = 0; b < cfg.B; ++b) {
    auto& r = runners[static_cast<std::size_t>(b)];
    r.run_until(t_filter);
    scores[static_cast<std::size_t>(b)] = cfg.evaluator->score(r.state().x, t_filter, cond);
  }
  out.nfe.evaluator_calls += cfg.B;

  std::vector<int> order(static_cast<std::size_t>(cfg.B));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double sa = scores[static_cast<std::size_t>(a)];
    const double sb = scores[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    return a < b;
  });
  order.resize(static_cast<std::size_t>(cfg.K));

  std::vector<bool> keep(static_cast<std::size_t>(cfg.B), false);
  for (int b : order) keep[static_cast<std::size_t>(b)] = true;

  out.kept = order;
  out.samples.reserve(static_cast<std::size_t>(cfg.K));
  for (int b : order) out.samples.push_back(runners[static_cast<std::size_t>(b)].finish().sample);
  for (int b = 0; b < cfg.B; ++b) {
    const auto& nfe = runners[static_cast<std::size_t>(b)].nfe();
    out.nfe.denoiser += nfe.denoiser;
    out.nfe.evaluator_calls += nfe.evaluator_calls;
  }
  return out;
}

std::vector<CellSpec> make_cells(int n, int n_classes, std::uint64_t master) {
  if (n < 1) throw std::invalid_argument("make_cells: need at least one cell");
  if (n_classes < 1) throw std::invalid_argument("make_cells: need at least one class");
  std::vector<CellSpec> cells(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    cells[static_cast<std::size_t>(i)].cond = Condition::label(i % n_classes);
    cells[static_cast<std::size_t>(i)].seed = mix_seed(master, static_cast<std::uint64_t>(i));
  }
  return cells;
}

PolicyCells run_policy_cells(const MixtureWorld& world, const NoiseSchedule& sched,
                             const GuidancePolicy& policy, const std::vector<CellSpec>& cells,
                             SamplerKind sampler, int workers, bool keep_traces) {
  if (cells.empty()) throw std::invalid_argument("run_policy_cells: empty cell list");

  PolicyCells out;
  out.samples.resize(cells.size());
  if (keep_traces) out.traces.resize(cells.size());
  std::vector<NfeCounter> nfe(cells.size());

  parallel_for(cells.size(), workers, [&](std::size_t i) {
    auto res = run_guided_chain(world, sched, policy, cells[i].cond, cells[i].seed, sampler);
    out.samples[i] = std::move(res.sample);
    if (keep_traces) out.traces[i] = std::move(res.trace);
    nfe[i] = res.nfe;
  });

  for (const auto& n : nfe) {
    out.nfe.denoiser += n.denoiser;
    out.nfe.evaluator_calls += n.evaluator_calls;
  }
  return out;
}

MetricsReport compare_policies(const std::vector<PolicyEntry>& entries, const MixtureWorld& world,
                               const NoiseSchedule& sched, const CompareConfig& cfg) {
  if (entries.empty()) throw std::invalid_argument("compare_policies: no policies");
  if (cfg.baseline < 0 || cfg.baseline >= static_cast<int>(entries.size())) {
    throw std::invalid_argument("compare_policies: baseline index out of range");
  }
  const int C = world.num_classes();
  const int d = world.dim();
  if (cfg.cells < C * (d + 1)) {
    throw std::invalid_argument("compare_policies: too few cells for the per-class moment fits");
  }
  if (cfg.truth_draws < d + 1) {
    throw std::invalid_argument("compare_policies: too few truth draws");
  }

  const auto cells = make_cells(cfg.cells, C, cfg.master_seed);
  const std::size_t n_cells = cells.size();
  const std::size_t n_policies = entries.size();

  // per-class cell index lists (identical for every policy; pairing)
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(C));
  for (std::size_t i = 0; i < n_cells; ++i) {
    by_class[static_cast<std::size_t>(cells[i].cond.class_label())].push_back(i);
  }

  // fixed ground-truth reference per class, moments cached for the bootstrap
  std::vector<GaussianMoments> truth(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    Rng rng(mix_seed(cfg.master_seed, kTruthStream + static_cast<std::uint64_t>(c)));
    std::vector<std::vector<double>> draws(static_cast<std::size_t>(cfg.truth_draws));
    for (auto& x : draws) x = world.sample_data(Condition::label(c), rng);
    truth[static_cast<std::size_t>(c)] = fit_gaussian_moments(draws);
  }

  std::vector<PolicyCells> runs(n_policies);
  for (std::size_t p = 0; p < n_policies; ++p) {
    runs[p] = run_policy_cells(world, sched, entries[p].policy, cells, cfg.sampler, cfg.workers);
  }

  // per-cell alignment scores
  std::vector<std::vector<double>> align(n_policies, std::vector<double>(n_cells));
  std::vector<std::vector<double>> logpost(n_policies, std::vector<double>(n_cells));
  for (std::size_t p = 0; p < n_policies; ++p) {
    for (std::size_t i = 0; i < n_cells; ++i) {
      const double post =
          world.posterior_class_prob(runs[p].samples[i], cells[i].cond.class_label());
      align[p][i] = post;
      logpost[p][i] = std::log(std::max(post, 1e-300));
    }
  }

  // class-average Frechet distance per policy, full sample and bootstrap draws.
  // Resampled cell indices are shared across policies so differences pair up.
  auto classwise_frechet = [&](std::size_t p, const std::vector<std::vector<std::size_t>>& idx,
                               bool* regularized) {
    double acc = 0.0;
    for (int c = 0; c < C; ++c) {
      std::vector<std::vector<double>> set;
      set.reserve(idx[static_cast<std::size_t>(c)].size());
      for (std::size_t i : idx[static_cast<std::size_t>(c)]) set.push_back(runs[p].samples[i]);
      const auto res =
          frechet_gaussian_moments(fit_gaussian_moments(set), truth[static_cast<std::size_t>(c)]);
      acc += res.distance;
      if (regularized != nullptr && res.regularized) *regularized = true;
    }
    return acc / static_cast<double>(C);
  };

  std::vector<double> fd_full(n_policies);
  std::vector<bool> fd_reg(n_policies, false);
  for (std::size_t p = 0; p < n_policies; ++p) {
    bool reg = false;
    fd_full[p] = classwise_frechet(p, by_class, &reg);
    fd_reg[p] = reg;
  }

  std::vector<std::vector<double>> fd_boot(n_policies,
                                           std::vector<double>(static_cast<std::size_t>(cfg.resamples)));
  {
    Rng boot(mix_seed(cfg.master_seed, kBootStream));
    std::vector<std::vector<std::size_t>> idx(static_cast<std::size_t>(C));
    for (int r = 0; r < cfg.resamples; ++r) {
      for (int c = 0; c < C; ++c) {
        const auto& pool = by_class[static_cast<std::size_t>(c)];
        auto& slot = idx[static_cast<std::size_t>(c)];
        slot.resize(pool.size());
        for (auto& v : slot) v = pool[boot.uniform_index(pool.size())];
      }
      for (std::size_t p = 0; p < n_policies; ++p) {
        fd_boot[p][static_cast<std::size_t>(r)] = classwise_frechet(p, idx, nullptr);
      }
    }
  }

  MetricsReport report;
  report.baseline = cfg.baseline;
  report.truth_draws = cfg.truth_draws;
  report.master_seed = cfg.master_seed;
  report.rows.resize(n_policies);

  const auto base = static_cast<std::size_t>(cfg.baseline);
  std::vector<Condition> conds;
  conds.reserve(n_cells);
  for (const auto& cell : cells) conds.push_back(cell.cond);
  const JudgeFn judge = [&world](const std::vector<double>& x, const Condition& cond) {
    return world.posterior_class_prob(x, cond.class_label());
  };

  for (std::size_t p = 0; p < n_policies; ++p) {
    auto& row = report.rows[p];
    row.name = entries[p].name;
    row.cells = cfg.cells;

    row.alignment_ci = bootstrap_mean_ci(align[p], cfg.resamples,
                                         mix_seed(cfg.master_seed, kBootStream + 1 + p));
    row.alignment = row.alignment_ci.mean;
    row.log_posterior_ci = bootstrap_mean_ci(
        logpost[p], cfg.resamples, mix_seed(cfg.master_seed, kBootStream + 100 + p));
    row.log_posterior = row.log_posterior_ci.mean;

    row.frechet = fd_full[p];
    row.frechet_regularized = fd_reg[p];
    row.frechet_ci.mean = fd_full[p];
    percentile_95(fd_boot[p], row.frechet_ci);

    row.nfe_denoiser = runs[p].nfe.denoiser;
    row.evaluator_calls = runs[p].nfe.evaluator_calls;

    const DynamicPolicy* dyn = as_dynamic(entries[p].policy);
    const std::size_t n_cand = dyn != nullptr ? dyn->candidates.size() : 0;
    OpCountReport ops =
        op_count_report(runs[p].nfe, sched.steps() * cfg.cells,
                        dyn != nullptr ? dyn->evaluators : std::vector<EvaluatorPtr>{}, n_cand,
                        world);
    row.est_ops = ops.total;

    if (p == base) {
      row.d_alignment = BootstrapCI{};
      row.d_frechet = BootstrapCI{};
      row.win_vs_base.rate = 0.5;
      row.win_vs_base.ci = BootstrapCI{0.5, 0.5, 0.5};
      continue;
    }

    std::vector<double> align_diff(n_cells);
    for (std::size_t i = 0; i < n_cells; ++i) align_diff[i] = align[p][i] - align[base][i];
    row.d_alignment = bootstrap_mean_ci(align_diff, cfg.resamples,
                                        mix_seed(cfg.master_seed, kBootStream + 200 + p));

    row.d_frechet.mean = fd_full[p] - fd_full[base];
    std::vector<double> fd_diff(static_cast<std::size_t>(cfg.resamples));
    for (int r = 0; r < cfg.resamples; ++r) {
      fd_diff[static_cast<std::size_t>(r)] =
          fd_boot[p][static_cast<std::size_t>(r)] - fd_boot[base][static_cast<std::size_t>(r)];
    }
    percentile_95(fd_diff, row.d_frechet);

    row.win_vs_base = win_rate(runs[p].samples, runs[base].samples, judge, conds, cfg.resamples,
                               mix_seed(cfg.master_seed, kJudgeStream + p));
  }
  return report;
}

void write_compare_csv(const MetricsReport& report, std::ostream& out) {
  out << "# schema_version 1\n";
  out << "# baseline: " << report.rows[static_cast<std::size_t>(report.baseline)].name << "\n";
  out << "# truth_draws: " << report.truth_draws << "\n";
  out << "# master_seed: " << report.master_seed << "\n";
  out << "policy,cells,alignment,alignment_lo,alignment_hi,log_posterior,log_posterior_lo,"
         "log_posterior_hi,frechet,frechet_lo,frechet_hi,frechet_regularized,nfe_denoiser,"
         "evaluator_calls,est_ops,d_alignment,d_alignment_lo,d_alignment_hi,d_frechet,"
         "d_frechet_lo,d_frechet_hi,win_rate,win_lo,win_hi\n";
  for (const auto& row : report.rows) {
    out << row.name << "," << row.cells << ",";
    format_num(out, row.alignment);
    out << ",";
    format_num(out, row.alignment_ci.lo);
    out << ",";
    format_num(out, row.alignment_ci.hi);
    out << ",";
    format_num(out, row.log_posterior);
    out << ",";
    format_num(out, row.log_posterior_ci.lo);
    out << ",";
    format_num(out, row.log_posterior_ci.hi);
    out << ",";
    format_num(out, row.frechet);
    out << ",";
    format_num(out, row.frechet_ci.lo);
    out << ",";
    format_num(out, row.frechet_ci.hi);
    out << "," << (row.frechet_regularized ? 1 : 0) << "," << row.nfe_denoiser << ","
        << row.evaluator_calls << ",";
    format_num(out, row.est_ops);
    out << ",";
    format_num(out, row.d_alignment.mean);
    out << ",";
    format_num(out, row.d_alignment.lo);
    out << ",";
    format_num(out, row.d_alignment.hi);
    out << ",";
    format_num(out, row.d_frechet.mean);
    out << ",";
    format_num(out, row.d_frechet.lo);
    out << ",";
    format_num(out, row.d_frechet.hi);
    out << ",";
    format_num(out, row.win_vs_base.rate);
    out << ",";
    format_num(out, row.win_vs_base.ci.lo);
    out << ",";
    format_num(out, row.win_vs_base.ci.hi);
    out << "\n";
  }
}

ScheduleAggregate aggregate_schedules(const std::vector<ScheduleTrace>& traces) {
  if (traces.empty()) throw std::invalid_argument("aggregate_schedules: no traces");
  const std::size_t T = traces[0].records.size();
  if (T == 0) throw std::invalid_argument("aggregate_schedules: empty trace");

  ScheduleAggregate agg;
  agg.cand_lo = std::numeric_limits<double>::infinity();
  agg.cand_hi = -std::numeric_limits<double>::infinity();
  bool have_cands = false;

  std::vector<std::vector<double>> columns(T);
  for (auto& col : columns) col.reserve(traces.size());
  for (const auto& trace : traces) {
    if (trace.records.size() != T) {
      throw std::invalid_argument("aggregate_schedules: traces disagree on step count");
    }
    for (const auto& rec : trace.records) {
      if (rec.t < 1 || static_cast<std::size_t>(rec.t) > T) {
        throw std::invalid_argument("aggregate_schedules: record outside [1, T]");
      }
      columns[static_cast<std::size_t>(rec.t - 1)].push_back(rec.chosen_scale);
    }
    for (double s : trace.candidate_scales) {
      have_cands = true;
      agg.cand_lo = std::min(agg.cand_lo, s);
      agg.cand_hi = std::max(agg.cand_hi, s);
    }
  }

  agg.mean.resize(T);
  agg.median.resize(T);
  for (std::size_t i = 0; i < T; ++i) {
    auto& col = columns[i];
    if (col.size() != traces.size()) {
      throw std::invalid_argument("aggregate_schedules: trace missing a timestep");
    }
    agg.mean[i] = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
    std::sort(col.begin(), col.end());
    const std::size_t n = col.size();
    agg.median[i] = (n % 2 == 1) ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
  }

  // static traces carry no candidate set; normalize over the observed medians
  if (!have_cands) {
    agg.cand_lo = *std::min_element(agg.median.begin(), agg.median.end());
    agg.cand_hi = *std::max_element(agg.median.begin(), agg.median.end());
  }

  const double range = agg.cand_hi - agg.cand_lo;
  std::vector<double> norm(T);
  for (std::size_t i = 0; i < T; ++i) {
    norm[i] = range > 0.0 ? (agg.median[i] - agg.cand_lo) / range : 0.5;
  }

  const std::size_t window = std::max<std::size_t>(1, T / 20);
  const std::size_t half = window / 2;
  agg.smoothed_norm_median.resize(T);
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(T - 1, i + half);
    double acc = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) acc += norm[j];
    agg.smoothed_norm_median[i] = acc / static_cast<double>(hi - lo + 1);
  }
  return agg;
}

void write_schedule_csv(const ScheduleAggregate& agg, std::ostream& out) {
  out << "# schema_version 1\n";
  out << "# candidate_range: ";
  format_num(out, agg.cand_lo);
  out << " ";
  format_num(out, agg.cand_hi);
  out << "\n";
  out << "t,mean,median,smoothed_norm_median\n";
  for (std::size_t i = 0; i < agg.mean.size(); ++i) {
    out << (i + 1) << ",";
    format_num(out, agg.mean[i]);
    out << ",";
    format_num(out, agg.median[i]);
    out << ",";
    format_num(out, agg.smoothed_norm_median[i]);
    out << "\n";
  }
}

double denoiser_ops_per_call(const MixtureWorld& world) {
  const double d = world.dim();
  double comps = 0.0;
  for (int c = 0; c < world.num_classes(); ++c) comps += world.components_in(c);
  // per component: Gaussian quadratic form (d^2 + 4d + 8) plus eps assembly
  return comps * (d * d + 4.0 * d + 8.0 + 2.0 * d + 4.0);
}

double sampler_ops_per_step(int dim) {
  const double d = dim;
  // cfg recombination, x0 prediction, posterior mean, noise add
  return 9.0 * d + 8.0;
}

OpCountReport op_count_report(const NfeCounter& nfe, int steps,
                              const std::vector<EvaluatorPtr>& evaluators, std::size_t candidates,
                              const MixtureWorld& world) {
  if (steps < 0) throw std::invalid_argument("op_count_report: negative step count");

  OpCountReport report;
  const double den_ops = denoiser_ops_per_call(world);
  report.rows.push_back(
      {"denoiser", nfe.denoiser, den_ops, static_cast<double>(nfe.denoiser) * den_ops});

  const long advances = static_cast<long>(steps) * static_cast<long>(std::max<std::size_t>(1, candidates));
  const double samp_ops = sampler_ops_per_step(world.dim());
  report.rows.push_back({"sampler", advances, samp_ops, static_cast<double>(advances) * samp_ops});

  double eval_total = 0.0;
  if (!evaluators.empty()) {
    const long per_eval = nfe.evaluator_calls / static_cast<long>(evaluators.size());
    for (const auto& ev : evaluators) {
      const double ops = static_cast<double>(ev->score_ops());
      const double total = static_cast<double>(per_eval) * ops;
      report.rows.push_back({"evaluator:" + ev->kind(), per_eval, ops, total});
      eval_total += total;
    }
  }

  for (const auto& row : report.rows) report.total += row.total;
  report.evaluator_overhead_pct = report.total > 0.0 ? 100.0 * eval_total / report.total : 0.0;
  return report;
}

void write_op_count_csv(const OpCountReport& report, std::ostream& out) {
  out << "# schema_version 1\n";
  out << "component,calls,ops_per_call,total\n";
  for (const auto& row : report.rows) {
    out << row.component << "," << row.calls << ",";
    format_num(out, row.ops_per_call);
    out << ",";
    format_num(out, row.total);
    out << "\n";
  }
  out << "total,,,";
  format_num(out, report.total);
  out << "\n";
  out << "evaluator_overhead_pct,,,";
  format_num(out, report.evaluator_overhead_pct);
  out << "\n";
}

}  // namespace cfglab
