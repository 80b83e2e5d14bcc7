#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cfglab/config.hpp"
#include "cfglab/harness.hpp"
#include "cfglab/manifest.hpp"
#include "cfglab/rng.hpp"
#include "cfglab/training.hpp"

namespace fs = std::filesystem;
using namespace cfglab;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  bool force = false;
  std::optional<std::uint64_t> seed;
};

// One directory-producing run: config in, manifest bracketing the outputs.
struct Run {
  RunConfig cfg;
  std::string config_text;
  std::string config_dir;  // relative evaluator artifacts resolve against this
  std::string out;
  RunManifest manifest;
  std::map<std::string, std::string> outputs;  // relative path -> content
};

Run begin(const CommonArgs& args, const std::string& command) {
  Run r;
  r.config_text = slurp(args.config_path);
  r.cfg = parse_config(r.config_text);
  r.config_dir = fs::path(args.config_path).parent_path().string();
  if (args.seed) r.cfg.experiment.master_seed = *args.seed;
  r.out = args.out_dir.empty() ? r.cfg.output_dir : args.out_dir;
  if (r.out.empty())
    throw std::runtime_error("no output directory: pass --out or set [output] dir");
  fs::create_directories(r.out);
  if (has_manifest(r.out) && !args.force)
    throw std::runtime_error("'" + r.out + "' already holds a run; pass --force to overwrite");
  r.manifest.created = utc_timestamp();
  r.manifest.command = command;
  r.manifest.config_hash = checksum_of(r.config_text);
  r.manifest.master_seed = r.cfg.experiment.master_seed;
  write_manifest(r.manifest, r.out);
  return r;
}

void finish(Run& r) {
  for (const auto& [rel, content] : r.outputs) {
    atomic_write_file((fs::path(r.out) / rel).string(), content);
    r.manifest.outputs[rel] = checksum_of(content);
  }
  r.manifest.status = "complete";
  write_manifest(r.manifest, r.out);
}

SamplerKind sampler_of(const RunConfig& cfg) {
  return cfg.experiment.sampler == "ddim" ? SamplerKind::ddim : SamplerKind::ddpm;
}

int workers_of(const RunConfig& cfg) {
  if (cfg.experiment.workers > 0) return cfg.experiment.workers;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::vector<CellSpec> cells_for(const RunConfig& cfg, const MixtureWorld& world) {
  std::vector<int> conds = cfg.experiment.conds;
  if (conds.empty())
    for (int c = 0; c < world.num_classes(); ++c) conds.push_back(c);
  std::vector<CellSpec> cells;
  cells.reserve(static_cast<std::size_t>(cfg.experiment.cells));
  for (int i = 0; i < cfg.experiment.cells; ++i) {
    CellSpec cell;
    cell.cond = Condition::label(conds[static_cast<std::size_t>(i) % conds.size()]);
    cell.seed = mix_seed(cfg.experiment.master_seed, static_cast<std::uint64_t>(i));
    cells.push_back(cell);
  }
  return cells;
}

std::map<std::string, EvaluatorPtr> build_evaluators(const Run& r, const MixtureWorld& world,
                                                     const NoiseSchedule& sched,
                                                     const std::set<std::string>& names) {
  std::map<std::string, EvaluatorPtr> out;
  for (const auto& name : names)
    out[name] = build_evaluator(*r.cfg.find_evaluator(name), world, sched, r.config_dir);
  return out;
}

std::set<std::string> evaluator_names(std::initializer_list<const PolicySpec*> specs) {
  std::set<std::string> names;
  for (const auto* p : specs)
    if (p)
      for (const auto& e : p->evaluators) names.insert(e);
  return names;
}

const PolicySpec& required_policy(const RunConfig& cfg, const std::string& name,
                                  const std::string& who) {
  if (name.empty()) throw std::runtime_error(who + " needs a policy (experiment.policy)");
  const auto* spec = cfg.find_policy(name);
  if (!spec) throw std::runtime_error(who + " references unknown policy '" + name + "'");
  return *spec;
}

std::string samples_csv(const MixtureWorld& world, const std::vector<CellSpec>& cells,
                        const std::vector<std::vector<double>>& samples) {
  std::ostringstream os;
  os << "# schema_version 1\ncell,class,seed";
  for (int i = 0; i < world.dim(); ++i) os << ",x" << i;
  os << ",alignment\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const int cls = cells[i].cond.class_label();
    os << i << "," << cls << "," << cells[i].seed;
    for (double v : samples[i]) os << "," << num(v);
    os << "," << num(world.posterior_class_prob(samples[i], cls)) << "\n";
  }
  return os.str();
}

std::string trace_name(std::size_t cell) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traces/cell_%04zu.csv", cell);
  return buf;
}

// Minimal self-contained plots; the CSVs stay the authoritative outputs.
std::string schedule_svg(const ScheduleAggregate& agg) {
  const int W = 640, H = 360, L = 50, R = 20, T = 20, B = 40;
  const int n = static_cast<int>(agg.smoothed_norm_median.size());
  auto px = [&](int i) { return L + (W - L - R) * (n - 1 - i) / std::max(1, n - 1); };
  auto py = [&](double v) { return T + (H - T - B) * (1.0 - std::clamp(v, 0.0, 1.0)); };
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n"
     << "<rect width='100%' height='100%' fill='white'/>\n"
     << "<line x1='" << L << "' y1='" << (H - B) << "' x2='" << (W - R) << "' y2='" << (H - B)
     << "' stroke='black'/>\n"
     << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='" << (H - B)
     << "' stroke='black'/>\n"
     << "<text x='" << L << "' y='" << (H - 10) << "' font-size='12'>t = " << n
     << " (start)</text>\n"
     << "<text x='" << (W - R - 70) << "' y='" << (H - 10) << "' font-size='12'>t = 1</text>\n"
     << "<text x='8' y='" << (T + 10) << "' font-size='12'>1</text>\n"
     << "<text x='8' y='" << (H - B) << "' font-size='12'>0</text>\n";
  auto polyline = [&](const std::vector<double>& ys, const char* color, int width) {
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='" << width
       << "' points='";
    for (int i = n - 1; i >= 0; --i)
      os << px(i) << "," << py(ys[static_cast<std::size_t>(i)]) << " ";
    os << "'/>\n";
  };
  if (agg.cand_hi > agg.cand_lo) {
    std::vector<double> norm_median(agg.median.size());
    for (std::size_t i = 0; i < agg.median.size(); ++i)
      norm_median[i] = (agg.median[i] - agg.cand_lo) / (agg.cand_hi - agg.cand_lo);
    polyline(norm_median, "#bbbbbb", 1);
  }
  polyline(agg.smoothed_norm_median, "#1f6fb2", 2);
  os << "<text x='" << (L + 10) << "' y='" << (T + 14)
     << "' font-size='12'>normalized median scale (smoothed)</text>\n</svg>\n";
  return os.str();
}

std::string compare_svg(const MetricsReport& rep) {
  const int row_h = 26, label_w = 150, bar_w = 340, W = label_w + bar_w + 150;
  const int H = 40 + row_h * static_cast<int>(rep.rows.size());
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n"
     << "<rect width='100%' height='100%' fill='white'/>\n"
     << "<text x='" << label_w << "' y='16' font-size='13'>alignment (bar) with 95% interval"
     << "</text>\n";
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& row = rep.rows[i];
    const int y = 30 + row_h * static_cast<int>(i);
    auto x_of = [&](double v) { return label_w + std::clamp(v, 0.0, 1.0) * bar_w; };
    os << "<text x='6' y='" << (y + 13) << "' font-size='12'>" << row.name << "</text>\n"
       << "<rect x='" << label_w << "' y='" << y << "' width='"
       << (x_of(row.alignment) - label_w) << "' height='16' fill='#5b9bd5'/>\n"
       << "<line x1='" << x_of(row.alignment_ci.lo) << "' y1='" << (y + 8) << "' x2='"
       << x_of(row.alignment_ci.hi) << "' y2='" << (y + 8)
       << "' stroke='black' stroke-width='2'/>\n"
       << "<text x='" << (label_w + bar_w + 8) << "' y='" << (y + 13) << "' font-size='12'>"
       << num(row.alignment) << " / F " << num(row.frechet) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void cmd_train_evals(const CommonArgs& args) {
  Run r = begin(args, "train-evals");
  const auto world = build_world(r.cfg.world);
  const auto sched = build_schedule(r.cfg.schedule);
  const std::uint64_t master = r.cfg.experiment.master_seed;
  const int T = sched.steps();

  std::ostringstream summary;
  summary << "# schema_version 1\nevaluator,kind,artifact,probe,value\n";
  int idx = 0;
  for (const auto& spec : r.cfg.evaluators) {
    if (spec.kind.rfind("mlp-", 0) != 0) continue;
    std::shared_ptr<MlpEvaluator> ev;
    std::string probe_name;
    double probe_value = 0.0;
    const std::uint64_t probe_seed = mix_seed(master, 9000 + static_cast<std::uint64_t>(idx));
    if (spec.kind == "mlp-alignment") {
      ev = train_alignment(world, sched, spec.hyper);
      probe_name = "matched_accuracy";
      probe_value = alignment_accuracy(*ev, world, sched, std::max(1, T / 10), 400, probe_seed);
    } else if (spec.kind == "mlp-reward") {
      const auto pairs = make_preference_pairs(world, spec.train_n,
                                               mix_seed(master, 100 + static_cast<std::uint64_t>(idx)));
      ev = train_reward(pairs, sched, spec.hyper);
      const auto held_out = make_preference_pairs(world, 200, probe_seed);
      probe_name = "pair_accuracy";
      probe_value = reward_pair_accuracy(*ev, held_out, sched, 1, probe_seed);
    } else {  // mlp-capability
      const auto dataset = make_capability_dataset(
          world, spec.train_n, mix_seed(master, 200 + static_cast<std::uint64_t>(idx)));
      ev = train_capability(dataset, sched, spec.hyper);
      const auto held_out = make_capability_dataset(world, 300, probe_seed);
      const auto probe = capability_probe(*ev, held_out, sched, 1, probe_seed);
      probe_name = "mse_over_variance";
      probe_value = probe.mse / std::max(probe.target_variance, 1e-12);
    }

    const fs::path target = fs::path(r.out) / spec.artifact;
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    save_evaluator(*ev, tmp.string());
    fs::rename(tmp, target);
    r.manifest.evaluator_artifacts[spec.artifact] = checksum_of_file(target.string());

    summary << spec.name << "," << spec.kind << "," << spec.artifact << "," << probe_name << ","
            << num(probe_value) << "\n";
    std::cout << "trained " << spec.name << " (" << spec.kind << "): " << probe_name << " = "
              << num(probe_value) << "\n";
    ++idx;
  }
  r.outputs["training_summary.csv"] = summary.str();
  finish(r);
  std::cout << "wrote " << r.out << "/training_summary.csv\n";
}

void cmd_sample(const CommonArgs& args, bool want_traces) {
  Run r = begin(args, want_traces ? "search" : "sample");
  const auto world = build_world(r.cfg.world);
  const auto sched = build_schedule(r.cfg.schedule);
  const auto& spec = required_policy(r.cfg, r.cfg.experiment.policy,
                                     want_traces ? "search" : "sample");
  if (want_traces && spec.kind != "dynamic")
    throw std::runtime_error("search needs a dynamic policy, '" + spec.name + "' is " +
                             spec.kind);
  const auto evals = build_evaluators(r, world, sched, evaluator_names({&spec}));
  const auto policy = build_policy(spec, evals, sched);
  const auto cells = cells_for(r.cfg, world);
  const auto pc = run_policy_cells(world, sched, policy, cells, sampler_of(r.cfg),
                                   workers_of(r.cfg), want_traces);
  r.outputs["samples.csv"] = samples_csv(world, cells, pc.samples);
  for (std::size_t i = 0; i < pc.traces.size(); ++i) {
    std::ostringstream os;
    write_trace_csv(pc.traces[i], os);
    r.outputs[trace_name(i)] = os.str();
  }
  finish(r);
  std::cout << "ran " << cells.size() << " cells under '" << spec.name << "' (denoiser calls "
            << pc.nfe.denoiser << ") -> " << r.out << "/samples.csv\n";
}

void cmd_filter(const CommonArgs& args) {
  Run r = begin(args, "filter");
  if (!r.cfg.has_filter) throw std::runtime_error("filter needs a [filter] section");
  const auto world = build_world(r.cfg.world);
  const auto sched = build_schedule(r.cfg.schedule);
  const auto& pspec = required_policy(r.cfg, r.cfg.filter.policy, "filter");
  auto names = evaluator_names({&pspec});
  names.insert(r.cfg.filter.evaluator);
  const auto evals = build_evaluators(r, world, sched, names);
  const auto policy = build_policy(pspec, evals, sched);
  const auto cells = cells_for(r.cfg, world);
  const auto sampler = sampler_of(r.cfg);

  FilterConfig fc;
  fc.B = r.cfg.filter.B;
  fc.K = r.cfg.filter.K;
  fc.fraction = r.cfg.filter.fraction;
  fc.evaluator = evals.at(r.cfg.filter.evaluator);

  std::ostringstream os;
  os << "# schema_version 1\n# B: " << fc.B << " K: " << fc.K
     << " fraction: " << num(fc.fraction) << "\n"
     << "cell,class,seed,kept,align_filtered,align_unfiltered\n";
  double sum_f = 0.0, sum_u = 0.0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cell = cells[i];
    const int cls = cell.cond.class_label();
    const auto res = filter_best_of(fc, world, sched, policy, cell.cond, cell.seed, sampler);
    // the unfiltered arm finishes the first of the B chain streams
    const auto base = run_guided_chain(world, sched, policy, cell.cond, mix_seed(cell.seed, 0),
                                       sampler);
    const double af = world.posterior_class_prob(res.samples[0], cls);
    const double au = world.posterior_class_prob(base.sample, cls);
    sum_f += af;
    sum_u += au;
    os << i << "," << cls << "," << cell.seed << ",";
    for (std::size_t k = 0; k < res.kept.size(); ++k) os << (k ? ";" : "") << res.kept[k];
    os << "," << num(af) << "," << num(au) << "\n";
  }
  const double n = static_cast<double>(cells.size());
  std::ostringstream sum;
  sum << "# schema_version 1\narm,cells,alignment,d_alignment\n"
      << "unfiltered," << cells.size() << "," << num(sum_u / n) << ",0\n"
      << "filtered," << cells.size() << "," << num(sum_f / n) << ","
      << num((sum_f - sum_u) / n) << "\n";
  r.outputs["filter_results.csv"] = os.str();
  r.outputs["filter_summary.csv"] = sum.str();
  finish(r);
  std::cout << "filtered " << cells.size() << " cells: alignment " << num(sum_u / n) << " -> "
            << num(sum_f / n) << "\n";
}

void cmd_compare(const CommonArgs& args, bool svg) {
  Run r = begin(args, "compare");
  const auto world = build_world(r.cfg.world);
  const auto sched = build_schedule(r.cfg.schedule);
  if (r.cfg.policies.empty()) throw std::runtime_error("compare needs at least one [policy]");

  std::set<std::string> names;
  for (const auto& p : r.cfg.policies)
    for (const auto& e : p.evaluators) names.insert(e);
  const auto evals = build_evaluators(r, world, sched, names);

  std::vector<PolicyEntry> entries;
  for (const auto& p : r.cfg.policies)
    entries.push_back({p.name, build_policy(p, evals, sched)});

  CompareConfig cc;
  cc.cells = r.cfg.experiment.cells;
  cc.truth_draws = r.cfg.experiment.truth_draws;
  cc.resamples = r.cfg.experiment.resamples;
  cc.master_seed = r.cfg.experiment.master_seed;
  cc.sampler = sampler_of(r.cfg);
  cc.workers = workers_of(r.cfg);
  if (!r.cfg.experiment.baseline.empty()) {
    for (std::size_t i = 0; i < r.cfg.policies.size(); ++i)
      if (r.cfg.policies[i].name == r.cfg.experiment.baseline)
        cc.baseline = static_cast<int>(i);
  }

  const auto rep = compare_policies(entries, world, sched, cc);
  std::ostringstream os;
  write_compare_csv(rep, os);
  r.outputs["table2_analog.csv"] = os.str();
  if (svg) r.outputs["table2_analog.svg"] = compare_svg(rep);
  finish(r);
  std::cout << "compared " << entries.size() << " policies over " << cc.cells << " cells -> "
            << r.out << "/table2_analog.csv\n";
}

void cmd_report(const CommonArgs& args, const std::string& verify_dir) {
  if (!verify_dir.empty()) {
    const auto problems = verify_manifest(verify_dir);
    for (const auto& p : problems) std::cerr << "error: " << p << "\n";
    if (!problems.empty())
      throw std::runtime_error("manifest verification failed (" +
                               std::to_string(problems.size()) + " problems)");
    const auto m = load_manifest(verify_dir);
    std::cout << "manifest ok: " << (m.outputs.size() + m.evaluator_artifacts.size())
              << " files verified\n";
    return;
  }
  Run r = begin(args, "report");
  const auto world = build_world(r.cfg.world);
  const auto sched = build_schedule(r.cfg.schedule);
  const int T = sched.steps();
  std::set<std::string> names;
  for (const auto& p : r.cfg.policies)
    for (const auto& e : p.evaluators) names.insert(e);
  const auto evals = build_evaluators(r, world, sched, names);

  for (const auto& spec : r.cfg.policies) {
    NfeCounter nfe;
    nfe.denoiser = 2L * T;  // per cell, whatever the candidate count
    std::vector<EvaluatorPtr> evs;
    std::size_t cand = 0;
    if (spec.kind == "dynamic") {
      const auto policy = build_policy(spec, evals, sched);
      const auto& dyn = std::get<DynamicPolicy>(policy);
      cand = dyn.candidates.size();
      evs = dyn.evaluators;
      nfe.evaluator_calls = static_cast<long>(T * cand * evs.size());
    }
    const auto rep = op_count_report(nfe, T, evs, cand, world);
    std::ostringstream os;
    write_op_count_csv(rep, os);
    r.outputs["ops_" + spec.name + ".csv"] = os.str();
  }
  finish(r);
  std::cout << "wrote per-policy op counts for " << r.cfg.policies.size() << " policies -> "
            << r.out << "\n";
}

void cmd_schedules(const std::string& traces_dir, const std::string& out_file, bool svg) {
  std::vector<fs::path> files;
  if (!fs::is_directory(traces_dir))
    throw std::runtime_error("'" + traces_dir + "' is not a directory");
  for (const auto& entry : fs::directory_iterator(traces_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no trace CSVs in '" + traces_dir + "'");

  std::vector<ScheduleTrace> traces;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw std::runtime_error("cannot read '" + f.string() + "'");
    traces.push_back(read_trace_csv(in));
  }
  const auto agg = aggregate_schedules(traces);
  std::ostringstream os;
  write_schedule_csv(agg, os);
  atomic_write_file(out_file, os.str());
  if (svg) {
    fs::path p(out_file);
    p.replace_extension(".svg");
    atomic_write_file(p.string(), schedule_svg(agg));
  }
  std::cout << "aggregated " << traces.size() << " traces -> " << out_file << "\n";
}

void add_common(CLI::App* sub, CommonArgs& args, bool config_required = true) {
  auto* c = sub->add_option("--config", args.config_path, "experiment config file");
  if (config_required) c->required();
  sub->add_option("--out", args.out_dir, "output directory");
  sub->add_option("--seed", args.seed, "override the config's master seed");
  sub->add_flag("--force", args.force, "allow writing into a directory that holds a run");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"guidance-scale search workbench on analytic mixture worlds"};
  app.require_subcommand(1);

  CommonArgs train_args, sample_args, search_args, filter_args, compare_args, report_args;
  bool compare_want_svg = false, sched_want_svg = false;
  std::string verify_dir, traces_dir, sched_out;

  auto* train = app.add_subcommand("train-evals", "train the learned evaluators in the config");
  add_common(train, train_args);
  train->callback([&] { cmd_train_evals(train_args); });

  auto* sample = app.add_subcommand("sample", "run experiment.policy over the cell grid");
  add_common(sample, sample_args);
  sample->callback([&] { cmd_sample(sample_args, false); });

  auto* search = app.add_subcommand("search",
                                    "run a dynamic policy and keep per-step schedule traces");
  add_common(search, search_args);
  search->callback([&] { cmd_sample(search_args, true); });

  auto* filter = app.add_subcommand("filter", "best-of-B partial-chain filtering per cell");
  add_common(filter, filter_args);
  filter->callback([&] { cmd_filter(filter_args); });

  auto* compare = app.add_subcommand("compare", "paired policy comparison table");
  add_common(compare, compare_args);
  compare->add_flag("--svg", compare_want_svg, "also render a bar-chart SVG");
  compare->callback([&] { cmd_compare(compare_args, compare_want_svg); });

  auto* report = app.add_subcommand("report",
                                    "op-count tables from a config, or --verify a run directory");
  add_common(report, report_args, false);
  report->add_option("--verify", verify_dir, "check a run directory against its manifest");
  report->callback([&] {
    if (verify_dir.empty() && report_args.config_path.empty())
      throw CLI::RequiredError("report: --config or --verify");
    cmd_report(report_args, verify_dir);
  });

  auto* schedules = app.add_subcommand("schedules", "aggregate schedule traces into one curve");
  schedules->add_option("--traces", traces_dir, "directory of trace CSVs")->required();
  schedules->add_option("--out", sched_out, "output CSV file")->required();
  schedules->add_flag("--svg", sched_want_svg, "also render the curve as SVG");
  schedules->callback([&] { cmd_schedules(traces_dir, sched_out, sched_want_svg); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    for (const auto& issue : e.issues())
      std::cerr << "error: config:" << issue.line << ": " << issue.message << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
