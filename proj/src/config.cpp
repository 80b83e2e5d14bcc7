#include "cfglab/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <set>
#include <sstream>

#include "cfglab/training.hpp"

namespace cfglab {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct RawEntry {
  std::string key, value;
  int line = 0;
  bool used = false;
};

struct RawSection {
  std::string kind, name;
  int line = 0;
  std::vector<RawEntry> entries;
};

struct Issues {
  std::vector<ConfigIssue> v;
  void add(int line, std::string msg) { v.push_back({line, std::move(msg)}); }
};

// Typed access to one raw section. Every read marks its key used; finish()
// flags whatever was never asked for as unknown.
class SectionReader {
 public:
  SectionReader(RawSection& sec, Issues& issues) : sec_(sec), issues_(issues) {}

  bool has(const std::string& key) const {
    return std::any_of(sec_.entries.begin(), sec_.entries.end(),
                       [&](const RawEntry& e) { return e.key == key; });
  }

  int line_of(const std::string& key) const {
    for (const auto& e : sec_.entries)
      if (e.key == key) return e.line;
    return sec_.line;
  }

  std::optional<std::string> str(const std::string& key) {
    const RawEntry* e = take(key);
    if (!e) return std::nullopt;
    return e->value;
  }

  std::optional<long long> integer(const std::string& key) {
    const RawEntry* e = take(key);
    if (!e) return std::nullopt;
    char* end = nullptr;
    const long long v = std::strtoll(e->value.c_str(), &end, 10);
    if (end == e->value.c_str() || *end != '\0') {
      issues_.add(e->line, "key '" + sec_.kind + "." + key + "' expects an integer, got '" +
                               e->value + "'");
      return std::nullopt;
    }
    return v;
  }

  std::optional<double> number(const std::string& key) {
    const RawEntry* e = take(key);
    if (!e) return std::nullopt;
    return parse_number(*e, key);
  }

  std::optional<std::vector<double>> num_list(const std::string& key) {
    const RawEntry* e = take(key);
    if (!e) return std::nullopt;
    auto items = split_list(*e, key);
    if (!items) return std::nullopt;
    std::vector<double> out;
    for (const auto& item : *items) {
      RawEntry fake{key, item, e->line, true};
      auto v = parse_number(fake, key);
      if (!v) return std::nullopt;
      out.push_back(*v);
    }
    return out;
  }

  std::optional<std::vector<std::string>> str_list(const std::string& key) {
    const RawEntry* e = take(key);
    if (!e) return std::nullopt;
    return split_list(*e, key);
  }

  std::optional<std::string> enum_str(const std::string& key,
                                      const std::vector<std::string>& allowed) {
    const RawEntry* e = take(key);
    if (!e) return std::nullopt;
    if (std::find(allowed.begin(), allowed.end(), e->value) == allowed.end()) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
      issues_.add(e->line, "key '" + sec_.kind + "." + key + "' must be one of {" + opts +
                               "}, got '" + e->value + "'");
      return std::nullopt;
    }
    return e->value;
  }

  void finish() {
    for (const auto& e : sec_.entries) {
      if (!e.used) issues_.add(e.line, "unknown key '" + e.key + "' in [" + header() + "]");
    }
  }

  std::string header() const {
    return sec_.name.empty() ? sec_.kind : sec_.kind + " " + sec_.name;
  }

 private:
  RawEntry* take(const std::string& key) {
    for (auto& e : sec_.entries) {
      if (e.key == key) {
        e.used = true;
        return &e;
      }
    }
    return nullptr;
  }

  std::optional<double> parse_number(const RawEntry& e, const std::string& key) {
    char* end = nullptr;
    const double v = std::strtod(e.value.c_str(), &end);
    if (end == e.value.c_str() || *end != '\0') {
      issues_.add(e.line,
                  "key '" + sec_.kind + "." + key + "' expects a number, got '" + e.value + "'");
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::vector<std::string>> split_list(const RawEntry& e, const std::string& key) {
    const std::string& v = e.value;
    if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
      issues_.add(e.line, "key '" + sec_.kind + "." + key + "' expects a [..] list, got '" + v +
                              "'");
      return std::nullopt;
    }
    std::vector<std::string> out;
    std::string inner = v.substr(1, v.size() - 2);
    std::size_t pos = 0;
    while (pos <= inner.size()) {
      std::size_t comma = inner.find(',', pos);
      if (comma == std::string::npos) comma = inner.size();
      std::string item = trim(inner.substr(pos, comma - pos));
      if (!item.empty()) out.push_back(item);
      pos = comma + 1;
    }
    return out;
  }

  RawSection& sec_;
  Issues& issues_;
};

std::vector<RawSection> tokenize(const std::string& text, Issues& issues) {
  std::vector<RawSection> sections;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::string line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        issues.add(line_no, "unterminated section header '" + line + "'");
        continue;
      }
      std::string header = trim(line.substr(1, line.size() - 2));
      RawSection sec;
      sec.line = line_no;
      std::size_t sp = header.find_first_of(" \t");
      if (sp == std::string::npos) {
        sec.kind = header;
      } else {
        sec.kind = header.substr(0, sp);
        sec.name = trim(header.substr(sp));
      }
      if (sec.kind.empty()) {
        issues.add(line_no, "empty section header");
        continue;
      }
      sections.push_back(std::move(sec));
      continue;
    }

    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      issues.add(line_no, "expected 'key = value', got '" + line + "'");
      continue;
    }
    if (sections.empty()) {
      issues.add(line_no, "key outside any [section]");
      continue;
    }
    RawEntry entry;
    entry.key = trim(line.substr(0, eq));
    entry.value = trim(line.substr(eq + 1));
    entry.line = line_no;
    if (entry.key.empty()) {
      issues.add(line_no, "empty key");
      continue;
    }
    auto& entries = sections.back().entries;
    const auto dup = std::find_if(entries.begin(), entries.end(),
                                  [&](const RawEntry& e) { return e.key == entry.key; });
    if (dup != entries.end()) {
      issues.add(line_no, "duplicate key '" + entry.key + "' in [" + sections.back().kind +
                              "] (first at line " + std::to_string(dup->line) + ")");
      continue;
    }
    entries.push_back(std::move(entry));
  }
  return sections;
}

void read_world(RawSection& sec, RunConfig& cfg, Issues& issues) {
  SectionReader r(sec, issues);
  const bool inline_world = r.has("dim") || r.has("classes") || r.has("priors");
  if (r.has("preset") && inline_world) {
    issues.add(sec.line, "[world] takes either 'preset' or an inline definition, not both");
  }
  if (auto p = r.enum_str("preset", {"default", "hard"})) cfg.world.preset = *p;
  if (auto d = r.integer("dim")) {
    if (*d < 1)
      issues.add(r.line_of("dim"), "world.dim must be at least 1");
    else
      cfg.world.dim = static_cast<int>(*d);
  }
  if (auto c = r.integer("classes")) {
    if (*c < 1)
      issues.add(r.line_of("classes"), "world.classes must be at least 1");
    else
      cfg.world.classes = static_cast<int>(*c);
  }
  if (auto p = r.num_list("priors")) cfg.world.priors = *p;
  r.finish();
}

void read_component(RawSection& sec, RunConfig& cfg, Issues& issues) {
  SectionReader r(sec, issues);
  GaussianComponent comp;
  int cls = -1;
  if (auto c = r.integer("class"))
    cls = static_cast<int>(*c);
  else if (!r.has("class"))
    issues.add(sec.line, "[component] requires 'class'");
  if (auto w = r.number("weight")) comp.weight = *w;
  if (auto m = r.num_list("mean"))
    comp.mean = *m;
  else if (!r.has("mean"))
    issues.add(sec.line, "[component] requires 'mean'");

  const bool has_diag = r.has("cov_diag"), has_full = r.has("cov");
  if (has_diag && has_full)
    issues.add(sec.line, "[component] takes either 'cov_diag' or 'cov', not both");
  if (!has_diag && !has_full) issues.add(sec.line, "[component] requires 'cov_diag' or 'cov'");
  const std::size_t d = comp.mean.size();
  if (auto diag = r.num_list("cov_diag")) {
    if (d > 0 && diag->size() != d) {
      issues.add(r.line_of("cov_diag"), "component.cov_diag needs " + std::to_string(d) +
                                            " entries to match the mean");
    } else {
      comp.cov.assign(d, std::vector<double>(d, 0.0));
      for (std::size_t i = 0; i < d; ++i) comp.cov[i][i] = (*diag)[i];
    }
  }
  if (auto full = r.num_list("cov")) {
    if (d > 0 && full->size() != d * d) {
      issues.add(r.line_of("cov"), "component.cov needs " + std::to_string(d * d) +
                                       " row-major entries to match the mean");
    } else {
      comp.cov.assign(d, std::vector<double>(d, 0.0));
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) comp.cov[i][j] = (*full)[i * d + j];
    }
  }
  r.finish();

  if (cls < 0) return;
  if (static_cast<std::size_t>(cls) >= cfg.world.components.size())
    cfg.world.components.resize(static_cast<std::size_t>(cls) + 1);
  cfg.world.components[static_cast<std::size_t>(cls)].push_back(std::move(comp));
}

void read_schedule(RawSection& sec, RunConfig& cfg, Issues& issues) {
  SectionReader r(sec, issues);
  if (auto f = r.enum_str("family", {"cosine", "linear"})) cfg.schedule.family = *f;
  if (auto s = r.integer("steps")) {
    if (*s < 1)
      issues.add(r.line_of("steps"), "schedule.steps must be at least 1");
    else
      cfg.schedule.steps = static_cast<int>(*s);
  }
  r.finish();
}

void read_evaluator(RawSection& sec, RunConfig& cfg, Issues& issues) {
  SectionReader r(sec, issues);
  EvaluatorSpec spec;
  spec.name = sec.name;
  if (sec.name.empty()) issues.add(sec.line, "[evaluator] sections need a name: [evaluator foo]");
  if (auto k = r.enum_str("kind", {"alignment-oracle", "quality-oracle", "mlp-alignment",
                                   "mlp-reward", "mlp-capability"})) {
    spec.kind = *k;
  } else if (!r.has("kind")) {
    issues.add(sec.line, "[evaluator " + sec.name + "] requires 'kind'");
  }
  if (auto a = r.str("artifact")) spec.artifact = *a;
  if (spec.artifact.empty()) spec.artifact = spec.name + ".bin";
  if (auto n = r.integer("train_n")) spec.train_n = static_cast<int>(*n);

  auto& h = spec.hyper;
  if (auto v = r.integer("steps")) h.steps = static_cast<int>(*v);
  if (auto v = r.integer("batch")) h.batch = static_cast<int>(*v);
  if (auto v = r.number("lr")) h.lr = *v;
  if (auto v = r.number("momentum")) h.momentum = *v;
  if (auto v = r.integer("seed")) h.seed = static_cast<std::uint64_t>(*v);
  if (auto v = r.number("temperature")) h.temperature = *v;
  if (auto v = r.integer("t_min")) h.t_min = static_cast<int>(*v);
  if (auto v = r.integer("t_max")) h.t_max = static_cast<int>(*v);
  if (auto v = r.number("weight_floor")) h.weight_floor = *v;
  if (auto v = r.number("weight_k")) h.weight_k = *v;
  if (auto v = r.enum_str("ramp", {"exponential", "linear"}))
    h.ramp = (*v == "linear") ? LossWeightSchedule::Ramp::linear
                              : LossWeightSchedule::Ramp::exponential;
  if (auto v = r.integer("hidden")) h.hidden = static_cast<int>(*v);
  if (auto v = r.integer("hidden_layers")) h.hidden_layers = static_cast<int>(*v);
  if (auto v = r.integer("time_embed")) h.time_embed = static_cast<int>(*v);
  if (auto v = r.integer("class_embed")) h.class_embed = static_cast<int>(*v);
  r.finish();
  cfg.evaluators.push_back(std::move(spec));
}

void read_policy(RawSection& sec, RunConfig& cfg, Issues& issues) {
  SectionReader r(sec, issues);
  PolicySpec spec;
  spec.name = sec.name;
  if (sec.name.empty()) issues.add(sec.line, "[policy] sections need a name: [policy foo]");
  if (auto k = r.enum_str("kind", {"fixed", "interval", "annealing", "lookup", "dynamic"})) {
    spec.kind = *k;
  } else if (!r.has("kind")) {
    issues.add(sec.line, "[policy " + sec.name + "] requires 'kind'");
  }
  if (auto v = r.number("scale")) spec.scale = *v;
  if (auto v = r.number("s_hi")) spec.s_hi = *v;
  if (auto v = r.integer("t_lo")) spec.t_lo = static_cast<int>(*v);
  if (auto v = r.integer("t_hi")) spec.t_hi = static_cast<int>(*v);
  if (auto v = r.number("s_out")) spec.s_out = *v;
  if (auto v = r.number("s_start")) spec.s_start = *v;
  if (auto v = r.number("s_end")) spec.s_end = *v;
  if (auto v = r.enum_str("shape", {"linear", "cosine"})) spec.shape = *v;
  if (auto v = r.num_list("table")) spec.table = *v;
  if (auto v = r.num_list("candidates")) {
    spec.candidates = *v;
    if (!std::is_sorted(spec.candidates.begin(), spec.candidates.end()) ||
        std::adjacent_find(spec.candidates.begin(), spec.candidates.end()) !=
            spec.candidates.end()) {
      issues.add(r.line_of("candidates"), "policy.candidates must be strictly increasing");
    }
  }
  if (auto v = r.str_list("evaluators")) spec.evaluators = *v;
  if (auto v = r.enum_str("weighting", {"linear", "adaptive"})) spec.weighting = *v;
  if (auto v = r.num_list("coefficients")) spec.coefficients = *v;
  if (auto v = r.number("tie_default")) spec.tie_default = *v;

  if (spec.kind == "interval" && spec.t_lo > spec.t_hi)
    issues.add(sec.line, "policy.t_lo must not exceed policy.t_hi");
  if (spec.kind == "dynamic" && r.has("evaluators") && spec.evaluators.empty())
    issues.add(r.line_of("evaluators"), "dynamic policy needs at least one evaluator");
  r.finish();
  cfg.policies.push_back(std::move(spec));
}

void read_experiment(RawSection& sec, RunConfig& cfg, Issues& issues) {
  SectionReader r(sec, issues);
  auto& e = cfg.experiment;
  auto pos_int = [&](const char* key, int& slot) {
    if (auto v = r.integer(key)) {
      if (*v < 1)
        issues.add(r.line_of(key), std::string("experiment.") + key + " must be at least 1");
      else
        slot = static_cast<int>(*v);
    }
  };
  pos_int("cells", e.cells);
  pos_int("truth_draws", e.truth_draws);
  pos_int("resamples", e.resamples);
  if (auto v = r.integer("master_seed")) e.master_seed = static_cast<std::uint64_t>(*v);
  if (auto v = r.enum_str("sampler", {"ddpm", "ddim"})) e.sampler = *v;
  if (auto v = r.integer("workers")) {
    if (*v < 0)
      issues.add(r.line_of("workers"), "experiment.workers must be 0 (auto) or positive");
    else
      e.workers = static_cast<int>(*v);
  }
  if (auto v = r.str("baseline")) e.baseline = *v;
  if (auto v = r.str("policy")) e.policy = *v;
  if (auto v = r.num_list("conds")) {
    for (double c : *v) {
      if (c < 0 || c != static_cast<int>(c)) {
        issues.add(r.line_of("conds"), "experiment.conds must be non-negative class labels");
        break;
      }
      e.conds.push_back(static_cast<int>(c));
    }
  }
  r.finish();
}

void read_filter(RawSection& sec, RunConfig& cfg, Issues& issues) {
  SectionReader r(sec, issues);
  auto& f = cfg.filter;
  cfg.has_filter = true;
  if (auto v = r.integer("B")) {
    if (*v < 1)
      issues.add(r.line_of("B"), "filter.B must be at least 1");
    else
      f.B = static_cast<int>(*v);
  }
  if (auto v = r.integer("K")) {
    if (*v < 1)
      issues.add(r.line_of("K"), "filter.K must be at least 1");
    else
      f.K = static_cast<int>(*v);
  }
  if (f.K > f.B) {
    issues.add(r.line_of("K"), "filter.K (" + std::to_string(f.K) +
                                   ") must not exceed filter.B (" + std::to_string(f.B) + ")");
  }
  if (auto v = r.number("fraction")) {
    if (*v <= 0.0 || *v > 1.0)
      issues.add(r.line_of("fraction"), "filter.fraction must lie in (0, 1]");
    else
      f.fraction = *v;
  }
  if (auto v = r.str("evaluator")) f.evaluator = *v;
  if (auto v = r.str("policy")) f.policy = *v;
  r.finish();
}

void read_output(RawSection& sec, RunConfig& cfg, Issues& issues) {
  SectionReader r(sec, issues);
  if (auto v = r.str("dir")) cfg.output_dir = *v;
  r.finish();
}

void cross_validate(const std::vector<RawSection>& sections, RunConfig& cfg, Issues& issues) {
  auto line_of_section = [&](const std::string& kind, const std::string& name) {
    for (const auto& s : sections)
      if (s.kind == kind && s.name == name) return s.line;
    return 0;
  };

  // name uniqueness
  std::set<std::string> seen;
  for (const auto& ev : cfg.evaluators) {
    if (!ev.name.empty() && !seen.insert("e:" + ev.name).second)
      issues.add(line_of_section("evaluator", ev.name),
                 "duplicate evaluator name '" + ev.name + "'");
  }
  for (const auto& p : cfg.policies) {
    if (!p.name.empty() && !seen.insert("p:" + p.name).second)
      issues.add(line_of_section("policy", p.name), "duplicate policy name '" + p.name + "'");
  }

  // world: preset or complete inline definition
  if (cfg.world.preset.empty()) {
    if (cfg.world.dim < 1 || cfg.world.classes < 1) {
      issues.add(line_of_section("world", ""),
                 "[world] needs a preset or an inline 'dim' and 'classes'");
    } else {
      if (!cfg.world.priors.empty() &&
          cfg.world.priors.size() != static_cast<std::size_t>(cfg.world.classes)) {
        issues.add(line_of_section("world", ""), "world.priors needs one entry per class");
      }
      if (cfg.world.components.size() > static_cast<std::size_t>(cfg.world.classes)) {
        issues.add(line_of_section("world", ""),
                   "a [component] names a class beyond world.classes");
      }
      cfg.world.components.resize(static_cast<std::size_t>(cfg.world.classes));
      for (int c = 0; c < cfg.world.classes; ++c) {
        if (cfg.world.components[static_cast<std::size_t>(c)].empty())
          issues.add(line_of_section("world", ""),
                     "class " + std::to_string(c) + " has no [component]");
      }
      for (const auto& cls : cfg.world.components) {
        for (const auto& comp : cls) {
          if (!comp.mean.empty() && comp.mean.size() != static_cast<std::size_t>(cfg.world.dim))
            issues.add(line_of_section("world", ""),
                       "a [component] mean does not match world.dim");
        }
      }
    }
  } else if (!cfg.world.components.empty()) {
    issues.add(line_of_section("world", ""), "[component] sections need an inline [world]");
  }

  const int classes = !cfg.world.preset.empty() ? 2 : cfg.world.classes;
  for (int c : cfg.experiment.conds) {
    if (classes > 0 && c >= classes) {
      issues.add(line_of_section("experiment", ""),
                 "experiment.conds labels a class beyond the world's " + std::to_string(classes));
      break;
    }
  }

  auto check_eval_ref = [&](const std::string& name, int line, const std::string& owner) {
    if (name.empty()) return;
    if (!cfg.find_evaluator(name))
      issues.add(line, owner + " references unknown evaluator '" + name + "'");
  };
  auto check_policy_ref = [&](const std::string& name, int line, const std::string& owner) {
    if (name.empty()) return;
    if (!cfg.find_policy(name))
      issues.add(line, owner + " references unknown policy '" + name + "'");
  };

  for (const auto& p : cfg.policies) {
    const int line = line_of_section("policy", p.name);
    if (p.kind == "dynamic") {
      if (p.evaluators.empty())
        issues.add(line, "[policy " + p.name + "] is dynamic but lists no evaluators");
      for (const auto& ev : p.evaluators)
        check_eval_ref(ev, line, "[policy " + p.name + "]");
      if (!p.coefficients.empty() && p.coefficients.size() != p.evaluators.size())
        issues.add(line, "[policy " + p.name + "] coefficients need one entry per evaluator");
    }
    if (p.kind == "lookup") {
      if (p.table.empty())
        issues.add(line, "[policy " + p.name + "] is lookup but has no table");
      else if (p.table.size() != static_cast<std::size_t>(cfg.schedule.steps))
        issues.add(line, "[policy " + p.name + "] table needs " +
                             std::to_string(cfg.schedule.steps) + " entries, one per step");
    }
  }

  const int exp_line = line_of_section("experiment", "");
  check_policy_ref(cfg.experiment.baseline, exp_line, "experiment.baseline");
  check_policy_ref(cfg.experiment.policy, exp_line, "experiment.policy");
  if (cfg.has_filter) {
    const int fline = line_of_section("filter", "");
    if (cfg.filter.evaluator.empty())
      issues.add(fline, "[filter] requires 'evaluator'");
    else
      check_eval_ref(cfg.filter.evaluator, fline, "[filter]");
    if (cfg.filter.policy.empty())
      issues.add(fline, "[filter] requires 'policy'");
    else
      check_policy_ref(cfg.filter.policy, fline, "[filter]");
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : std::runtime_error(render(issues)), issues_(std::move(issues)) {}

std::string ConfigError::render(const std::vector<ConfigIssue>& issues) {
  std::string out = "config has " + std::to_string(issues.size()) +
                    (issues.size() == 1 ? " problem" : " problems");
  for (const auto& i : issues) out += "\n  line " + std::to_string(i.line) + ": " + i.message;
  return out;
}

const PolicySpec* RunConfig::find_policy(const std::string& name) const {
  for (const auto& p : policies)
    if (p.name == name) return &p;
  return nullptr;
}

const EvaluatorSpec* RunConfig::find_evaluator(const std::string& name) const {
  for (const auto& e : evaluators)
    if (e.name == name) return &e;
  return nullptr;
}

RunConfig parse_config(const std::string& text) {
  Issues issues;
  auto sections = tokenize(text, issues);
  RunConfig cfg;
  bool saw_world = false, saw_schedule = false, saw_experiment = false, saw_filter = false,
       saw_output = false;
  for (auto& sec : sections) {
    if (sec.kind != "policy" && sec.kind != "evaluator" && !sec.name.empty()) {
      issues.add(sec.line, "[" + sec.kind + "] does not take a name");
      sec.name.clear();
    }
    auto once = [&](bool& flag) {
      if (flag) issues.add(sec.line, "repeated [" + sec.kind + "] section");
      flag = true;
    };
    if (sec.kind == "world") {
      once(saw_world);
      read_world(sec, cfg, issues);
    } else if (sec.kind == "component") {
      read_component(sec, cfg, issues);
    } else if (sec.kind == "schedule") {
      once(saw_schedule);
      read_schedule(sec, cfg, issues);
    } else if (sec.kind == "evaluator") {
      read_evaluator(sec, cfg, issues);
    } else if (sec.kind == "policy") {
      read_policy(sec, cfg, issues);
    } else if (sec.kind == "experiment") {
      once(saw_experiment);
      read_experiment(sec, cfg, issues);
    } else if (sec.kind == "filter") {
      once(saw_filter);
      read_filter(sec, cfg, issues);
    } else if (sec.kind == "output") {
      once(saw_output);
      read_output(sec, cfg, issues);
    } else {
      issues.add(sec.line, "unknown section [" + sec.kind + "]");
    }
  }
  cross_validate(sections, cfg, issues);
  if (!issues.v.empty()) throw ConfigError(std::move(issues.v));
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  auto list = [&](const std::vector<double>& v) {
    out << "[";
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ", " : "") << fmt_num(v[i]);
    out << "]";
  };

  out << "[world]\n";
  if (!cfg.world.preset.empty()) {
    out << "preset = " << cfg.world.preset << "\n";
  } else {
    out << "dim = " << cfg.world.dim << "\nclasses = " << cfg.world.classes << "\n";
    if (!cfg.world.priors.empty()) {
      out << "priors = ";
      list(cfg.world.priors);
      out << "\n";
    }
  }
  out << "\n[schedule]\nfamily = " << cfg.schedule.family << "\nsteps = " << cfg.schedule.steps
      << "\n";
  if (cfg.world.preset.empty()) {
    for (std::size_t c = 0; c < cfg.world.components.size(); ++c) {
      for (const auto& comp : cfg.world.components[c]) {
        out << "\n[component]\nclass = " << c << "\nweight = " << fmt_num(comp.weight)
            << "\nmean = ";
        list(comp.mean);
        out << "\ncov = ";
        std::vector<double> flat;
        for (const auto& row : comp.cov) flat.insert(flat.end(), row.begin(), row.end());
        list(flat);
        out << "\n";
      }
    }
  }
  for (const auto& ev : cfg.evaluators) {
    out << "\n[evaluator " << ev.name << "]\nkind = " << ev.kind << "\n";
    if (ev.kind.rfind("mlp-", 0) == 0) {
      const auto& h = ev.hyper;
      out << "artifact = " << ev.artifact << "\ntrain_n = " << ev.train_n
          << "\nsteps = " << h.steps << "\nbatch = " << h.batch << "\nlr = " << fmt_num(h.lr)
          << "\nmomentum = " << fmt_num(h.momentum) << "\nseed = " << h.seed
          << "\ntemperature = " << fmt_num(h.temperature) << "\nt_min = " << h.t_min
          << "\nt_max = " << h.t_max << "\nweight_floor = " << fmt_num(h.weight_floor)
          << "\nweight_k = " << fmt_num(h.weight_k) << "\nramp = "
          << (h.ramp == LossWeightSchedule::Ramp::linear ? "linear" : "exponential")
          << "\nhidden = " << h.hidden << "\nhidden_layers = " << h.hidden_layers
          << "\ntime_embed = " << h.time_embed << "\nclass_embed = " << h.class_embed << "\n";
    }
  }
  for (const auto& p : cfg.policies) {
    out << "\n[policy " << p.name << "]\nkind = " << p.kind << "\n";
    if (p.kind == "fixed") {
      out << "scale = " << fmt_num(p.scale) << "\n";
    } else if (p.kind == "interval") {
      out << "s_hi = " << fmt_num(p.s_hi) << "\nt_lo = " << p.t_lo << "\nt_hi = " << p.t_hi
          << "\ns_out = " << fmt_num(p.s_out) << "\n";
    } else if (p.kind == "annealing") {
      out << "s_start = " << fmt_num(p.s_start) << "\ns_end = " << fmt_num(p.s_end)
          << "\nshape = " << p.shape << "\n";
    } else if (p.kind == "lookup") {
      out << "table = ";
      list(p.table);
      out << "\n";
    } else if (p.kind == "dynamic") {
      out << "candidates = ";
      list(p.candidates);
      out << "\nevaluators = [";
      for (std::size_t i = 0; i < p.evaluators.size(); ++i)
        out << (i ? ", " : "") << p.evaluators[i];
      out << "]\nweighting = " << p.weighting << "\n";
      if (!p.coefficients.empty()) {
        out << "coefficients = ";
        list(p.coefficients);
        out << "\n";
      }
      out << "tie_default = " << fmt_num(p.tie_default) << "\n";
    }
  }
  const auto& e = cfg.experiment;
  out << "\n[experiment]\ncells = " << e.cells << "\ntruth_draws = " << e.truth_draws
      << "\nresamples = " << e.resamples << "\nmaster_seed = " << e.master_seed
      << "\nsampler = " << e.sampler << "\nworkers = " << e.workers << "\n";
  if (!e.baseline.empty()) out << "baseline = " << e.baseline << "\n";
  if (!e.policy.empty()) out << "policy = " << e.policy << "\n";
  if (!e.conds.empty()) {
    std::vector<double> conds(e.conds.begin(), e.conds.end());
    out << "conds = ";
    list(conds);
    out << "\n";
  }
  if (cfg.has_filter) {
    const auto& f = cfg.filter;
    out << "\n[filter]\nB = " << f.B << "\nK = " << f.K << "\nfraction = " << fmt_num(f.fraction)
        << "\nevaluator = " << f.evaluator << "\npolicy = " << f.policy << "\n";
  }
  if (!cfg.output_dir.empty()) out << "\n[output]\ndir = " << cfg.output_dir << "\n";
  return out.str();
}

MixtureWorld build_world(const WorldSpec& spec) {
  if (!spec.preset.empty()) return MixtureWorld::preset(spec.preset);
  std::vector<double> priors = spec.priors;
  if (priors.empty())
    priors.assign(static_cast<std::size_t>(spec.classes), 1.0 / spec.classes);
  return MixtureWorld::from_components(spec.components, priors);
}

NoiseSchedule build_schedule(const ScheduleSpec& spec) {
  return spec.family == "linear" ? NoiseSchedule::linear(spec.steps)
                                 : NoiseSchedule::cosine(spec.steps);
}

EvaluatorPtr build_evaluator(const EvaluatorSpec& spec, const MixtureWorld& world,
                             const NoiseSchedule& sched, const std::string& artifact_root) {
  if (spec.kind == "alignment-oracle") return std::make_shared<AlignmentOracle>(world, sched);
  if (spec.kind == "quality-oracle") return std::make_shared<QualityOracle>(world, sched);
  std::string path = spec.artifact;
  if (!artifact_root.empty() && !path.empty() && path.front() != '/')
    path = artifact_root + "/" + path;
  return load_evaluator(path);
}

GuidancePolicy build_policy(const PolicySpec& spec,
                            const std::map<std::string, EvaluatorPtr>& evaluators,
                            const NoiseSchedule& sched) {
  if (spec.kind == "fixed") return FixedPolicy{spec.scale};
  if (spec.kind == "interval") return IntervalPolicy{spec.s_hi, spec.t_lo, spec.t_hi, spec.s_out};
  if (spec.kind == "annealing") {
    AnnealingPolicy p;
    p.s_start = spec.s_start;
    p.s_end = spec.s_end;
    p.shape = spec.shape == "cosine" ? AnnealingPolicy::Shape::cosine
                                     : AnnealingPolicy::Shape::linear;
    return p;
  }
  if (spec.kind == "lookup") {
    if (spec.table.size() != static_cast<std::size_t>(sched.steps()))
      throw std::invalid_argument("lookup table does not match the schedule length");
    return StaticLookupPolicy{spec.table};
  }
  if (spec.kind == "dynamic") {
    DynamicPolicy p;
    if (!spec.candidates.empty()) p.candidates = GuidanceCandidateSet(spec.candidates);
    for (const auto& name : spec.evaluators) {
      const auto it = evaluators.find(name);
      if (it == evaluators.end())
        throw std::invalid_argument("policy '" + spec.name + "' references unbuilt evaluator '" +
                                    name + "'");
      p.evaluators.push_back(it->second);
    }
    p.weighting = spec.weighting == "linear" ? Weighting::linear : Weighting::adaptive;
    p.coefficients = spec.coefficients;
    p.tie_default = spec.tie_default;
    return p;
  }
  throw std::invalid_argument("unknown policy kind '" + spec.kind + "'");
}

}  // namespace cfglab
