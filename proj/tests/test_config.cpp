#include <algorithm>
#include <string>
#include <vector>

#include "cfglab/config.hpp"
#include "doctest.h"

using namespace cfglab;

namespace {

const char* kMinimal = R"cfg(
[world]
preset = default

[schedule]
family = cosine
steps = 40

[policy base]
kind = fixed
scale = 7.5

[experiment]
cells = 10
master_seed = 3
)cfg";

std::vector<ConfigIssue> issues_of(const std::string& text) {
  try {
    (void)parse_config(text);
  } catch (const ConfigError& e) {
    return e.issues();
  }
  return {};
}

bool mentions(const std::vector<ConfigIssue>& issues, const std::string& needle) {
  return std::any_of(issues.begin(), issues.end(), [&](const ConfigIssue& i) {
    return i.message.find(needle) != std::string::npos;
  });
}

}  // namespace

TEST_CASE("minimal config parses with defaults intact") {
  const auto cfg = parse_config(kMinimal);
  CHECK(cfg.world.preset == "default");
  CHECK(cfg.schedule.family == "cosine");
  CHECK(cfg.schedule.steps == 40);
  REQUIRE(cfg.policies.size() == 1);
  CHECK(cfg.policies[0].name == "base");
  CHECK(cfg.policies[0].kind == "fixed");
  CHECK(cfg.policies[0].scale == 7.5);
  CHECK(cfg.experiment.cells == 10);
  CHECK(cfg.experiment.master_seed == 3);
  CHECK(cfg.experiment.truth_draws == 5000);
  CHECK(cfg.experiment.sampler == "ddpm");
  CHECK_FALSE(cfg.has_filter);
}

TEST_CASE("candidate sets round-trip through parse and serialize") {
  std::string text = kMinimal;
  text +=
      "\n[evaluator align]\nkind = alignment-oracle\n"
      "\n[policy dyn]\nkind = dynamic\ncandidates = [1, 3, 7.5, 11, 15]\n"
      "evaluators = [align]\nweighting = adaptive\n";
  const auto cfg = parse_config(text);
  const auto* dyn = cfg.find_policy("dyn");
  REQUIRE(dyn != nullptr);
  CHECK(dyn->candidates == std::vector<double>{1.0, 3.0, 7.5, 11.0, 15.0});

  const auto again = parse_config(serialize_config(cfg));
  CHECK(again.find_policy("dyn")->candidates == dyn->candidates);
  // canonical form is a fixed point
  CHECK(serialize_config(again) == serialize_config(cfg));
}

TEST_CASE("filter K above B is one error naming both keys") {
  std::string text = kMinimal;
  text += "\n[evaluator align]\nkind = alignment-oracle\n"
          "\n[filter]\nB = 4\nK = 8\nevaluator = align\npolicy = base\n";
  const auto issues = issues_of(text);
  REQUIRE(issues.size() == 1);
  CHECK(mentions(issues, "filter.K"));
  CHECK(mentions(issues, "filter.B"));
}

TEST_CASE("unknown keys and sections are rejected with their line numbers") {
  const std::string text =
      "[world]\n"          // line 1
      "preset = default\n" // line 2
      "typo_key = 3\n"     // line 3
      "\n"
      "[nonsense]\n"       // line 5
      "\n"
      "[schedule]\n"
      "steps = 40\n"
      "\n"
      "[policy p]\n"
      "kind = fixed\n";
  const auto issues = issues_of(text);
  REQUIRE(issues.size() == 2);
  CHECK(issues[0].line == 3);
  CHECK(mentions({issues[0]}, "typo_key"));
  CHECK(issues[1].line == 5);
  CHECK(mentions({issues[1]}, "nonsense"));
}

TEST_CASE("every problem is reported, not just the first") {
  const std::string text =
      "[world]\n"
      "preset = nowhere\n"     // bad enum
      "[schedule]\n"
      "steps = many\n"         // type error
      "[policy p]\n"
      "kind = fixed\n"
      "scale = [1, 2]\n"       // type error
      "[experiment]\n"
      "cells = 0\n"            // constraint
      "baseline = ghost\n";    // dangling reference
  const auto issues = issues_of(text);
  CHECK(issues.size() >= 5);
  CHECK(mentions(issues, "world.preset"));
  CHECK(mentions(issues, "schedule.steps"));
  CHECK(mentions(issues, "policy.scale"));
  CHECK(mentions(issues, "experiment.cells"));
  CHECK(mentions(issues, "unknown policy 'ghost'"));
}

TEST_CASE("duplicate keys, repeated sections, and name collisions are errors") {
  std::string text = kMinimal;
  text += "\n[policy base]\nkind = fixed\n";
  CHECK(mentions(issues_of(text), "duplicate policy name 'base'"));

  text = kMinimal;
  text += "\n[schedule]\nsteps = 10\n";
  CHECK(mentions(issues_of(text), "repeated [schedule]"));

  const std::string dup =
      "[world]\npreset = default\npreset = hard\n[schedule]\nsteps = 4\n[policy p]\nkind = fixed\n";
  CHECK(mentions(issues_of(dup), "duplicate key 'preset'"));
}

TEST_CASE("dynamic policies validate their evaluator references") {
  std::string text = kMinimal;
  text += "\n[policy dyn]\nkind = dynamic\ncandidates = [1, 15]\nevaluators = [ghost]\n";
  CHECK(mentions(issues_of(text), "unknown evaluator 'ghost'"));

  text = kMinimal;
  text += "\n[policy dyn]\nkind = dynamic\ncandidates = [1, 15]\n";
  CHECK(mentions(issues_of(text), "lists no evaluators"));

  text = kMinimal;
  text += "\n[evaluator a]\nkind = quality-oracle\n"
          "\n[policy dyn]\nkind = dynamic\ncandidates = [15, 1]\nevaluators = [a]\n";
  CHECK(mentions(issues_of(text), "strictly increasing"));
}

TEST_CASE("lookup tables must cover every reverse step") {
  std::string text = kMinimal;
  text += "\n[policy lk]\nkind = lookup\ntable = [1, 2, 3]\n";
  CHECK(mentions(issues_of(text), "40 entries"));
}

TEST_CASE("inline worlds build real mixtures") {
  const std::string text = R"cfg(
[world]
dim = 2
classes = 2
priors = [0.5, 0.5]

[component]
class = 0
weight = 1
mean = [-2, 0]
cov_diag = [0.4, 0.4]

[component]
class = 1
weight = 1
mean = [2, 0]
cov = [0.4, 0.1, 0.1, 0.4]

[schedule]
steps = 10

[policy p]
kind = fixed
)cfg";
  const auto cfg = parse_config(text);
  const auto world = build_world(cfg.world);
  CHECK(world.dim() == 2);
  CHECK(world.num_classes() == 2);
  CHECK(world.components_in(0) == 1);
  CHECK(world.class_mean(0)[0] == doctest::Approx(-2.0));
  CHECK(world.class_mean(1)[0] == doctest::Approx(2.0));
}

TEST_CASE("inline world validation") {
  std::string text = "[world]\ndim = 2\nclasses = 2\n[schedule]\nsteps = 4\n[policy p]\nkind = fixed\n";
  CHECK(mentions(issues_of(text), "class 0 has no [component]"));

  text =
      "[world]\ndim = 2\nclasses = 1\n"
      "[component]\nclass = 0\nmean = [1, 2]\ncov_diag = [1]\n"
      "[schedule]\nsteps = 4\n[policy p]\nkind = fixed\n";
  CHECK(mentions(issues_of(text), "cov_diag"));

  text =
      "[world]\npreset = default\n"
      "[component]\nclass = 0\nmean = [1, 2]\ncov_diag = [1, 1]\n"
      "[schedule]\nsteps = 4\n[policy p]\nkind = fixed\n";
  CHECK(mentions(issues_of(text), "inline [world]"));
}

TEST_CASE("built policies carry the configured behavior") {
  std::string text = kMinimal;
  text +=
      "\n[evaluator align]\nkind = alignment-oracle\n"
      "\n[policy iv]\nkind = interval\ns_hi = 11\nt_lo = 5\nt_hi = 30\ns_out = 1\n"
      "\n[policy an]\nkind = annealing\ns_start = 15\ns_end = 1\nshape = cosine\n"
      "\n[policy dyn]\nkind = dynamic\ncandidates = [1, 7.5]\nevaluators = [align]\n"
      "weighting = linear\ncoefficients = [1]\ntie_default = 1\n";
  const auto cfg = parse_config(text);
  const auto world = build_world(cfg.world);
  const auto sched = build_schedule(cfg.schedule);
  std::map<std::string, EvaluatorPtr> evals{
      {"align", std::make_shared<AlignmentOracle>(world, sched)}};

  const auto fixed = build_policy(*cfg.find_policy("base"), evals, sched);
  CHECK(policy_name(fixed) == "fixed");
  CHECK(scale_at(fixed, 20, sched) == 7.5);

  const auto iv = build_policy(*cfg.find_policy("iv"), evals, sched);
  CHECK(policy_name(iv) == "interval");
  CHECK(scale_at(iv, 20, sched) == 11.0);
  CHECK(scale_at(iv, 35, sched) == 1.0);

  const auto an = build_policy(*cfg.find_policy("an"), evals, sched);
  CHECK(policy_name(an) == "annealing");
  CHECK(scale_at(an, 40, sched) == doctest::Approx(15.0));

  const auto dyn = build_policy(*cfg.find_policy("dyn"), evals, sched);
  const auto& dp = std::get<DynamicPolicy>(dyn);
  CHECK(dp.candidates.scales == std::vector<double>{1.0, 7.5});
  CHECK(dp.weighting == Weighting::linear);
  CHECK(dp.tie_default == 1.0);
  REQUIRE(dp.evaluators.size() == 1);
  CHECK(dp.evaluators[0]->kind() == "alignment-oracle");
}

TEST_CASE("experiment constraints") {
  std::string text = kMinimal;
  text += "\n[filter]\nB = 0\nK = 1\nfraction = 1.5\nevaluator = a\npolicy = base\n";
  const auto issues = issues_of(text);
  CHECK(mentions(issues, "filter.B must be at least 1"));
  CHECK(mentions(issues, "fraction must lie in (0, 1]"));
  CHECK(mentions(issues, "unknown evaluator 'a'"));

  text = kMinimal;
  text += "\n[experiment]\ncells = 5\n";  // second experiment section
  CHECK(mentions(issues_of(text), "repeated [experiment]"));

  text = kMinimal;
  text.append("\n[world]\npreset = hard\n");
  CHECK(mentions(issues_of(text), "repeated [world]"));
}
