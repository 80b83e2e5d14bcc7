#include "cfglab/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace cfglab {

namespace {

struct WeightedTimeDraw {
  LossWeightSchedule ls;
  int lo, hi;

  WeightedTimeDraw(const NoiseSchedule& sched, const TrainHyper& h) {
    lo = h.t_min;
    hi = h.t_max < 0 ? sched.steps() : h.t_max;
    if (lo < 0 || hi > sched.steps() || lo >= hi) {
      throw std::invalid_argument("training: bad timestep range");
    }
    ls.t_min = lo;
    ls.t_max = hi;
    ls.floor = h.weight_floor;
    ls.k = h.weight_k;
    ls.ramp = h.ramp;
  }

  int draw(Rng& rng) const {
    return lo + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
  }
};

void check_finite(double loss, const char* what, int step) {
  if (!std::isfinite(loss)) {
    throw std::runtime_error(std::string(what) + " training diverged at step " +
                             std::to_string(step));
  }
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }

// d softplus / softplus, saturating to 1 deep in the negative tail
double softplus_log_slope(double z) {
  if (z < -30.0) return 1.0;
  return sigmoid(z) / std::max(softplus(z), 1e-300);
}

// Mann-Whitney AUC with midrank tie handling
double mann_whitney_auc(std::vector<double> pos, std::vector<double> neg) {
  struct Tagged {
    double v;
    bool positive;
  };
  std::vector<Tagged> all;
  all.reserve(pos.size() + neg.size());
  for (double v : pos) all.push_back({v, true});
  for (double v : neg) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) { return a.v < b.v; });

  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].v == all[i].v) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].positive) rank_sum += midrank;
    }
    i = j;
  }
  const double n1 = static_cast<double>(pos.size());
  const double n2 = static_cast<double>(neg.size());
  return (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n2);
}

MlpConfig arch_for(const TrainHyper& h, int input_dim, int num_classes) {
  MlpConfig cfg;
  cfg.input_dim = input_dim;
  cfg.num_classes = num_classes;
  cfg.hidden = h.hidden;
  cfg.hidden_layers = h.hidden_layers;
  cfg.time_embed = h.time_embed;
  cfg.class_embed = h.class_embed;
  return cfg;
}

}  // namespace

int draw_class(const MixtureWorld& world, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int c = 0; c < world.num_classes(); ++c) {
    acc += world.class_prior(c);
    if (u < acc) return c;
  }
  return world.num_classes() - 1;
}

std::shared_ptr<MlpEvaluator> train_alignment(const MixtureWorld& world,
                                              const NoiseSchedule& sched,
                                              const TrainHyper& hyper) {
  const int C = world.num_classes();
  Rng rng(hyper.seed);
  Mlp net(arch_for(hyper, world.dim(), C), rng);
  auto grads = net.zeros_like();
  auto velocity = net.zeros_like();
  const WeightedTimeDraw times(sched, hyper);
  const double T = static_cast<double>(sched.steps());

  std::vector<Mlp::Cache> caches(static_cast<std::size_t>(C));
  std::vector<double> scores(static_cast<std::size_t>(C));

  for (int step = 0; step < hyper.steps; ++step) {
    grads.set_zero();
    double loss = 0.0;
    for (int b = 0; b < hyper.batch; ++b) {
      const int c = draw_class(world, rng);
      const auto x0 = world.sample_data(Condition::label(c), rng);
      const int t = times.draw(rng);
      const auto xt = forward_noise(x0, t, rng.normal_vec(x0.size()), sched);
      const double w = times.ls.weight(t);
      const double t_frac = t / T;

      double mx = -1e300;
      for (int k = 0; k < C; ++k) {
        scores[static_cast<std::size_t>(k)] =
            net.forward_cached(xt, t_frac, k, caches[static_cast<std::size_t>(k)]) /
            hyper.temperature;
        mx = std::max(mx, scores[static_cast<std::size_t>(k)]);
      }
      double z = 0.0;
      for (int k = 0; k < C; ++k) z += std::exp(scores[static_cast<std::size_t>(k)] - mx);
      loss -= w * (scores[static_cast<std::size_t>(c)] - mx - std::log(z));

      for (int k = 0; k < C; ++k) {
        const double p = std::exp(scores[static_cast<std::size_t>(k)] - mx) / z;
        const double dout = w * (p - (k == c ? 1.0 : 0.0)) / hyper.temperature;
        net.backward(caches[static_cast<std::size_t>(k)], dout / hyper.batch, grads);
      }
    }
    check_finite(loss, "alignment", step);
    net.sgd_step(grads, velocity, hyper.lr, hyper.momentum);
  }
  return std::make_shared<MlpEvaluator>("alignment-learned", std::move(net), sched.steps(), true);
}

std::shared_ptr<MlpEvaluator> train_discriminator(
    const std::vector<std::vector<double>>& real_set,
    const std::vector<std::vector<double>>& generated_set, const NoiseSchedule& sched,
    const TrainHyper& hyper) {
  if (real_set.empty() || generated_set.empty()) {
    throw std::invalid_argument("train_discriminator: both sets must be non-empty");
  }
  const int d = static_cast<int>(real_set[0].size());
  Rng rng(hyper.seed);
  Mlp net(arch_for(hyper, d, 0), rng);
  auto grads = net.zeros_like();
  auto velocity = net.zeros_like();
  const WeightedTimeDraw times(sched, hyper);
  const double T = static_cast<double>(sched.steps());
  Mlp::Cache cache;

  for (int step = 0; step < hyper.steps; ++step) {
    grads.set_zero();
    double loss = 0.0;
    for (int b = 0; b < hyper.batch; ++b) {
      const bool real = (b % 2 == 0);  // balanced labels by construction
      const auto& pool = real ? real_set : generated_set;
      const auto& x0 = pool[rng.uniform_index(pool.size())];
      const int t = times.draw(rng);
      const auto xt = forward_noise(x0, t, rng.normal_vec(x0.size()), sched);
      const double w = times.ls.weight(t);

      const double z = net.forward_cached(xt, t / T, -1, cache);
      loss += w * softplus(real ? -z : z);
      const double dz = w * (sigmoid(z) - (real ? 1.0 : 0.0));
      net.backward(cache, dz / hyper.batch, grads);
    }
    check_finite(loss, "discriminator", step);
    net.sgd_step(grads, velocity, hyper.lr, hyper.momentum);
  }
  return std::make_shared<MlpEvaluator>("discriminator-learned", std::move(net), sched.steps(),
                                        false);
}

std::shared_ptr<MlpEvaluator> train_reward(const std::vector<PreferencePair>& pairs,
                                           const NoiseSchedule& sched, const TrainHyper& hyper) {
  if (pairs.empty()) throw std::invalid_argument("train_reward: need at least one pair");
  const int d = static_cast<int>(pairs[0].x_i.size());
  int num_classes = 1;
  for (const auto& p : pairs) {
    num_classes = std::max(num_classes, p.cond.class_label() + 1);
  }
  Rng rng(hyper.seed);
  Mlp net(arch_for(hyper, d, num_classes), rng);
  auto grads = net.zeros_like();
  auto velocity = net.zeros_like();
  const WeightedTimeDraw times(sched, hyper);
  const double T = static_cast<double>(sched.steps());
  Mlp::Cache cache_a, cache_b;

  for (int step = 0; step < hyper.steps; ++step) {
    grads.set_zero();
    double loss = 0.0;
    for (int b = 0; b < hyper.batch; ++b) {
      const auto& pair = pairs[rng.uniform_index(pairs.size())];
      const auto& xw = pair.i_preferred ? pair.x_i : pair.x_j;  // winner
      const auto& xl = pair.i_preferred ? pair.x_j : pair.x_i;
      const int cls = pair.cond.class_label();
      const int t = times.draw(rng);
      const double w = times.ls.weight(t);
      const double t_frac = t / T;

      const auto xwt = forward_noise(xw, t, rng.normal_vec(xw.size()), sched);
      const auto xlt = forward_noise(xl, t, rng.normal_vec(xl.size()), sched);
      const double sa = net.forward_cached(xwt, t_frac, cls, cache_a);
      const double sb = net.forward_cached(xlt, t_frac, cls, cache_b);

      const double p = bt_probability(sa, sb);
      loss -= w * std::log(std::max(p, 1e-300));
      const double da = -w * softplus_log_slope(sa) * (1.0 - p);
      const double db = w * softplus_log_slope(sb) * (1.0 - p);
      net.backward(cache_a, da / hyper.batch, grads);
      net.backward(cache_b, db / hyper.batch, grads);
    }
    check_finite(loss, "reward", step);
    net.sgd_step(grads, velocity, hyper.lr, hyper.momentum);
  }
  return std::make_shared<MlpEvaluator>("reward-learned", std::move(net), sched.steps(), true);
}

std::shared_ptr<MlpEvaluator> train_capability(const std::vector<CapabilityExample>& dataset,
                                               const NoiseSchedule& sched,
                                               const TrainHyper& hyper) {
  if (dataset.empty()) throw std::invalid_argument("train_capability: empty dataset");
  const int d = static_cast<int>(dataset[0].x0.size());
  int num_classes = 1;
  double mean = 0.0;
  for (const auto& ex : dataset) {
    num_classes = std::max(num_classes, ex.cls + 1);
    mean += ex.score;
  }
  mean /= static_cast<double>(dataset.size());
  double var = 0.0;
  for (const auto& ex : dataset) var += (ex.score - mean) * (ex.score - mean);
  var /= static_cast<double>(dataset.size());
  const double sd = var > 0.0 ? std::sqrt(var) : 1.0;

  Rng rng(hyper.seed);
  Mlp net(arch_for(hyper, d, num_classes), rng);
  auto grads = net.zeros_like();
  auto velocity = net.zeros_like();
  const WeightedTimeDraw times(sched, hyper);
  const double T = static_cast<double>(sched.steps());
  Mlp::Cache cache;

  for (int step = 0; step < hyper.steps; ++step) {
    grads.set_zero();
    double loss = 0.0;
    for (int b = 0; b < hyper.batch; ++b) {
      const auto& ex = dataset[rng.uniform_index(dataset.size())];
      const int t = times.draw(rng);
      const double w = times.ls.weight(t);
      const auto xt = forward_noise(ex.x0, t, rng.normal_vec(ex.x0.size()), sched);
      const double target = (ex.score - mean) / sd;

      const double z = net.forward_cached(xt, t / T, ex.cls, cache);
      const double err = z - target;
      loss += w * err * err;
      net.backward(cache, 2.0 * w * err / hyper.batch, grads);
    }
    check_finite(loss, "capability", step);
    net.sgd_step(grads, velocity, hyper.lr, hyper.momentum);
  }
  return std::make_shared<MlpEvaluator>("capability-learned", std::move(net), sched.steps(), true,
                                        sd, mean);
}

double capability_oracle(const MixtureWorld& world, const std::vector<double>& x0, int cls) {
  double best = 1e300;
  for (const auto& mu : world.component_means(cls)) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
      const double diff = x0[i] - mu[i];
      d2 += diff * diff;
    }
    best = std::min(best, d2);
  }
  return -best;
}

std::vector<PreferencePair> make_preference_pairs(const MixtureWorld& world, int n,
                                                  std::uint64_t seed, double min_margin) {
  Rng rng(seed);
  std::vector<PreferencePair> pairs;
  pairs.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(pairs.size()) < n) {
    const int c = draw_class(world, rng);
    PreferencePair p;
    p.cond = Condition::label(c);
    p.x_i = world.sample_data(p.cond, rng);
    p.x_j = world.sample_data(p.cond, rng);
    const double mi = std::log(world.posterior_class_prob(p.x_i, c));
    const double mj = std::log(world.posterior_class_prob(p.x_j, c));
    if (std::abs(mi - mj) <= min_margin) continue;
    p.i_preferred = mi > mj;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<CapabilityExample> make_capability_dataset(const MixtureWorld& world, int n,
                                                       std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CapabilityExample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    CapabilityExample ex;
    ex.cls = draw_class(world, rng);
    ex.x0 = world.sample_data(Condition::label(ex.cls), rng);
    ex.score = capability_oracle(world, ex.x0, ex.cls);
    out.push_back(std::move(ex));
  }
  return out;
}

double alignment_accuracy(const Evaluator& ev, const MixtureWorld& world,
                          const NoiseSchedule& sched, int t, int n, std::uint64_t seed) {
  Rng rng(seed);
  double hits = 0.0;
  for (int i = 0; i < n; ++i) {
    const int c = draw_class(world, rng);
    const auto x0 = world.sample_data(Condition::label(c), rng);
    const auto xt = forward_noise(x0, t, rng.normal_vec(x0.size()), sched);
    int best = 0;
    double best_score = -1e300;
    for (int k = 0; k < world.num_classes(); ++k) {
      const double s = ev.score(xt, t, Condition::label(k));
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    if (best == c) hits += 1.0;
  }
  return hits / static_cast<double>(n);
}

double matched_mismatch_auc(const Evaluator& ev, const MixtureWorld& world,
                            const NoiseSchedule& sched, int t, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> matched, mismatched;
  for (int i = 0; i < n; ++i) {
    const int c = draw_class(world, rng);
    const auto x0 = world.sample_data(Condition::label(c), rng);
    const auto xt = forward_noise(x0, t, rng.normal_vec(x0.size()), sched);
    int wrong = static_cast<int>(rng.uniform_index(
        static_cast<std::uint64_t>(std::max(1, world.num_classes() - 1))));
    if (wrong >= c) ++wrong;
    matched.push_back(ev.score(xt, t, Condition::label(c)));
    mismatched.push_back(ev.score(xt, t, Condition::label(wrong % world.num_classes())));
  }
  return mann_whitney_auc(std::move(matched), std::move(mismatched));
}

double two_set_auc(const Evaluator& ev, const std::vector<std::vector<double>>& set_a,
                   const std::vector<std::vector<double>>& set_b, const NoiseSchedule& sched,
                   int t, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> sa, sb;
  for (const auto& x : set_a) {
    sa.push_back(ev.score(forward_noise(x, t, rng.normal_vec(x.size()), sched), t,
                          Condition::none()));
  }
  for (const auto& x : set_b) {
    sb.push_back(ev.score(forward_noise(x, t, rng.normal_vec(x.size()), sched), t,
                          Condition::none()));
  }
  return mann_whitney_auc(std::move(sa), std::move(sb));
}

double reward_pair_accuracy(const Evaluator& ev, const std::vector<PreferencePair>& pairs,
                            const NoiseSchedule& sched, int t, std::uint64_t seed) {
  Rng rng(seed);
  double hits = 0.0;
  for (const auto& pair : pairs) {
    const auto xi = forward_noise(pair.x_i, t, rng.normal_vec(pair.x_i.size()), sched);
    const auto xj = forward_noise(pair.x_j, t, rng.normal_vec(pair.x_j.size()), sched);
    const double si = ev.score(xi, t, pair.cond);
    const double sj = ev.score(xj, t, pair.cond);
    if (si == sj) {
      hits += 0.5;
    } else if ((si > sj) == pair.i_preferred) {
      hits += 1.0;
    }
  }
  return hits / static_cast<double>(pairs.size());
}

RegressionProbe capability_probe(const Evaluator& ev,
                                 const std::vector<CapabilityExample>& dataset,
                                 const NoiseSchedule& sched, int t, std::uint64_t seed) {
  Rng rng(seed);
  RegressionProbe probe;
  double mean = 0.0;
  for (const auto& ex : dataset) mean += ex.score;
  mean /= static_cast<double>(dataset.size());
  for (const auto& ex : dataset) {
    const auto xt = forward_noise(ex.x0, t, rng.normal_vec(ex.x0.size()), sched);
    const double pred = ev.score(xt, t, Condition::label(ex.cls));
    probe.mse += (pred - ex.score) * (pred - ex.score);
    probe.target_variance += (ex.score - mean) * (ex.score - mean);
  }
  probe.mse /= static_cast<double>(dataset.size());
  probe.target_variance /= static_cast<double>(dataset.size());
  return probe;
}

void save_evaluator(const MlpEvaluator& ev, const std::string& path) {
  const auto& cfg = ev.net().config();
  nlohmann::json header{
      {"kind", ev.kind()},
      {"steps", ev.steps()},
      {"conditional", ev.needs_condition()},
      {"out_scale", ev.out_scale()},
      {"out_shift", ev.out_shift()},
      {"input_dim", cfg.input_dim},
      {"num_classes", cfg.num_classes},
      {"hidden", cfg.hidden},
      {"hidden_layers", cfg.hidden_layers},
      {"time_embed", cfg.time_embed},
      {"class_embed", cfg.class_embed},
  };
  const std::string htext = header.dump();
  const auto flat = ev.net().pack();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_evaluator: cannot open " + path);
  out.write("CFGEVB1\n", 8);
  const auto hlen = static_cast<std::uint32_t>(htext.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_evaluator: write failed for " + path);
}

std::shared_ptr<MlpEvaluator> load_evaluator(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_evaluator: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "CFGEVB1\n", 8) != 0) {
    throw std::runtime_error("load_evaluator: bad magic in " + path);
  }
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen > (1u << 20)) throw std::runtime_error("load_evaluator: bad header length");
  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  if (!in) throw std::runtime_error("load_evaluator: truncated header");
  const auto header = nlohmann::json::parse(htext);

  MlpConfig cfg;
  cfg.input_dim = header.at("input_dim").get<int>();
  cfg.num_classes = header.at("num_classes").get<int>();
  cfg.hidden = header.at("hidden").get<int>();
  cfg.hidden_layers = header.at("hidden_layers").get<int>();
  cfg.time_embed = header.at("time_embed").get<int>();
  cfg.class_embed = header.at("class_embed").get<int>();

  Rng scratch(0);
  Mlp net(cfg, scratch);
  std::vector<double> flat(net.param_count());
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!in || in.gcount() != static_cast<std::streamsize>(flat.size() * sizeof(double))) {
    throw std::runtime_error("load_evaluator: truncated parameters in " + path);
  }
  net.unpack(flat);

  return std::make_shared<MlpEvaluator>(
      header.at("kind").get<std::string>(), std::move(net), header.at("steps").get<int>(),
      header.at("conditional").get<bool>(), header.at("out_scale").get<double>(),
      header.at("out_shift").get<double>());
}

}  // namespace cfglab
