// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//
//   propsched_acceptance            run all criteria
//   propsched_acceptance 3 5 12     run a subset
//
// PROPSCHED_PPO_SECONDS overrides the per-run PPO budget (default 300 s).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "propsched/errors.hpp"
#include "propsched/harness.hpp"
#include "propsched/policy.hpp"
#include "test_util.hpp"

using namespace propsched;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const std::uint64_t kSeeds[] = {1, 2, 3};

// ---------------------------------------------------------------------------
// The fixed parse family used by the learning criteria.

constexpr std::uint64_t kDevOffset = 1ull << 39;
constexpr std::uint64_t kTestOffset = 1ull << 40;
constexpr int kTestInstances = 50;
constexpr int kDevInstances = 25;

TaskSpec parse_task(std::uint64_t grammar_seed, std::uint64_t task_seed) {
  ParseFamily f;
  f.grammar = sample_grammar(GrammarSampling{4, 5, 6, 8, 4, 8}, grammar_seed, 4, 5);
  f.min_len = 4;
  f.max_len = 5;
  return TaskSpec{"parse-" + std::to_string(grammar_seed), f, task_seed};
}

const TaskSpec& fixed_task() {
  static const TaskSpec t = parse_task(3, 7);
  return t;
}

InstanceSampler sampler_at(const TaskSpec& t, std::uint64_t offset) {
  return [t, offset](std::uint64_t i) { return generate(t, offset + i); };
}

double median_cost(const InstanceSampler& s, int n, const std::function<std::unique_ptr<Scheduler>()>& make) {
  std::vector<double> costs;
  for (int i = 0; i < n; ++i) {
    SolverState st = build_instance(s(i));
    auto sched = make();
    run_to_fixpoint(st, *sched, std::numeric_limits<std::size_t>::max());
    costs.push_back(st.cum_cost());
  }
  return median(costs);
}

double fifo_test_cost() {
  static const double c =
      median_cost(sampler_at(fixed_task(), kTestOffset), kTestInstances, [] { return std::make_unique<FifoScheduler>(); });
  return c;
}

double ppo_seconds() {
  if (const char* e = std::getenv("PROPSCHED_PPO_SECONDS")) return std::atof(e);
  return 300.0;
}

TrainConfig acceptance_train_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.ppo_epochs = 4;
  cfg.batch_size = 1024;
  cfg.dropout_in_update = false;
  cfg.seed = seed;
  return cfg;
}

/// PPO within the time budget; keeps the parameters with the lowest median
/// cost on the dev split.
PolicyParams train_selected(PolicyArch arch, std::uint64_t seed) {
  GatConfig gc;
  gc.arch = arch;
  PolicyParams p = init_params(gc, seed);
  const InstanceSampler train = sampler_at(fixed_task(), 0);
  const InstanceSampler dev = sampler_at(fixed_task(), kDevOffset);
  PolicyParams best = p;
  double best_cost = evaluate_policy(p, dev, kDevInstances, 0).median_cost;
  int chosen = -1;
  const auto t0 = Clock::now();
  train_ppo(p, train, acceptance_train_config(seed), 1000000, ppo_seconds(),
            [&](const TrainLogRow& row, const PolicyParams& q) {
              if (row.update % 2 != 1) return;
              const double c = evaluate_policy(q, dev, kDevInstances, 0).median_cost;
              if (c < best_cost) {
                best_cost = c;
                best = q;
                chosen = row.update;
              }
            });
  std::printf("    trained %s seed %llu for %.0f s, kept update %d (dev median cost %.1f)\n",
              arch == PolicyArch::Gat ? "gat" : "mlp", static_cast<unsigned long long>(seed), seconds_since(t0), chosen,
              best_cost);
  std::fflush(stdout);
  return best;
}

std::shared_ptr<const PolicyParams> trained_policy(PolicyArch arch, std::uint64_t seed) {
  static std::map<std::pair<int, std::uint64_t>, std::shared_ptr<const PolicyParams>> cache;
  auto& slot = cache[{static_cast<int>(arch), seed}];
  if (!slot) slot = std::make_shared<const PolicyParams>(train_selected(arch, seed));
  return slot;
}

double policy_test_cost(const std::shared_ptr<const PolicyParams>& p) {
  return median_cost(sampler_at(fixed_task(), kTestOffset), kTestInstances,
                     [&] { return std::make_unique<PolicyScheduler>(p); });
}

// ---------------------------------------------------------------------------

Outcome confluence() {
  const auto t0 = Clock::now();
  int failed = 0, mismatches = 0;
  for (int i = 0; i < 50; ++i) {
    // Every fifth instance is a tight random CSP, most of which fail.
    const InstanceSpec spec =
        i % 5 == 4 ? gen_random_csp(6, 4, 0.6, 0.55, mix_seed(2024, i)) : testing::mixed_instance(i, 2024);
    Status ref_status;
    RandomScheduler first(0);
    const auto ref = testing::run_with(spec, first, &ref_status);
    failed += ref_status == Status::Failed;
    for (std::uint64_t s = 1; s < 20; ++s) {
      RandomScheduler r(s);
      Status status;
      const auto doms = testing::run_with(spec, r, &status);
      // A failed run stops at the first wipe-out, so only the status is schedule-independent.
      if (status != ref_status || (status == Status::Fixpoint && doms != ref)) ++mismatches;
    }
  }
  const double t = seconds_since(t0);
  return {mismatches == 0 && t < 60.0,
          fmt("50 instances x 20 schedules, %d mismatches, %d failed instances, %.1f s", mismatches, failed, t)};
}

Outcome cky_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(99);
  int checked = 0, bad_spans = 0;
  for (std::uint64_t seed = 0; checked < 100; ++seed) {
    const Grammar g = sample_grammar(GrammarSampling{}, 10000 + seed, 2, 8);
    const int len = std::uniform_int_distribution<int>(2, 8)(rng);
    auto tokens = sample_sentence(g, len, seed);
    if (tokens.empty()) continue;
    if (seed % 2) tokens[rng() % tokens.size()] = g.terminals[rng() % g.terminals.size()];
    const int n = static_cast<int>(tokens.size());
    const Fixpoint fp = gold_fixpoint(build_parse_instance(g, tokens));
    const auto chart = testing::cky_chart(g, tokens);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j <= n; ++j) {
        const auto v = fp.domains[span_variable(n, i, j)].values();
        if (std::set<int>(v.begin(), v.end()) != chart[i][j]) ++bad_spans;
      }
    }
    ++checked;
  }
  const double t = seconds_since(t0);
  return {bad_spans == 0 && t < 60.0, fmt("%d sentences, %d mismatching spans, %.1f s", checked, bad_spans, t)};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  const GradcheckReport r = cmd_gradcheck(24, 5);
  const double t = seconds_since(t0);
  return {r.cases >= 20 && r.max_rel_error < 1e-4 && t < 120.0,
          fmt("%d configurations, max relative error %.2e (< 1e-4), %.1f s", r.cases, r.max_rel_error, t)};
}

Outcome gae_oracle() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 10);
    std::vector<double> r(n), v(n);
    std::vector<char> d(n, 0);
    for (int t = 0; t < n; ++t) {
      r[t] = u(rng);
      v[t] = u(rng);
    }
    d[n - 1] = rng() % 2;
    const double gamma = std::uniform_real_distribution<double>(0.5, 1.0)(rng);
    const double lambda = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double boot = d[n - 1] ? 0.0 : u(rng);
    const Advantages a = compute_gae(r, v, d, gamma, lambda, boot);
    for (int t = 0; t < n; ++t) {
      double expect = 0.0, w = 1.0;
      for (int k = t; k < n; ++k) {
        const double next = k + 1 < n ? v[k + 1] : (d[k] ? 0.0 : boot);
        expect += w * (r[k] + gamma * next - v[k]);
        w *= gamma * lambda;
      }
      worst = std::max(worst, std::abs(a.advantages[t] - expect));
    }
  }
  return {worst <= 1e-10, fmt("200 trajectories, max |GAE - brute force| = %.1e", worst)};
}

Outcome ppo_smoke() {
  const auto t0 = Clock::now();
  testing::Builder b(Mode::Derivation);
  const int x = b.var(2), l = b.var(2), r = b.var(2), p = b.var(2);
  b.lexical(x, 1);
  b.rule(l, r, p, 0, 0, 1);
  const InstanceSpec spec = b.spec;
  const InstanceSampler sampler = [spec](std::uint64_t) { return spec; };
  const StateGraph g = featurize(build_instance(spec));
  int ok = 0;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    PolicyParams params = init_params(GatConfig{}, seed);
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.budget_factor = 0.5;
    cfg.seed = seed;
    int reached = -1;
    train_ppo(params, sampler, cfg, 200, 0.0, [&](const TrainLogRow& row, const PolicyParams& q) {
      if (reached < 0 && forward(q, g).out.prob_of(0) > 0.9) reached = row.update + 1;
    });
    ok += reached > 0;
    detail += fmt(" seed %llu: %s;", static_cast<unsigned long long>(seed),
                  reached > 0 ? fmt("p>0.9 after %d updates", reached).c_str() : "not reached");
  }
  const double t = seconds_since(t0);
  return {ok == 3 && t < 300.0, fmt("%d/3 seeds,%s %.1f s", ok, detail.c_str(), t)};
}

Outcome learned_vs_fifo() {
  const double fifo = fifo_test_cost();
  int strict = 0, tolerant = 0;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const double ratio = policy_test_cost(trained_policy(PolicyArch::Gat, seed)) / fifo;
    strict += ratio <= 0.9;
    tolerant += ratio <= 0.95;
    detail += fmt(" %.3f", ratio);
  }
  return {strict == 3 || tolerant >= 2,
          fmt("median cost / FIFO on %d held-out instances:%s (<= 0.90 on %d/3, <= 0.95 on %d/3)", kTestInstances,
              detail.c_str(), strict, tolerant)};
}

Outcome oracle_sanity() {
  const auto policy = trained_policy(PolicyArch::Gat, 1);
  std::vector<InstanceSpec> pool;
  for (int i = 0; i < 10; ++i) pool.push_back(generate(fixed_task(), kTestOffset + i));
  for (int i = 0; i < 24; ++i) pool.push_back(testing::mixed_instance(i, 5));
  int completed = 0, violations = 0;
  for (const auto& spec : pool) {
    OracleResult r;
    try {
      r = cmd_oracle(spec, 64, 300000);
    } catch (const HorizonExceeded&) {
      continue;
    }
    ++completed;
    std::vector<std::unique_ptr<Scheduler>> scheds;
    scheds.push_back(std::make_unique<FifoScheduler>());
    scheds.push_back(std::make_unique<RandomScheduler>(1));
    scheds.push_back(std::make_unique<ActivityScheduler>());
    scheds.push_back(std::make_unique<GreedyScheduler>());
    scheds.push_back(std::make_unique<PolicyScheduler>(policy));
    for (auto& s : scheds) {
      SolverState st = build_instance(spec);
      run_to_fixpoint(st, *s, std::numeric_limits<std::size_t>::max());
      if (r.cost > st.cum_cost() + 1e-9) ++violations;
    }
  }
  const InstanceSpec trap = testing::greedy_trap();
  GreedyScheduler greedy;
  SolverState st = build_instance(trap);
  run_to_fixpoint(st, greedy, 1000);
  const double oracle_trap = cmd_oracle(trap).cost;
  return {completed > 0 && violations == 0 && oracle_trap < st.cum_cost(),
          fmt("oracle completed on %d/%zu instances, %d violations; trap: oracle %.0f < greedy %.0f", completed,
              pool.size(), violations, oracle_trap, st.cum_cost())};
}

Outcome fallback_calibration() {
  const auto policy = trained_policy(PolicyArch::Gat, 1);
  std::vector<InstanceSpec> calib, held;
  for (int i = 0; i < 30; ++i) calib.push_back(generate(fixed_task(), kDevOffset + 1000 + i));
  for (int i = 0; i < 30; ++i) held.push_back(generate(fixed_task(), kTestOffset + 1000 + i));
  const CalibrationReport rep = calibrate_tau(policy_entropies(*policy, calib), 0.8);
  const auto held_h = policy_entropies(*policy, held);
  const double held_frac =
      static_cast<double>(std::count_if(held_h.begin(), held_h.end(), [&](double h) { return h < rep.fallback.tau; })) /
      static_cast<double>(held_h.size());

  auto trace_of = [&](const InstanceSpec& spec, Scheduler& s) {
    SolverState st = build_instance(spec);
    std::vector<ConstraintId> ids;
    for (const auto& step : run_to_fixpoint(st, s, std::numeric_limits<std::size_t>::max()).steps) ids.push_back(step.cid);
    return ids;
  };
  int equal_backup = 0, equal_policy = 0;
  for (int i = 0; i < 10; ++i) {
    const InstanceSpec spec = generate(fixed_task(), kTestOffset + i);
    for (double tau : {0.0, std::numeric_limits<double>::infinity()}) {
      SchedulerSpec fs;
      fs.type = SchedulerType::Fallback;
      fs.tau = tau;
      fs.backup = SchedulerType::Activity;
      auto hybrid = make_scheduler(fs, policy);
      const auto got = trace_of(spec, *hybrid);
      if (tau == 0.0) {
        ActivityScheduler backup;
        equal_backup += got == trace_of(spec, backup);
      } else {
        PolicyScheduler alone(policy);
        equal_policy += got == trace_of(spec, alone);
      }
    }
  }
  const bool frac_ok = std::abs(rep.policy_fraction - 0.8) <= 0.05;
  return {frac_ok && equal_backup == 10 && equal_policy == 10,
          fmt("tau %.4f routes %.3f of %zu calibration steps to the policy (%.3f on held-out); "
              "tau=0 equals backup on %d/10, tau=inf equals policy on %d/10",
              rep.fallback.tau, rep.policy_fraction, rep.steps, held_frac, equal_backup, equal_policy)};
}

Outcome proxy_validation() {
  const ProxyReport r = cmd_proxy_validate(200, 15, 1);
  std::set<ConstraintKind> kinds;
  for (const auto& s : r.samples) kinds.insert(s.kind);
  return {r.samples.size() >= 200 && static_cast<int>(kinds.size()) == kNumConstraintKinds && r.pearson_r >= 0.5,
          fmt("Pearson r = %.3f over %zu samples, %zu constraint kinds", r.pearson_r, r.samples.size(), kinds.size())};
}

Outcome meta_adaptation() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  for (std::uint64_t g = 0; g < 40; ++g) cfg.tasks.push_back(parse_task(100 + g, 31 * g + 7));
  cfg.train.dropout_in_update = false;
  cfg.meta.inner_lr = 0.01;
  cfg.meta.meta_lr = 1e-3;
  cfg.meta_steps = 30;
  cfg.seed = 1;
  cfg.out_dir = (std::filesystem::temp_directory_path() / "propsched_acceptance_meta").string();
  const PolicyParams theta = cmd_meta_train(cfg);
  std::printf("    meta-trained for %.0f s\n", seconds_since(t0));
  std::fflush(stdout);

  constexpr int kSteps = 10, kEval = 15, kSpecialists = 5;
  int improved = 0, mean_improved = 0;
  std::vector<double> shares;
  for (int k = 0; k < 20; ++k) {
    const TaskSpec task = parse_task(5000 + k, 31 * k + 11);
    const InstanceSampler s = task_sampler(task);
    const AdaptReport r = adapt(theta, s, kSteps, cfg.meta.inner_lr, cfg.train, cfg.meta.support_transitions, kEval, k);
    // Returns are float sums over different step orders; a tie is not an improvement.
    improved += r.post_median > r.pre_median + 1e-6;
    mean_improved += r.post_reward > r.pre_reward + 1e-6;
    if (k < kSpecialists) {
      // Specialist: PPO from scratch with ten times the adaptation's gradient steps.
      PolicyParams spec_p = init_params(GatConfig{}, k);
      TrainConfig sc = acceptance_train_config(k);
      sc.batch_size = cfg.meta.support_transitions;
      sc.ppo_epochs = 1;
      sc.minibatches = 1;
      train_ppo(spec_p, s, sc, 10 * kSteps);
      constexpr std::uint64_t kEvalOffset = 1u << 30;
      const double specialist = evaluate_policy(spec_p, s, kEval, kEvalOffset).median_cost;
      const double fifo = median_cost([&](std::uint64_t i) { return s(kEvalOffset + i); }, kEval,
                                      [] { return std::make_unique<FifoScheduler>(); });
      shares.push_back(percent_of_specialist(fifo, r.post_cost, specialist));
      std::printf("    task %d: cost fifo %.1f, pre %.1f, adapted %.1f, specialist %.1f\n", k, fifo, r.pre_cost,
                  r.post_cost, specialist);
      std::fflush(stdout);
    }
  }
  return {improved >= 14,
          fmt("adapted median reward beats zero-step on %d/20 held-out grammars (need 14), mean on %d/20; "
              "median share of specialist cost reduction %.2f over %d tasks (reported); %.0f s",
              improved, mean_improved, median(shares), kSpecialists, seconds_since(t0))};
}

Outcome ablation_ordering() {
  const InstanceSampler test = sampler_at(fixed_task(), kTestOffset);
  const InstanceSampler train = sampler_at(fixed_task(), 0);
  int order_ok = 0, gat_ok = 0;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const double policy = policy_test_cost(trained_policy(PolicyArch::Gat, seed));
    const double mlp = policy_test_cost(trained_policy(PolicyArch::Mlp, seed));
    std::vector<LabeledState> data;
    for (int i = 0; i < 40; ++i) {
      auto part = greedy_labels(train(mix_seed(seed, i) % 100000));
      data.insert(data.end(), part.begin(), part.end());
    }
    auto imitation = std::make_shared<PolicyParams>(init_params(GatConfig{}, seed));
    imitation_train(*imitation, data, 20, 1e-3, 32, seed);
    const double imit = policy_test_cost(imitation);
    const double random =
        median_cost(test, kTestInstances, [&] { return std::make_unique<RandomScheduler>(seed); });
    order_ok += policy <= imit && imit <= random;
    gat_ok += policy <= mlp;
    detail += fmt(" seed %llu: policy %.1f, imitation %.1f, random %.1f, mlp %.1f;",
                  static_cast<unsigned long long>(seed), policy, imit, random, mlp);
  }
  return {order_ok >= 2 && gat_ok >= 2,
          fmt("Policy <= Imitation <= Random on %d/3, GAT <= MLP on %d/3;%s", order_ok, gat_ok, detail.c_str())};
}

bool brute_colorable(int n, const std::vector<std::pair<int, int>>& edges, int colors, std::vector<int>& witness) {
  std::vector<int> c(n, 0);
  std::function<bool(int)> go = [&](int v) {
    if (v == n) return true;
    for (int k = 0; k < colors; ++k) {
      bool clash = false;
      for (auto [a, b] : edges) clash |= (a == v && b < v && c[b] == k) || (b == v && a < v && c[a] == k);
      if (clash) continue;
      c[v] = k;
      if (go(v + 1)) return true;
    }
    return false;
  };
  const bool ok = go(0);
  if (ok) witness = c;
  return ok;
}

Outcome task_oracles() {
  std::mt19937_64 rng(12);
  int knap_bad = 0, knap_optima = 0;
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + t % 12;
    std::vector<KnapsackItem> items;
    long long total = 0;
    for (int i = 0; i < n; ++i) {
      items.push_back({1 + static_cast<long long>(rng() % 10), 1 + static_cast<long long>(rng() % 10)});
      total += items.back().weight;
    }
    const long long cap = static_cast<long long>(rng() % (total + 1));
    long long best = -1;
    std::vector<std::uint32_t> optima;
    for (std::uint32_t m = 0; m < (1u << n); ++m) {
      long long w = 0, v = 0;
      for (int i = 0; i < n; ++i) {
        if (m >> i & 1u) w += items[i].weight, v += items[i].value;
      }
      if (w > cap) continue;
      if (v > best) best = v, optima.clear();
      if (v == best) optima.push_back(m);
    }
    const Fixpoint fp = gold_fixpoint(knapsack_instance(items, cap).spec);
    for (std::uint32_t m : optima) {
      ++knap_optima;
      bool kept = fp.status == Status::Fixpoint;
      for (int i = 0; i < n && kept; ++i) kept = fp.domains[i].contains(static_cast<Value>(m >> i & 1u));
      knap_bad += !kept;
    }
  }
  int color_bad = 0, graphs = 0, sat = 0;
  for (int n = 1; n <= 12; ++n) {
    for (int rep = 0; rep < 10; ++rep, ++graphs) {
      const double p = 0.15 + 0.07 * rep;
      std::vector<std::pair<int, int>> edges;
      for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
          if (std::uniform_real_distribution<double>(0, 1)(rng) < p) edges.emplace_back(a, b);
        }
      }
      const int colors = 2 + rep % 3;
      std::vector<int> witness;
      const bool expect = brute_colorable(n, edges, colors, witness);
      const ColoringInstance ci = coloring_instance(n, edges, colors);
      sat += expect;
      if (ci.satisfiable != expect) ++color_bad;
      if (expect) {
        const Fixpoint fp = gold_fixpoint(ci.spec);
        for (int v = 0; v < n; ++v) color_bad += !fp.domains[v].contains(witness[v]);
      }
    }
  }
  return {knap_bad == 0 && color_bad == 0,
          fmt("knapsack: %d enumerated optima over 200 instances, %d pruned; coloring: %d graphs (n <= 12, %d SAT), "
              "%d mismatches",
              knap_optima, knap_bad, graphs, sat, color_bad)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"confluence", confluence},
      {"CKY chart equivalence", cky_equivalence},
      {"gradient check", gradient_check},
      {"GAE oracle", gae_oracle},
      {"PPO two-armed smoke test", ppo_smoke},
      {"learned policy vs FIFO", learned_vs_fifo},
      {"oracle sanity", oracle_sanity},
      {"fallback calibration", fallback_calibration},
      {"cost proxy vs wall clock", proxy_validation},
      {"meta-adaptation", meta_adaptation},
      {"ablation ordering", ablation_ordering},
      {"task oracles", task_oracles},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("[%s] %2d %s: %s (%.0f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
