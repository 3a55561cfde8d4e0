#include "propsched/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "json.hpp"
#include "propsched/errors.hpp"
#include "propsched/policy.hpp"

namespace propsched {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// 1-based line of the first occurrence of "key" in the config text, or 0.
int line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find('"' + key + '"');
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

[[noreturn]] void config_error(const std::string& text, const std::string& key, const std::string& msg) {
  const int line = line_of_key(text, key);
  std::string where = line > 0 ? "line " + std::to_string(line) + ": " : "";
  throw ConfigError(where + "'" + key + "': " + msg);
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
    throw ConfigError("line " + std::to_string(line) + ": " + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& text,
                const std::string& where) {
  if (!j.is_object()) config_error(text, where, "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end()) {
      config_error(text, k, "unknown key in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& dst, const std::string& text) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    config_error(text, key, e.what());
  }
}

Grammar grammar_from(const json& g, const std::string& text) {
  if (g.is_string()) {
    if (g.get<std::string>() == "toy") return toy_grammar();
    config_error(text, "grammar", "unknown named grammar '" + g.get<std::string>() + "'");
  }
  if (g.contains("sample")) {
    GrammarSampling s;
    const json& sj = g.at("sample");
    read(sj, "min_nonterminals", s.min_nonterminals, text);
    read(sj, "max_nonterminals", s.max_nonterminals, text);
    read(sj, "min_binary", s.min_binary, text);
    read(sj, "max_binary", s.max_binary, text);
    read(sj, "min_terminals", s.min_terminals, text);
    read(sj, "max_terminals", s.max_terminals, text);
    std::uint64_t seed = 0;
    int min_len = 2, max_len = 8;
    read(g, "seed", seed, text);
    read(g, "min_len", min_len, text);
    read(g, "max_len", max_len, text);
    return sample_grammar(s, seed, min_len, max_len);
  }
  try {
    return grammar_from_json(g.dump());
  } catch (const Error& e) {
    config_error(text, "grammar", e.what());
  }
}

TaskSpec task_from(const json& j, const std::string& text) {
  TaskSpec t;
  std::string family;
  read(j, "name", t.name, text);
  read(j, "seed", t.seed, text);
  read(j, "family", family, text);
  if (family == "parse") {
    ParseFamily f;
    if (!j.contains("grammar")) config_error(text, "grammar", "parse task needs a grammar");
    f.grammar = grammar_from(j.at("grammar"), text);
    read(j, "min_len", f.min_len, text);
    read(j, "max_len", f.max_len, text);
    read(j, "noise", f.noise, text);
    if (f.min_len < 2 || f.max_len > 20 || f.min_len > f.max_len) config_error(text, "min_len", "lengths must satisfy 2 <= min_len <= max_len <= 20");
    t.family = f;
  } else if (family == "knapsack") {
    KnapsackFamily f;
    read(j, "n", f.n, text);
    read(j, "min_weight", f.min_weight, text);
    read(j, "max_weight", f.max_weight, text);
    read(j, "min_value", f.min_value, text);
    read(j, "max_value", f.max_value, text);
    read(j, "capacity_ratio", f.capacity_ratio, text);
    if (f.n < 1 || f.n > 20) config_error(text, "n", "knapsack size must lie in [1, 20]");
    t.family = f;
  } else if (family == "coloring") {
    ColoringFamily f;
    read(j, "n", f.n, text);
    read(j, "edge_prob", f.edge_prob, text);
    read(j, "colors", f.colors, text);
    if (f.n < 1 || f.n > 12) config_error(text, "n", "coloring size must lie in [1, 12]");
    t.family = f;
  } else if (family == "csp") {
    CspFamily f;
    read(j, "n", f.n, text);
    read(j, "domain_size", f.domain_size, text);
    read(j, "density", f.density, text);
    read(j, "tightness", f.tightness, text);
    t.family = f;
  } else {
    config_error(text, "family", "unknown task family '" + family + "'");
  }
  if (t.name.empty()) t.name = family;
  return t;
}

json task_to(const TaskSpec& t) {
  json j = {{"name", t.name}, {"seed", t.seed}, {"family", family_name(t)}};
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, ParseFamily>) {
          j["grammar"] = json::parse(to_json(f.grammar));
          j["min_len"] = f.min_len;
          j["max_len"] = f.max_len;
          j["noise"] = f.noise;
        } else if constexpr (std::is_same_v<F, KnapsackFamily>) {
          j["n"] = f.n;
          j["min_weight"] = f.min_weight;
          j["max_weight"] = f.max_weight;
          j["min_value"] = f.min_value;
          j["max_value"] = f.max_value;
          j["capacity_ratio"] = f.capacity_ratio;
        } else if constexpr (std::is_same_v<F, ColoringFamily>) {
          j["n"] = f.n;
          j["edge_prob"] = f.edge_prob;
          j["colors"] = f.colors;
        } else {
          j["n"] = f.n;
          j["domain_size"] = f.domain_size;
          j["density"] = f.density;
          j["tightness"] = f.tightness;
        }
      },
      t.family);
  return j;
}

SchedulerEntry scheduler_from(const json& j, const std::string& text) {
  SchedulerEntry e;
  std::string type;
  if (j.is_string()) {
    type = j.get<std::string>();
  } else {
    read(j, "type", type, text);
    read(j, "seed", e.spec.seed, text);
    read(j, "decay", e.spec.decay, text);
    read(j, "bump", e.spec.bump, text);
    read(j, "tau", e.spec.tau, text);
    read(j, "label", e.label, text);
    if (j.contains("backup")) {
      std::string b;
      read(j, "backup", b, text);
      try {
        e.spec.backup = parse_scheduler_type(b);
      } catch (const ConfigError& err) {
        config_error(text, "backup", err.what());
      }
    }
  }
  try {
    e.spec.type = parse_scheduler_type(type);
  } catch (const ConfigError& err) {
    config_error(text, "schedulers", err.what());
  }
  if (e.label.empty()) e.label = to_string(e.spec.type);
  return e;
}

json scheduler_to(const SchedulerEntry& e) {
  return {{"type", to_string(e.spec.type)}, {"seed", e.spec.seed},   {"decay", e.spec.decay},
          {"bump", e.spec.bump},            {"tau", e.spec.tau},     {"backup", to_string(e.spec.backup)},
          {"label", e.label}};
}

std::string fmt_double(double x) {
  if (std::isnan(x)) return "nan";
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TaskSpec task_from_json(const std::string& text) { return task_from(parse_text(text), text); }
std::string to_json(const TaskSpec& task) { return task_to(task).dump(2); }

ExperimentConfig experiment_from_json(const std::string& text) {
  const json j = parse_text(text);
  check_keys(j,
             {"tasks", "instances_per_task", "first_index", "schedulers", "policy_checkpoint", "reward", "policy",
              "train", "meta", "train_updates", "meta_steps", "adapt_steps", "budget_factor", "repetitions", "warmup",
              "seed", "jobs", "out_dir"},
             text, "experiment config");
  ExperimentConfig c;
  if (j.contains("tasks")) {
    for (const auto& t : j.at("tasks")) c.tasks.push_back(task_from(t, text));
  }
  if (j.contains("schedulers")) {
    for (const auto& s : j.at("schedulers")) c.schedulers.push_back(scheduler_from(s, text));
  }
  read(j, "instances_per_task", c.instances_per_task, text);
  read(j, "first_index", c.first_index, text);
  read(j, "policy_checkpoint", c.policy_checkpoint, text);
  read(j, "train_updates", c.train_updates, text);
  read(j, "meta_steps", c.meta_steps, text);
  read(j, "adapt_steps", c.adapt_steps, text);
  read(j, "budget_factor", c.budget_factor, text);
  read(j, "repetitions", c.repetitions, text);
  read(j, "warmup", c.warmup, text);
  read(j, "seed", c.seed, text);
  read(j, "jobs", c.jobs, text);
  read(j, "out_dir", c.out_dir, text);
  if (j.contains("reward")) {
    const json& r = j.at("reward");
    check_keys(r, {"alpha", "beta"}, text, "reward");
    read(r, "alpha", c.reward.alpha, text);
    read(r, "beta", c.reward.beta, text);
  }
  if (j.contains("policy")) {
    try {
      c.policy = gat_config_from_json(j.at("policy").dump());
    } catch (const ConfigError& e) {
      config_error(text, "policy", e.what());
    }
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t,
               {"gamma", "lambda", "clip_eps", "c_v", "c_e", "lr", "ppo_epochs", "batch_size", "minibatches",
                "adam_beta1", "adam_beta2", "adam_eps", "normalize_advantages", "dropout_in_update", "budget_factor",
                "seed"},
               text, "train");
    TrainConfig& tc = c.train;
    read(t, "gamma", tc.gamma, text);
    read(t, "lambda", tc.lambda, text);
    read(t, "clip_eps", tc.clip_eps, text);
    read(t, "c_v", tc.c_v, text);
    read(t, "c_e", tc.c_e, text);
    read(t, "lr", tc.lr, text);
    read(t, "ppo_epochs", tc.ppo_epochs, text);
    read(t, "batch_size", tc.batch_size, text);
    read(t, "minibatches", tc.minibatches, text);
    read(t, "adam_beta1", tc.adam_beta1, text);
    read(t, "adam_beta2", tc.adam_beta2, text);
    read(t, "adam_eps", tc.adam_eps, text);
    read(t, "normalize_advantages", tc.normalize_advantages, text);
    read(t, "dropout_in_update", tc.dropout_in_update, text);
    read(t, "budget_factor", tc.budget_factor, text);
    read(t, "seed", tc.seed, text);
    try {
      validate(tc);
    } catch (const ConfigError& e) {
      config_error(text, "train", e.what());
    }
  }
  if (j.contains("meta")) {
    const json& m = j.at("meta");
    check_keys(m,
               {"inner_steps", "inner_lr", "meta_lr", "tasks_per_batch", "first_order", "support_transitions",
                "query_transitions"},
               text, "meta");
    MetaConfig& mc = c.meta;
    read(m, "inner_steps", mc.inner_steps, text);
    read(m, "inner_lr", mc.inner_lr, text);
    read(m, "meta_lr", mc.meta_lr, text);
    read(m, "tasks_per_batch", mc.tasks_per_batch, text);
    read(m, "first_order", mc.first_order, text);
    read(m, "support_transitions", mc.support_transitions, text);
    read(m, "query_transitions", mc.query_transitions, text);
    if (!mc.first_order) config_error(text, "first_order", "only first-order meta-gradients are implemented");
    try {
      validate(mc);
    } catch (const ConfigError& e) {
      config_error(text, "meta", e.what());
    }
  }
  if (c.repetitions < 1) config_error(text, "repetitions", "must be at least 1");
  if (c.warmup < 0) config_error(text, "warmup", "must be non-negative");
  if (c.jobs < 1) config_error(text, "jobs", "must be at least 1");
  if (c.instances_per_task < 1) config_error(text, "instances_per_task", "must be at least 1");
  return c;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return experiment_from_json(ss.str());
}

std::string to_json(const ExperimentConfig& c) {
  json tasks = json::array(), scheds = json::array();
  for (const auto& t : c.tasks) tasks.push_back(task_to(t));
  for (const auto& s : c.schedulers) scheds.push_back(scheduler_to(s));
  const TrainConfig& t = c.train;
  const MetaConfig& m = c.meta;
  json j = {
      {"tasks", tasks},
      {"instances_per_task", c.instances_per_task},
      {"first_index", c.first_index},
      {"schedulers", scheds},
      {"policy_checkpoint", c.policy_checkpoint},
      {"reward", {{"alpha", c.reward.alpha}, {"beta", c.reward.beta}}},
      {"policy", json::parse(to_json(c.policy))},
      {"train",
       {{"gamma", t.gamma},
        {"lambda", t.lambda},
        {"clip_eps", t.clip_eps},
        {"c_v", t.c_v},
        {"c_e", t.c_e},
        {"lr", t.lr},
        {"ppo_epochs", t.ppo_epochs},
        {"batch_size", t.batch_size},
        {"minibatches", t.minibatches},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"normalize_advantages", t.normalize_advantages},
        {"dropout_in_update", t.dropout_in_update},
        {"budget_factor", t.budget_factor},
        {"seed", t.seed}}},
      {"meta",
       {{"inner_steps", m.inner_steps},
        {"inner_lr", m.inner_lr},
        {"meta_lr", m.meta_lr},
        {"tasks_per_batch", m.tasks_per_batch},
        {"first_order", m.first_order},
        {"support_transitions", m.support_transitions},
        {"query_transitions", m.query_transitions}}},
      {"train_updates", c.train_updates},
      {"meta_steps", c.meta_steps},
      {"adapt_steps", c.adapt_steps},
      {"budget_factor", c.budget_factor},
      {"repetitions", c.repetitions},
      {"warmup", c.warmup},
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"out_dir", c.out_dir},
  };
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Metrics CSV

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << kMetricsSchema << '\n' << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.instance_id << ',' << r.family << ',' << r.scheduler << ',' << r.seed << ',' << r.steps << ','
        << fmt_double(r.cum_cost) << ',' << r.wall_ns << ',' << r.status << ',' << (r.parse_ok ? 1 : 0) << ','
        << fmt_double(r.entropy_mean) << ',' << fmt_double(r.fallback_frac) << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsSchema) throw ConfigError("not a metrics file (schema line missing)");
  if (!std::getline(in, line) || line != kMetricsHeader) throw ConfigError("unexpected metrics header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 11) throw ConfigError("metrics row has " + std::to_string(f.size()) + " fields: " + line);
    MetricsRow r;
    r.instance_id = f[0];
    r.family = f[1];
    r.scheduler = f[2];
    r.seed = std::stoull(f[3]);
    r.steps = std::stol(f[4]);
    r.cum_cost = parse_double(f[5]);
    r.wall_ns = std::stoll(f[6]);
    r.status = f[7];
    r.parse_ok = f[8] == "1";
    r.entropy_mean = parse_double(f[9]);
    r.fallback_frac = parse_double(f[10]);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Run

std::unique_ptr<Scheduler> make_scheduler(const SchedulerSpec& spec, std::shared_ptr<const PolicyParams> policy) {
  switch (spec.type) {
    case SchedulerType::Policy:
      if (!policy) throw ConfigError("policy scheduler needs a checkpoint");
      return std::make_unique<PolicyScheduler>(std::move(policy), false, spec.seed, spec.decay, spec.bump);
    case SchedulerType::Fallback: {
      if (!policy) throw ConfigError("fallback scheduler needs a checkpoint");
      if (spec.backup == SchedulerType::Policy || spec.backup == SchedulerType::Fallback) {
        throw ConfigError("fallback backup must be a classical scheduler");
      }
      SchedulerSpec b = spec;
      b.type = spec.backup;
      FallbackConfig fc;
      fc.tau = spec.tau;
      return std::make_unique<FallbackScheduler>(
          std::make_unique<PolicyScheduler>(std::move(policy), false, spec.seed, spec.decay, spec.bump),
          make_classic_scheduler(b), fc);
    }
    default: return make_classic_scheduler(spec);
  }
}

MetricsRow run_cell(const InstanceSpec& spec, const std::string& instance_id, const SchedulerEntry& entry,
                    std::uint64_t seed, std::shared_ptr<const PolicyParams> policy, double budget_factor,
                    const RewardConfig& reward) {
  MetricsRow row;
  row.instance_id = instance_id;
  row.family = spec.meta.family;
  row.scheduler = entry.label;
  row.seed = seed;
  EngineOptions opts;
  opts.reward = reward;
  SolverState st = build_instance(spec, opts);
  SchedulerSpec s = entry.spec;
  s.seed = seed;
  auto sched = make_scheduler(s, std::move(policy));
  const std::size_t budget = budget_factor > 0.0
                                 ? static_cast<std::size_t>(std::ceil(budget_factor * std::max(1, st.num_constraints())))
                                 : std::numeric_limits<std::size_t>::max();
  const auto t0 = std::chrono::steady_clock::now();
  const RunTrace trace = run_to_fixpoint(st, *sched, budget);
  const auto t1 = std::chrono::steady_clock::now();
  row.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
  row.steps = static_cast<long>(trace.steps.size());
  row.cum_cost = st.cum_cost();
  row.delta_total = static_cast<double>(trace.total_delta());
  row.status = std::string(to_string(trace.outcome));
  row.parse_ok = parse_success(st);
  if (auto* p = dynamic_cast<PolicyScheduler*>(sched.get())) {
    row.entropy_mean = p->mean_entropy();
    row.fallback_frac = 0.0;
  } else if (auto* f = dynamic_cast<FallbackScheduler*>(sched.get())) {
    row.entropy_mean = f->mean_entropy();
    row.fallback_frac = f->fallback_fraction();
  }
  return row;
}

std::vector<MetricsRow> cmd_run(const ExperimentConfig& cfg) {
  if (cfg.tasks.empty()) throw ConfigError("run needs at least one task");
  if (cfg.schedulers.empty()) throw ConfigError("run needs at least one scheduler");
  std::shared_ptr<const PolicyParams> policy;
  const bool learned = std::any_of(cfg.schedulers.begin(), cfg.schedulers.end(), [](const SchedulerEntry& e) {
    return e.spec.type == SchedulerType::Policy || e.spec.type == SchedulerType::Fallback;
  });
  if (learned) {
    if (cfg.policy_checkpoint.empty()) throw ConfigError("policy schedulers need policy_checkpoint");
    policy = std::make_shared<const PolicyParams>(load_params(cfg.policy_checkpoint));
  }

  struct Instance {
    std::string id;
    std::string family;
    std::optional<InstanceSpec> spec;
    std::string error;
  };
  std::vector<Instance> instances;
  for (const auto& task : cfg.tasks) {
    for (int i = 0; i < cfg.instances_per_task; ++i) {
      Instance inst;
      const std::uint64_t index = cfg.first_index + i;
      inst.id = task.name + "/" + std::to_string(index);
      inst.family = family_name(task);
      try {
        inst.spec = generate(task, index);
      } catch (const Error& e) {
        inst.error = e.what();
      }
      instances.push_back(std::move(inst));
    }
  }

  const std::size_t groups = instances.size() * cfg.schedulers.size();
  std::vector<std::vector<MetricsRow>> results(groups);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t g = next++; g < groups; g = next++) {
      const Instance& inst = instances[g / cfg.schedulers.size()];
      const SchedulerEntry& entry = cfg.schedulers[g % cfg.schedulers.size()];
      auto failed = [&](std::uint64_t seed, const std::string& why) {
        MetricsRow r;
        r.instance_id = inst.id;
        r.family = inst.family;
        r.scheduler = entry.label;
        r.seed = seed;
        r.status = "error";
        std::cerr << "warning: " << inst.id << " / " << entry.label << ": " << why << '\n';
        return r;
      };
      for (int w = 0; w < cfg.warmup && inst.spec; ++w) {
        try {
          run_cell(*inst.spec, inst.id, entry, cfg.seed, policy, cfg.budget_factor, cfg.reward);
        } catch (const std::exception&) {
        }
      }
      for (int rep = 0; rep < cfg.repetitions; ++rep) {
        const std::uint64_t seed = cfg.seed + rep;
        if (!inst.spec) {
          results[g].push_back(failed(seed, inst.error));
          continue;
        }
        try {
          results[g].push_back(run_cell(*inst.spec, inst.id, entry, seed, policy, cfg.budget_factor, cfg.reward));
        } catch (const std::exception& e) {
          results[g].push_back(failed(seed, e.what()));
        }
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(groups)));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<MetricsRow> rows;
  for (auto& g : results) rows.insert(rows.end(), g.begin(), g.end());
  std::stable_sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
    return std::tie(a.instance_id, a.scheduler, a.seed) < std::tie(b.instance_id, b.scheduler, b.seed);
  });
  return rows;
}

std::vector<MetricsRow> summarize(const std::vector<MetricsRow>& rows) {
  std::map<std::pair<std::string, std::string>, std::vector<const MetricsRow*>> groups;
  for (const auto& r : rows) groups[{r.instance_id, r.scheduler}].push_back(&r);
  std::vector<MetricsRow> out;
  for (const auto& [key, members] : groups) {
    MetricsRow m = *members.front();
    std::vector<double> cost, steps, wall, ent, fb;
    for (const auto* r : members) {
      cost.push_back(r->cum_cost);
      steps.push_back(static_cast<double>(r->steps));
      wall.push_back(static_cast<double>(r->wall_ns));
      ent.push_back(r->entropy_mean);
      fb.push_back(r->fallback_frac);
    }
    m.cum_cost = median_of(cost);
    m.steps = static_cast<long>(median_of(steps));
    m.wall_ns = static_cast<long long>(median_of(wall));
    m.entropy_mean = median_of(ent);
    m.fallback_frac = median_of(fb);
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracle

namespace {

std::string state_key(const SolverState& st) {
  std::string key;
  for (const auto& v : st.variables()) {
    v.domain.for_each([&](Value x) {
      key.append(reinterpret_cast<const char*>(&x), sizeof x);
    });
    key.push_back('\xff');
  }
  std::vector<ConstraintId> dirty = st.dirty().to_vector();
  std::sort(dirty.begin(), dirty.end());
  for (ConstraintId c : dirty) key.append(reinterpret_cast<const char*>(&c), sizeof c);
  return key;
}

struct OracleSearch {
  int horizon;
  long max_states;
  long explored = 0;
  std::unordered_map<std::string, std::pair<double, ConstraintId>> memo;

  double solve(SolverState& st, int depth) {
    if (st.status() != Status::Running || st.dirty().empty()) return 0.0;
    if (depth >= horizon) throw HorizonExceeded("a schedule needs more than " + std::to_string(horizon) + " steps");
    std::string key = state_key(st);
    if (auto it = memo.find(key); it != memo.end()) return it->second.first;
    if (++explored > max_states) {
      throw HorizonExceeded("oracle explored more than " + std::to_string(max_states) + " states");
    }
    const Snapshot snap = st.snapshot();
    std::vector<ConstraintId> dirty = st.dirty().to_vector();
    std::sort(dirty.begin(), dirty.end());
    double best = std::numeric_limits<double>::infinity();
    ConstraintId arg = -1;
    for (ConstraintId c : dirty) {
      const StepOutcome out = st.propagate(c);
      const double v = out.cost + solve(st, depth + 1);
      st.restore(snap);
      if (v < best) {
        best = v;
        arg = c;
      }
    }
    memo.emplace(std::move(key), std::make_pair(best, arg));
    return best;
  }
};

}  // namespace

OracleResult cmd_oracle(const InstanceSpec& spec, int horizon, long max_states) {
  SolverState st = build_instance(spec);
  OracleSearch search{horizon, max_states, 0, {}};
  OracleResult r;
  r.cost = search.solve(st, 0);
  r.states_explored = search.explored;
  while (st.status() == Status::Running && !st.dirty().empty()) {
    const ConstraintId c = search.memo.at(state_key(st)).second;
    r.schedule.push_back(c);
    st.propagate(c);
  }
  return r;
}

double schedule_cost(const InstanceSpec& spec, const std::vector<ConstraintId>& schedule) {
  SolverState st = build_instance(spec);
  for (ConstraintId c : schedule) {
    if (st.status() != Status::Running || !st.dirty().contains(c)) return -1.0;
    st.propagate(c);
  }
  if (st.status() == Status::Running && !st.dirty().empty()) return -1.0;
  return st.cum_cost();
}

// ---------------------------------------------------------------------------
// Proxy validation

double pearson(const std::vector<double>& x, const std::vector<double>& y, std::vector<std::string>* warnings) {
  const std::size_t n = std::min(x.size(), y.size());
  if (n < 2) {
    if (warnings) warnings->push_back("fewer than two samples; correlation undefined");
    return std::numeric_limits<double>::quiet_NaN();
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    if (warnings) warnings->push_back("zero variance in samples; correlation undefined");
    return std::numeric_limits<double>::quiet_NaN();
  }
  return sxy / std::sqrt(sxx * syy);
}

namespace {

InstanceSpec alldiff_instance(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  InstanceSpec spec;
  spec.mode = Mode::Pruning;
  spec.meta.family = "alldiff";
  for (int v = 0; v < n; ++v) {
    VariableSpec vs;
    vs.id = v;
    vs.capacity = d;
    std::vector<Value> dom;
    for (int x = 0; x < d; ++x) dom.push_back(x);
    if (v < n / 3) dom = {static_cast<Value>(std::uniform_int_distribution<int>(0, d - 1)(rng))};
    vs.domain = dom;
    spec.variables.push_back(vs);
  }
  ConstraintSpec c;
  c.id = 0;
  c.kind = ConstraintKind::AllDifferent;
  for (int v = 0; v < n; ++v) c.scope.push_back(v);
  spec.constraints.push_back(c);
  return spec;
}

std::vector<InstanceSpec> proxy_instances(std::uint64_t seed, int round) {
  const std::uint64_t s = mix_seed(seed, round);
  std::vector<InstanceSpec> out;
  ParseFamily pf;
  pf.grammar = round % 2 ? toy_grammar() : sample_grammar(GrammarSampling{4, 6, 6, 12, 4, 6}, s, 4, 7);
  pf.min_len = 4;
  pf.max_len = 7;
  out.push_back(generate(TaskSpec{"parse", pf, s}, round));
  KnapsackFamily kf;
  kf.n = 4 + round % 16;
  kf.max_weight = 4 + round % 20;
  out.push_back(gen_knapsack(kf, s).spec);
  out.push_back(gen_coloring(6 + round % 7, 0.4, 3 + round % 3, s).spec);
  out.push_back(gen_random_csp(5 + round % 6, 4 + round % 12, 0.5, 0.3, s));
  out.push_back(alldiff_instance(4 + round % 12, 6 + round % 14, s));
  return out;
}

}  // namespace

ProxyReport cmd_proxy_validate(int min_samples, int reps, std::uint64_t seed) {
  ProxyReport report;
  std::array<int, kNumConstraintKinds> per_kind{};
  const int per_kind_target = std::max(1, min_samples / kNumConstraintKinds);
  std::mt19937_64 rng(seed);
  auto enough = [&] {
    if (static_cast<int>(report.samples.size()) < min_samples) return false;
    return std::all_of(per_kind.begin(), per_kind.end(), [&](int k) { return k >= per_kind_target; });
  };
  for (int round = 0; !enough() && round < 10000; ++round) {
    for (const InstanceSpec& spec : proxy_instances(seed, round)) {
      SolverState st = build_instance(spec);
      FifoScheduler fifo;
      int taken = 0;
      while (st.status() == Status::Running && !st.dirty().empty() && taken < 12) {
        const ConstraintId c = fifo.select(st);
        const ConstraintKind kind = st.propagator(c).kind;
        const bool want = per_kind[static_cast<int>(kind)] < per_kind_target ||
                          std::uniform_real_distribution<double>(0, 1)(rng) < 0.1;
        if (want) {
          const Snapshot snap = st.snapshot();
          std::vector<double> times;
          for (int r = 0; r < reps; ++r) {
            st.restore(snap);
            const auto t0 = std::chrono::steady_clock::now();
            st.propagate(c);
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
          }
          st.restore(snap);
          report.samples.push_back({kind, st.step_cost(c), median_of(times)});
          ++per_kind[static_cast<int>(kind)];
          ++taken;
        }
        st.propagate(c);
      }
    }
  }
  std::vector<double> x, y;
  for (const auto& s : report.samples) {
    x.push_back(s.cost);
    y.push_back(s.wall_ns);
  }
  report.pearson_r = pearson(x, y, &report.warnings);
  return report;
}

// ---------------------------------------------------------------------------
// Fallback calibration

std::vector<double> policy_entropies(const PolicyParams& params, const std::vector<InstanceSpec>& instances,
                                     double budget_factor) {
  std::vector<double> out;
  auto shared = std::shared_ptr<const PolicyParams>(std::shared_ptr<void>{}, &params);
  for (const auto& spec : instances) {
    SolverState st = build_instance(spec);
    PolicyScheduler sched(shared);
    const std::size_t budget = static_cast<std::size_t>(std::ceil(budget_factor * std::max(1, st.num_constraints())));
    for (std::size_t k = 0; k < budget && st.status() == Status::Running && !st.dirty().empty(); ++k) {
      out.push_back(sched.evaluate(st).entropy);
      const ConstraintId c = sched.choose();
      sched.notify(c, st.propagate(c));
    }
  }
  return out;
}

CalibrationReport calibrate_tau(const std::vector<double>& entropies, double fraction) {
  CalibrationReport r;
  r.fallback = calibrate_fallback(entropies, fraction);
  r.steps = entropies.size();
  std::size_t below = 0;
  for (double h : entropies) below += h < r.fallback.tau ? 1 : 0;
  r.policy_fraction = entropies.empty() ? 0.0 : static_cast<double>(below) / entropies.size();
  return r;
}

// ---------------------------------------------------------------------------
// Gradient check

GradcheckReport cmd_gradcheck(int cases, std::uint64_t seed, double h) {
  GradcheckReport report;
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int k = 0; k < cases; ++k) {
    GatConfig cfg;
    cfg.heads = pick(1, 2);
    cfg.hidden = cfg.heads * pick(2, 4);
    cfg.layers = pick(1, 3);
    cfg.arch = k % 5 == 4 ? PolicyArch::Mlp : PolicyArch::Gat;
    const int nv = pick(2, 5), nc = pick(1, 10 - nv);
    std::vector<std::vector<int>> scopes(nc);
    for (auto& s : scopes) {
      const int arity = pick(1, std::min(3, nv));
      while (static_cast<int>(s.size()) < arity) {
        const int v = pick(0, nv - 1);
        if (std::find(s.begin(), s.end(), v) == s.end()) s.push_back(v);
      }
    }
    StateGraph g;
    g.topo = make_topology(nv, scopes);
    g.var_feats = Matrix(nv, kVarFeatures);
    g.con_feats = Matrix(nc, kConFeatures);
    for (double& x : g.var_feats.data) x = uni(0, 1);
    for (double& x : g.con_feats.data) x = uni(0, 1);
    g.dirty_mask.assign(nc, 0);
    for (auto& m : g.dirty_mask) m = uni(0, 1) < 0.6;
    g.dirty_mask[pick(0, nc - 1)] = 1;

    const PolicyParams p = init_params(cfg, rng());
    ForwardPass pass = forward(p, g);
    OutputGrad og;
    for (std::size_t i = 0; i < pass.out.actions.size(); ++i) og.dlogits.push_back(uni(-1, 1));
    og.dvalue = uni(-1, 1);
    const Gradients grads = backward(pass, og);
    auto loss = [&](const PolicyParams& q) {
      const ForwardPass f = forward(q, g, false, 0, false);
      double s = og.dvalue * f.out.value;
      for (std::size_t i = 0; i < og.dlogits.size(); ++i) s += og.dlogits[i] * f.out.logits[i];
      return s;
    };
    PolicyParams q = p;
    for (int t = 0; t < p.size(); ++t) {
      for (std::size_t i = 0; i < p.tensors[t].size(); ++i) {
        const double x = p.tensors[t].data[i];
        q.tensors[t].data[i] = x + h;
        const double up = loss(q);
        q.tensors[t].data[i] = x - h;
        const double down = loss(q);
        q.tensors[t].data[i] = x;
        const double fd = (up - down) / (2 * h);
        const double an = grads[t].data[i];
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
        report.max_rel_error = std::max(report.max_rel_error, rel);
      }
    }
    ++report.cases;
  }
  return report;
}

double percent_of_specialist(double fifo_cost, double method_cost, double specialist_cost) {
  const double denom = fifo_cost - specialist_cost;
  if (denom <= 0.0) return 0.0;
  return std::max(0.0, (fifo_cost - method_cost) / denom);
}

// ---------------------------------------------------------------------------
// Training commands

InstanceSampler task_sampler(const TaskSpec& task) {
  return [task](std::uint64_t i) { return generate(task, i); };
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text << '\n';
}

}  // namespace

TrainRunResult cmd_train(const ExperimentConfig& cfg, int checkpoint_every) {
  if (cfg.tasks.empty()) throw ConfigError("train needs a task");
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / "config.json", to_json(cfg));
  TrainRunResult r;
  r.params = init_params(cfg.policy, cfg.seed);
  std::ofstream log(fs::path(cfg.out_dir) / "train_log.csv");
  log << "# propsched-train-log v1\n"
      << "update,mean_reward,mean_cost,clip_fraction,entropy,value_loss,policy_loss,mean_ratio\n";
  TrainConfig tc = cfg.train;
  tc.seed = mix_seed(cfg.seed, tc.seed);
  r.log = train_ppo(r.params, task_sampler(cfg.tasks.front()), tc, cfg.train_updates, 0.0,
                    [&](const TrainLogRow& row, const PolicyParams& p) {
                      log << row.update << ',' << fmt_double(row.mean_reward) << ',' << fmt_double(row.mean_cost)
                          << ',' << fmt_double(row.stats.clip_fraction) << ',' << fmt_double(row.stats.entropy) << ','
                          << fmt_double(row.stats.value_loss) << ',' << fmt_double(row.stats.policy_loss) << ','
                          << fmt_double(row.stats.mean_ratio) << '\n';
                      log.flush();
                      if (checkpoint_every > 0 && (row.update + 1) % checkpoint_every == 0) {
                        save_params(p, (fs::path(cfg.out_dir) / ("ckpt_" + std::to_string(row.update + 1) + ".json")).string());
                      }
                    });
  save_params(r.params, (fs::path(cfg.out_dir) / "policy.json").string());
  return r;
}

PolicyParams cmd_meta_train(const ExperimentConfig& cfg) {
  if (cfg.tasks.empty()) throw ConfigError("meta-train needs tasks");
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / "config.json", to_json(cfg));
  PolicyParams theta = init_params(cfg.policy, cfg.seed);
  std::ofstream log(fs::path(cfg.out_dir) / "meta_log.csv");
  log << "# propsched-meta-log v1\nstep,query_reward,query_loss\n";
  std::mt19937_64 rng(cfg.seed);
  for (int s = 0; s < cfg.meta_steps; ++s) {
    std::vector<InstanceSampler> batch;
    for (int k = 0; k < cfg.meta.tasks_per_batch; ++k) {
      batch.push_back(task_sampler(cfg.tasks[std::uniform_int_distribution<std::size_t>(0, cfg.tasks.size() - 1)(rng)]));
    }
    MetaStepStats st;
    theta = maml_meta_step(theta, batch, cfg.meta, cfg.train, mix_seed(cfg.seed, s), &st);
    log << s << ',' << fmt_double(st.query_reward) << ',' << fmt_double(st.query_loss) << '\n';
    log.flush();
  }
  save_params(theta, (fs::path(cfg.out_dir) / "meta_policy.json").string());
  return theta;
}

AdaptReport cmd_adapt(const ExperimentConfig& cfg, const PolicyParams& start, int steps) {
  if (cfg.tasks.empty()) throw ConfigError("adapt needs a target task");
  AdaptReport r = adapt(start, task_sampler(cfg.tasks.front()), steps, cfg.meta.inner_lr, cfg.train,
                        cfg.meta.support_transitions, cfg.instances_per_task, cfg.seed);
  fs::create_directories(cfg.out_dir);
  const json j = {{"steps", steps},
                  {"pre_reward", r.pre_reward},
                  {"post_reward", r.post_reward},
                  {"pre_median_reward", r.pre_median},
                  {"post_median_reward", r.post_median},
                  {"pre_cost", r.pre_cost},
                  {"post_cost", r.post_cost}};
  write_text(fs::path(cfg.out_dir) / "adapt.json", j.dump(2));
  save_params(r.adapted, (fs::path(cfg.out_dir) / "adapted_policy.json").string());
  return r;
}

}  // namespace propsched
