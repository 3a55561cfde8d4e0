// propsched: command-line harness for scheduler comparisons, training and diagnostics.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "propsched/errors.hpp"
#include "propsched/harness.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace propsched;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> jobs;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.jobs) cfg.jobs = *c.jobs;
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

/// Instances a command works on: the explicit files, else every task instance of the config.
std::vector<std::pair<std::string, InstanceSpec>> gather_instances(const ExperimentConfig& cfg,
                                                                   const std::vector<std::string>& files) {
  std::vector<std::pair<std::string, InstanceSpec>> out;
  for (const auto& f : files) out.emplace_back(f, load_instance(f));
  if (!files.empty()) return out;
  for (const auto& task : cfg.tasks) {
    for (int i = 0; i < cfg.instances_per_task; ++i) {
      const std::uint64_t index = cfg.first_index + i;
      out.emplace_back(task.name + "/" + std::to_string(index), generate(task, index));
    }
  }
  if (out.empty()) throw ConfigError("no instances: pass --instance files or a config with tasks");
  return out;
}

int do_gen(const Common& c) {
  const ExperimentConfig cfg = load(c);
  if (cfg.tasks.empty()) throw ConfigError("gen needs at least one task");
  int written = 0;
  for (const auto& task : cfg.tasks) {
    for (int i = 0; i < cfg.instances_per_task; ++i) {
      const std::uint64_t index = cfg.first_index + i;
      const fs::path path = fs::path(cfg.out_dir) / task.name / (std::to_string(index) + ".json");
      fs::create_directories(path.parent_path());
      save_instance(generate(task, index), path.string());
      ++written;
    }
  }
  std::cout << "wrote " << written << " instances under " << cfg.out_dir << '\n';
  return 0;
}

int do_run(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const std::vector<MetricsRow> rows = cmd_run(cfg);
  fs::create_directories(cfg.out_dir);
  {
    auto out = open_out(fs::path(cfg.out_dir) / "config.json");
    out << to_json(cfg) << '\n';
  }
  {
    auto out = open_out(fs::path(cfg.out_dir) / "metrics.csv");
    write_metrics_csv(out, rows);
  }
  const std::vector<MetricsRow> med = summarize(rows);
  {
    auto out = open_out(fs::path(cfg.out_dir) / "summary.csv");
    write_metrics_csv(out, med);
  }
  int errors = 0;
  for (const auto& r : rows) errors += r.status == "error";
  std::cout << rows.size() << " rows (" << errors << " failed) -> " << (fs::path(cfg.out_dir) / "metrics.csv").string()
            << '\n';
  std::cout << "median cum_cost per (instance, scheduler):\n";
  for (const auto& r : med) std::cout << "  " << r.instance_id << "  " << r.scheduler << "  " << r.cum_cost << '\n';
  return 0;
}

int do_train(const Common& c, int checkpoint_every) {
  const ExperimentConfig cfg = load(c);
  const TrainRunResult r = cmd_train(cfg, checkpoint_every);
  if (!r.log.empty()) {
    const auto& last = r.log.back();
    std::cout << r.log.size() << " updates; last mean reward " << last.mean_reward << ", mean cost " << last.mean_cost
              << ", entropy " << last.stats.entropy << '\n';
  }
  std::cout << "policy -> " << (fs::path(cfg.out_dir) / "policy.json").string() << '\n';
  return 0;
}

int do_meta_train(const Common& c) {
  const ExperimentConfig cfg = load(c);
  cmd_meta_train(cfg);
  std::cout << "meta policy -> " << (fs::path(cfg.out_dir) / "meta_policy.json").string() << '\n';
  return 0;
}

int do_adapt(const Common& c, const std::string& checkpoint, std::optional<int> steps) {
  const ExperimentConfig cfg = load(c);
  const PolicyParams start = load_params(checkpoint.empty() ? cfg.policy_checkpoint : checkpoint);
  const int k = steps.value_or(cfg.adapt_steps);
  if (k < 0 || k > 50) throw ConfigError("adapt steps must lie in [0, 50]");
  const AdaptReport r = cmd_adapt(cfg, start, k);
  std::cout << "K=" << k << "  mean reward " << r.pre_reward << " -> " << r.post_reward << "  median " << r.pre_median << " -> " << r.post_median << "  cost " << r.pre_cost << " -> "
            << r.post_cost << '\n';
  return 0;
}

int do_oracle(const Common& c, const std::vector<std::string>& files, int horizon, long max_states) {
  const ExperimentConfig cfg = load(c);
  json results = json::array();
  int exceeded = 0;
  for (const auto& [id, spec] : gather_instances(cfg, files)) {
    try {
      const OracleResult r = cmd_oracle(spec, horizon, max_states);
      std::cout << id << "  oracle cost " << r.cost << "  (" << r.schedule.size() << " steps, " << r.states_explored
                << " states)\n";
      results.push_back({{"instance", id}, {"cost", r.cost}, {"schedule", r.schedule}, {"states", r.states_explored}});
    } catch (const HorizonExceeded& e) {
      ++exceeded;
      std::cout << id << "  horizon exceeded: " << e.what() << '\n';
      results.push_back({{"instance", id}, {"error", e.what()}});
    }
  }
  if (!c.out.empty() || !c.config.empty()) {
    auto out = open_out(fs::path(cfg.out_dir) / "oracle.json");
    out << results.dump(2) << '\n';
  }
  return exceeded > 0 && exceeded == static_cast<int>(results.size()) ? kExitRuntime : 0;
}

int do_proxy(const Common& c, int samples, int reps) {
  const ExperimentConfig cfg = load(c);
  const ProxyReport r = cmd_proxy_validate(samples, reps, cfg.seed);
  auto out = open_out(fs::path(cfg.out_dir) / "proxy.csv");
  out << "# propsched-proxy v1\nkind,cost,wall_ns\n";
  for (const auto& s : r.samples) out << to_string(s.kind) << ',' << s.cost << ',' << s.wall_ns << '\n';
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "samples " << r.samples.size() << "  pearson r " << r.pearson_r << '\n';
  return 0;
}

int do_calibrate(const Common& c, const std::string& checkpoint, const std::string& entropy_file, double fraction) {
  std::vector<double> entropies;
  ExperimentConfig cfg = load(c);
  if (!entropy_file.empty()) {
    std::ifstream in(entropy_file);
    if (!in) throw ConfigError("cannot read " + entropy_file);
    for (double x; in >> x;) entropies.push_back(x);
  } else {
    const PolicyParams params = load_params(checkpoint.empty() ? cfg.policy_checkpoint : checkpoint);
    std::vector<InstanceSpec> dev;
    for (auto& [id, spec] : gather_instances(cfg, {})) dev.push_back(std::move(spec));
    entropies = policy_entropies(params, dev, cfg.budget_factor > 0 ? cfg.budget_factor : 4.0);
  }
  if (entropies.empty()) throw ConfigError("no calibration entropies");
  const CalibrationReport r = calibrate_tau(entropies, fraction);
  std::cout << "tau " << r.fallback.tau << "  policy share " << r.policy_fraction << "  over " << r.steps
            << " steps\n";
  if (!c.out.empty() || !c.config.empty()) {
    auto out = open_out(fs::path(cfg.out_dir) / "calibration.json");
    out << json{{"tau", r.fallback.tau}, {"fraction", fraction}, {"policy_share", r.policy_fraction}, {"steps", r.steps}}
               .dump(2)
        << '\n';
  }
  return 0;
}

int do_gradcheck(const Common& c, int cases, double tol) {
  const ExperimentConfig cfg = load(c);
  const GradcheckReport r = cmd_gradcheck(cases, cfg.seed);
  std::cout << "cases " << r.cases << "  max rel err " << r.max_rel_error << '\n';
  return r.max_rel_error < tol ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"propsched: learned propagation scheduling harness"};
  app.require_subcommand(1);

  Common gen_c, run_c, train_c, meta_c, adapt_c, oracle_c, proxy_c, calib_c, grad_c;
  auto* gen = app.add_subcommand("gen", "write task instances as JSON files");
  add_common(gen, gen_c, true);

  auto* run = app.add_subcommand("run", "compare schedulers; writes metrics.csv and summary.csv");
  add_common(run, run_c, true);

  int checkpoint_every = 10;
  auto* train = app.add_subcommand("train", "PPO on the first task of the config");
  add_common(train, train_c, true);
  train->add_option("--checkpoint-every", checkpoint_every, "updates between checkpoints (0 = none)");

  auto* meta = app.add_subcommand("meta-train", "first-order MAML over the config's tasks");
  add_common(meta, meta_c, true);

  std::string adapt_ckpt;
  std::optional<int> adapt_steps;
  auto* adapt = app.add_subcommand("adapt", "K-step adaptation of a checkpoint to the first task");
  add_common(adapt, adapt_c, true);
  adapt->add_option("--checkpoint", adapt_ckpt, "starting parameters (defaults to policy_checkpoint)");
  adapt->add_option("--steps", adapt_steps, "inner steps K (defaults to adapt_steps)");

  std::vector<std::string> oracle_files;
  int horizon = 32;
  long max_states = 2000000;
  auto* oracle = app.add_subcommand("oracle", "minimum-cost schedule by exhaustive search");
  add_common(oracle, oracle_c, false);
  oracle->add_option("--instance", oracle_files, "instance JSON files (else the config's tasks)");
  oracle->add_option("--horizon", horizon, "maximum schedule length");
  oracle->add_option("--max-states", max_states, "maximum distinct states explored");

  int proxy_samples = 200, proxy_reps = 15;
  auto* proxy = app.add_subcommand("proxy-validate", "correlate the cost proxy with measured propagate time");
  add_common(proxy, proxy_c, false);
  proxy->add_option("--samples", proxy_samples, "minimum number of samples");
  proxy->add_option("--reps", proxy_reps, "timed replays per sample");

  std::string calib_ckpt, calib_entropies;
  double calib_fraction = 0.8;
  auto* calib = app.add_subcommand("calibrate-tau", "entropy threshold for the fallback scheduler");
  add_common(calib, calib_c, false);
  calib->add_option("--checkpoint", calib_ckpt, "policy whose entropies are measured on the config's instances");
  calib->add_option("--entropies", calib_entropies, "whitespace-separated entropy values instead of a policy");
  calib->add_option("--fraction", calib_fraction, "share of steps routed to the policy")->check(CLI::Range(0.0, 1.0));

  int grad_cases = 20;
  double grad_tol = 1e-4;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the policy network gradients");
  add_common(grad, grad_c, false);
  grad->add_option("--cases", grad_cases, "random configurations");
  grad->add_option("--tol", grad_tol, "maximum accepted relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return do_gen(gen_c);
    if (*run) return do_run(run_c);
    if (*train) return do_train(train_c, checkpoint_every);
    if (*meta) return do_meta_train(meta_c);
    if (*adapt) return do_adapt(adapt_c, adapt_ckpt, adapt_steps);
    if (*oracle) return do_oracle(oracle_c, oracle_files, horizon, max_states);
    if (*proxy) return do_proxy(proxy_c, proxy_samples, proxy_reps);
    if (*calib) return do_calibrate(calib_c, calib_ckpt, calib_entropies, calib_fraction);
    if (*grad) return do_gradcheck(grad_c, grad_cases, grad_tol);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
