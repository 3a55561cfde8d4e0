#ifndef PROPSCHED_HARNESS_HPP_
#define PROPSCHED_HARNESS_HPP_

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "propsched/gat.hpp"
#include "propsched/rl.hpp"
#include "propsched/scheduler.hpp"
#include "propsched/tasks.hpp"

namespace propsched {

inline constexpr const char* kMetricsSchema = "# propsched-metrics v1";
inline constexpr const char* kMetricsHeader =
    "instance_id,family,scheduler,seed,steps,cum_cost,wall_ns,status,parse_ok,entropy_mean,fallback_frac";

/// One scheduler entry of an experiment: a type plus its parameters.
struct SchedulerEntry {
  SchedulerSpec spec;
  std::string label;  ///< column value in results; defaults to the type name
};

struct ExperimentConfig {
  std::vector<TaskSpec> tasks;
  int instances_per_task = 5;
  std::uint64_t first_index = 0;
  std::vector<SchedulerEntry> schedulers;
  std::string policy_checkpoint;  ///< needed by policy and fallback schedulers
  RewardConfig reward;
  GatConfig policy;
  TrainConfig train;
  MetaConfig meta;
  int train_updates = 50;
  int meta_steps = 20;
  int adapt_steps = 10;
  double budget_factor = 0.0;  ///< step budget per run as a multiple of |C|; 0 = unbounded
  int repetitions = 5;
  int warmup = 1;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out_dir = "out";
};

/// Parses a config; errors carry line context. Throws ConfigError.
ExperimentConfig experiment_from_json(const std::string& text);
ExperimentConfig load_experiment(const std::string& path);
std::string to_json(const ExperimentConfig& cfg);
/// Task spec as stored in config files.
TaskSpec task_from_json(const std::string& text);
std::string to_json(const TaskSpec& task);

struct MetricsRow {
  std::string instance_id;
  std::string family;
  std::string scheduler;
  std::uint64_t seed = 0;
  long steps = 0;
  double cum_cost = 0.0;
  long long wall_ns = 0;
  std::string status;
  bool parse_ok = false;
  double entropy_mean = std::numeric_limits<double>::quiet_NaN();
  double fallback_frac = std::numeric_limits<double>::quiet_NaN();
  double delta_total = 0.0;
};

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

/// Builds any scheduler kind; learned kinds need `policy`.
std::unique_ptr<Scheduler> make_scheduler(const SchedulerSpec& spec, std::shared_ptr<const PolicyParams> policy);

/// Runs one scheduler on one instance; wall_ns covers propagation only.
MetricsRow run_cell(const InstanceSpec& spec, const std::string& instance_id, const SchedulerEntry& entry,
                    std::uint64_t seed, std::shared_ptr<const PolicyParams> policy, double budget_factor,
                    const RewardConfig& reward = {});

/// Every (instance, scheduler, repetition) cell, sorted by (instance_id, scheduler, seed).
/// Warmup runs are executed and discarded. A failing cell is recorded with status "error".
std::vector<MetricsRow> cmd_run(const ExperimentConfig& cfg);

/// Median cum_cost, steps and wall_ns per (instance, scheduler).
std::vector<MetricsRow> summarize(const std::vector<MetricsRow>& rows);

struct OracleResult {
  double cost = 0.0;
  std::vector<ConstraintId> schedule;
  long states_explored = 0;
};

/// Minimum cumulative cost to a terminal state over all schedules, by DFS
/// with memoization on (domains, dirty membership). Throws HorizonExceeded
/// when a schedule longer than `horizon` steps or more than `max_states`
/// distinct states would be needed.
OracleResult cmd_oracle(const InstanceSpec& spec, int horizon = 32, long max_states = 2000000);

/// Cost of following `schedule` from the initial state; -1 if it is not valid.
double schedule_cost(const InstanceSpec& spec, const std::vector<ConstraintId>& schedule);

struct ProxySample {
  ConstraintKind kind;
  double cost;
  double wall_ns;
};
struct ProxyReport {
  std::vector<ProxySample> samples;
  double pearson_r = 0.0;
  std::vector<std::string> warnings;
};

/// NaN (with a warning) when either side has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y, std::vector<std::string>* warnings = nullptr);

/// Times single propagate calls (median of `reps` replays of the same step)
/// across instances covering every constraint kind.
ProxyReport cmd_proxy_validate(int min_samples, int reps, std::uint64_t seed);

struct CalibrationReport {
  FallbackConfig fallback;
  double policy_fraction = 0.0;  ///< share of calibration steps with H < tau
  std::size_t steps = 0;
};
/// Per-step policy entropies along the policy's own eval-mode runs.
std::vector<double> policy_entropies(const PolicyParams& params, const std::vector<InstanceSpec>& instances,
                                     double budget_factor = 4.0);
CalibrationReport calibrate_tau(const std::vector<double>& entropies, double fraction = 0.8);

struct GradcheckReport {
  int cases = 0;
  double max_rel_error = 0.0;
};
/// Random small configurations (hidden <= 8, heads <= 2, <= 10 nodes), central
/// differences with step h on every parameter.
GradcheckReport cmd_gradcheck(int cases, std::uint64_t seed, double h = 1e-5);

/// (fifo - method) / (fifo - specialist), clamped at 0.
double percent_of_specialist(double fifo_cost, double method_cost, double specialist_cost);

struct TrainRunResult {
  PolicyParams params;
  std::vector<TrainLogRow> log;
};
/// PPO on the first task; writes config.json, train_log.csv and checkpoints under out_dir.
TrainRunResult cmd_train(const ExperimentConfig& cfg, int checkpoint_every = 10);

/// MAML over all tasks (tasks_per_batch sampled per meta step); writes meta_log.csv and checkpoints.
PolicyParams cmd_meta_train(const ExperimentConfig& cfg);

/// Adaptation of a checkpoint to the first task; writes adapt.json.
AdaptReport cmd_adapt(const ExperimentConfig& cfg, const PolicyParams& start, int steps);

InstanceSampler task_sampler(const TaskSpec& task);

}  // namespace propsched

#endif  // PROPSCHED_HARNESS_HPP_
