#ifndef PROPSCHED_RL_HPP_
#define PROPSCHED_RL_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "propsched/gat.hpp"
#include "propsched/instance.hpp"

namespace propsched {

struct Transition {
  StateGraph graph;
  ConstraintId action = -1;
  int action_index = -1;  ///< position of action within the policy's action list
  double reward = 0.0;
  double log_prob = 0.0;
  double value = 0.0;
  bool done = false;
};

struct Trajectory {
  std::vector<Transition> steps;
  Status status = Status::Running;
  double cum_cost = 0.0;

  double total_reward() const;
};

struct TrainConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  double c_v = 0.5;
  double c_e = 0.01;
  double lr = 3e-4;
  int ppo_epochs = 10;
  int batch_size = 256;  ///< transitions collected per update (whole episodes)
  int minibatches = 4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool normalize_advantages = true;
  bool dropout_in_update = true;
  double budget_factor = 4.0;  ///< episode step budget as a multiple of the constraint count
  std::uint64_t seed = 0;
};

/// Throws ConfigError.
void validate(const TrainConfig& cfg);

class Adam {
 public:
  Adam(const PolicyParams& like, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(PolicyParams& params, const Gradients& grads);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  Gradients m_, v_;
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t, A_t = sum_k (gamma lambda)^k delta_{t+k}.
/// `bootstrap` is the value after the last step when it is not done.
/// Throws EmptyTrajectory.
Advantages compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const char> dones,
                       double gamma, double lambda, double bootstrap = 0.0);
Advantages compute_gae(const Trajectory& traj, double gamma, double lambda);

/// Source of training instances: index -> instance.
using InstanceSampler = std::function<InstanceSpec(std::uint64_t index)>;

/// Runs n episodes with the policy sampling its actions. Episode i uses
/// instance sampler(first_index + i) and a seed derived from (seed, i).
std::vector<Trajectory> collect_episodes(const PolicyParams& params, const InstanceSampler& sampler, int n,
                                         double budget_factor, std::uint64_t seed, std::uint64_t first_index = 0);

/// Collects whole episodes until at least `min_transitions` non-trivial steps are gathered.
std::vector<Trajectory> collect_batch(const PolicyParams& params, const InstanceSampler& sampler, int min_transitions,
                                      double budget_factor, std::uint64_t seed, std::uint64_t& next_index);

struct Sample {
  const Transition* t;
  double advantage;
  double ret;
};

/// Flattens trajectories into samples with GAE advantages, normalized per batch when asked.
std::vector<Sample> make_samples(const std::vector<Trajectory>& trajs, const TrainConfig& cfg);

struct PpoStats {
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double loss = 0.0;
  int samples = 0;
};

/// Clipped-surrogate loss and its gradient over `batch` (means over the batch).
/// Dropout masks derive from `seed` when cfg.dropout_in_update.
PpoStats ppo_loss_grad(const PolicyParams& params, std::span<const Sample> batch, const TrainConfig& cfg,
                       std::uint64_t seed, Gradients& grads);

/// ppo_epochs passes over shuffled minibatches with an Adam step each.
/// Throws NonFiniteLoss.
PpoStats ppo_update(PolicyParams& params, Adam& adam, std::vector<Sample> batch, const TrainConfig& cfg,
                    std::uint64_t seed);

/// PPO term for one sample: min(r A, clip(r, 1-eps, 1+eps) A).
double clipped_surrogate(double ratio, double advantage, double eps);

struct TrainLogRow {
  int update = 0;
  double mean_reward = 0.0;  ///< mean episode return
  double mean_cost = 0.0;
  PpoStats stats;
};

/// PPO training loop; `on_update` sees each row (for logging/checkpoints).
/// Stops after `updates` updates or when `time_budget_s` (if > 0) is spent.
std::vector<TrainLogRow> train_ppo(PolicyParams& params, const InstanceSampler& sampler, const TrainConfig& cfg,
                                   int updates, double time_budget_s = 0.0,
                                   const std::function<void(const TrainLogRow&, const PolicyParams&)>& on_update = {});

// ---------------------------------------------------------------------------
// Meta-learning

struct MetaConfig {
  int inner_steps = 5;
  double inner_lr = 1e-3;
  double meta_lr = 3e-4;
  int tasks_per_batch = 4;
  bool first_order = true;
  int support_transitions = 128;
  int query_transitions = 128;

  friend bool operator==(const MetaConfig&, const MetaConfig&) = default;
};

/// Throws ConfigError.
void validate(const MetaConfig& cfg);

/// First-order MAML on an abstract differentiable objective: K plain gradient
/// steps from theta, then the query gradient at the adapted point.
struct FomamlResult {
  std::vector<double> adapted;
  std::vector<double> meta_gradient;
};
using GradFn = std::function<std::vector<double>(const std::vector<double>&)>;
FomamlResult fomaml_task(const std::vector<double>& theta, const GradFn& support_grad, const GradFn& query_grad,
                         int inner_steps, double inner_lr);

/// K inner PPO-gradient steps (SGD with meta.inner_lr) on fresh support
/// batches from the sampler. K = 0 returns the input.
PolicyParams inner_adapt(const PolicyParams& theta, const InstanceSampler& sampler, int steps, double lr,
                         int transitions, const TrainConfig& cfg, std::uint64_t seed, std::uint64_t& next_index);

struct MetaStepStats {
  double query_reward = 0.0;  ///< mean query-episode return under the adapted parameters
  double query_loss = 0.0;
};

/// Sum over tasks of the query-loss gradient at the adapted parameters.
Gradients meta_gradient(const PolicyParams& theta, const std::vector<InstanceSampler>& tasks, const MetaConfig& meta,
                        const TrainConfig& cfg, std::uint64_t seed, MetaStepStats* stats = nullptr);

/// One meta-update: theta <- theta - meta_lr * sum_i grad L_query_i(theta_i').
PolicyParams maml_meta_step(const PolicyParams& theta, const std::vector<InstanceSampler>& tasks,
                            const MetaConfig& meta, const TrainConfig& cfg, std::uint64_t seed,
                            MetaStepStats* stats = nullptr);

struct AdaptReport {
  PolicyParams adapted;
  double pre_reward = 0.0;   ///< mean sampled episode return before adaptation
  double post_reward = 0.0;  ///< and after
  double pre_median = 0.0;   ///< median of the same returns
  double post_median = 0.0;
  double pre_cost = 0.0;     ///< median greedy-mode cost
  double post_cost = 0.0;
};

/// K Adam-driven PPO steps on the target task. Rewards are measured on
/// sampled episodes (kAdaptEvalSamples per held-out instance, same seeds
/// before and after); costs in argmax mode.
inline constexpr int kAdaptEvalSamples = 4;
AdaptReport adapt(const PolicyParams& theta, const InstanceSampler& task, int steps, double lr, const TrainConfig& cfg,
                  int transitions, int eval_instances, std::uint64_t seed);

struct EvalResult {
  std::vector<double> returns;
  std::vector<double> costs;
  double median_return = 0.0;
  double median_cost = 0.0;
};
/// Greedy (argmax) policy on instances sampler(first .. first+n-1).
EvalResult evaluate_policy(const PolicyParams& params, const InstanceSampler& sampler, int n, std::uint64_t first,
                           double budget_factor = 4.0);

// ---------------------------------------------------------------------------
// Imitation baseline

struct LabeledState {
  StateGraph graph;
  ConstraintId label = -1;
};

/// States visited by the greedy lookahead scheduler, each labeled with its choice.
std::vector<LabeledState> greedy_labels(const InstanceSpec& spec, std::size_t max_states = 0);

struct ImitationStats {
  std::vector<double> epoch_loss;
  double accuracy = 0.0;
};

/// Cross-entropy on the dirty-restricted softmax, Adam, minibatches of `batch`.
ImitationStats imitation_train(PolicyParams& params, const std::vector<LabeledState>& data, int epochs, double lr,
                               int batch, std::uint64_t seed);

/// Fraction of states whose argmax action equals the label.
double label_agreement(const PolicyParams& params, const std::vector<LabeledState>& data);

}  // namespace propsched

#endif  // PROPSCHED_RL_HPP_
