#include "propsched/rl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "propsched/errors.hpp"
#include "propsched/policy.hpp"
#include "propsched/tasks.hpp"

namespace propsched {

namespace {

std::shared_ptr<const PolicyParams> borrow(const PolicyParams& p) {
  return std::shared_ptr<const PolicyParams>(std::shared_ptr<void>{}, &p);
}

std::size_t episode_budget(const SolverState& st, double factor) {
  return static_cast<std::size_t>(std::ceil(factor * std::max(1, st.num_constraints())));
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void add_scaled(Gradients& dst, const Gradients& src, double s) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i].data[j] += s * src[i].data[j];
  }
}

void sgd(PolicyParams& p, const Gradients& g, double lr) {
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    for (std::size_t j = 0; j < p.tensors[i].size(); ++j) p.tensors[i].data[j] -= lr * g[i].data[j];
  }
}

}  // namespace

double Trajectory::total_reward() const {
  double s = 0.0;
  for (const auto& t : steps) s += t.reward;
  return s;
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (!(cfg.clip_eps > 0.0)) throw ConfigError("clip_eps must be positive");
  if (!(cfg.lr >= 0.0)) throw ConfigError("lr must be non-negative");
  if (cfg.ppo_epochs < 1 || cfg.batch_size < 1 || cfg.minibatches < 1) {
    throw ConfigError("ppo_epochs, batch_size and minibatches must be positive");
  }
  if (!(cfg.budget_factor > 0.0)) throw ConfigError("budget_factor must be positive");
}

void validate(const MetaConfig& cfg) {
  if (cfg.inner_steps < 1) throw ConfigError("inner_steps must be at least 1");
  if (!(cfg.inner_lr > 0.0) || !(cfg.meta_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (cfg.tasks_per_batch < 1) throw ConfigError("tasks_per_batch must be at least 1");
  if (cfg.support_transitions < 1 || cfg.query_transitions < 1) throw ConfigError("batch sizes must be positive");
}

// ---------------------------------------------------------------------------

Adam::Adam(const PolicyParams& like, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(zeros_like(like)), v_(zeros_like(like)) {}

void Adam::step(PolicyParams& params, const Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& w = params.tensors[i].data;
    auto& m = m_[i].data;
    auto& v = v_[i].data;
    const auto& g = grads[i].data;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1_ * m[j] + (1.0 - b1_) * g[j];
      v[j] = b2_ * v[j] + (1.0 - b2_) * g[j] * g[j];
      w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------

Advantages compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const char> dones,
                       double gamma, double lambda, double bootstrap) {
  const std::size_t n = rewards.size();
  if (n == 0) throw EmptyTrajectory("cannot compute advantages of an empty trajectory");
  if (values.size() != n || dones.size() != n) throw std::invalid_argument("rewards, values and dones differ in length");
  Advantages a;
  a.advantages.assign(n, 0.0);
  a.returns.assign(n, 0.0);
  double carry = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next = dones[t] ? 0.0 : (t + 1 < n ? values[t + 1] : bootstrap);
    const double delta = rewards[t] + gamma * next - values[t];
    carry = delta + (dones[t] ? 0.0 : gamma * lambda * carry);
    a.advantages[t] = carry;
    a.returns[t] = carry + values[t];
  }
  return a;
}

Advantages compute_gae(const Trajectory& traj, double gamma, double lambda) {
  std::vector<double> r, v;
  std::vector<char> d;
  for (const auto& t : traj.steps) {
    r.push_back(t.reward);
    v.push_back(t.value);
    d.push_back(t.done ? 1 : 0);
  }
  return compute_gae(r, v, d, gamma, lambda);
}

// ---------------------------------------------------------------------------

namespace {

Trajectory run_episode(const PolicyParams& params, const InstanceSpec& spec, double budget_factor,
                       std::uint64_t seed) {
  SolverState st = build_instance(spec);
  PolicyScheduler sched(borrow(params), true, seed);
  Trajectory traj;
  const std::size_t budget = episode_budget(st, budget_factor);
  while (st.status() == Status::Running && !st.dirty().empty() && traj.steps.size() < budget) {
    const PolicyOutput& out = sched.evaluate(st);
    const ConstraintId c = sched.choose();
    const int idx = sched.last_index();
    Transition t;
    t.graph = sched.last_graph();
    t.action = c;
    t.action_index = idx;
    t.log_prob = std::log(out.probs[idx]);
    t.value = out.value;
    const StepOutcome res = st.propagate(c);
    sched.notify(c, res);
    t.reward = res.reward;
    traj.steps.push_back(std::move(t));
  }
  if (!traj.steps.empty()) traj.steps.back().done = true;
  traj.status = st.status();
  traj.cum_cost = st.cum_cost();
  return traj;
}

}  // namespace

std::vector<Trajectory> collect_episodes(const PolicyParams& params, const InstanceSampler& sampler, int n,
                                         double budget_factor, std::uint64_t seed, std::uint64_t first_index) {
  std::vector<Trajectory> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.push_back(run_episode(params, sampler(first_index + i), budget_factor, mix_seed(seed, i)));
  }
  return out;
}

std::vector<Trajectory> collect_batch(const PolicyParams& params, const InstanceSampler& sampler, int min_transitions,
                                      double budget_factor, std::uint64_t seed, std::uint64_t& next_index) {
  std::vector<Trajectory> out;
  int total = 0, empty_run = 0;
  for (std::uint64_t i = 0; total < min_transitions; ++i) {
    Trajectory t = run_episode(params, sampler(next_index++), budget_factor, mix_seed(seed, i));
    if (t.steps.empty()) {
      if (++empty_run > 100) break;
      continue;
    }
    empty_run = 0;
    total += static_cast<int>(t.steps.size());
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Sample> make_samples(const std::vector<Trajectory>& trajs, const TrainConfig& cfg) {
  std::vector<Sample> out;
  for (const auto& traj : trajs) {
    if (traj.steps.empty()) continue;
    const Advantages a = compute_gae(traj, cfg.gamma, cfg.lambda);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) out.push_back({&traj.steps[t], a.advantages[t], a.returns[t]});
  }
  if (cfg.normalize_advantages && out.size() > 1) {
    double mean = 0.0;
    for (const auto& s : out) mean += s.advantage;
    mean /= out.size();
    double var = 0.0;
    for (const auto& s : out) var += (s.advantage - mean) * (s.advantage - mean);
    const double sd = std::sqrt(var / out.size());
    for (auto& s : out) s.advantage = sd > 1e-12 ? (s.advantage - mean) / sd : 0.0;
  }
  return out;
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

PpoStats ppo_loss_grad(const PolicyParams& params, std::span<const Sample> batch, const TrainConfig& cfg,
                       std::uint64_t seed, Gradients& grads) {
  grads = zeros_like(params);
  PpoStats st;
  if (batch.empty()) return st;
  const double inv = 1.0 / batch.size();
  const bool train = cfg.dropout_in_update && params.config.dropout > 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = batch[i];
    ForwardPass pass = forward(params, s.t->graph, train, mix_seed(seed, i), true);
    const PolicyOutput& out = pass.out;
    const int a = s.t->action_index;
    const double logp = std::log(out.probs[a]);
    const double ratio = std::exp(logp - s.t->log_prob);
    const double surr = clipped_surrogate(ratio, s.advantage, cfg.clip_eps);
    const bool unclipped = ratio * s.advantage <= std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * s.advantage;
    const double verr = out.value - s.ret;

    st.mean_ratio += ratio * inv;
    if (std::abs(ratio - 1.0) > cfg.clip_eps) st.clip_fraction += inv;
    st.policy_loss -= surr * inv;
    st.value_loss += verr * verr * inv;
    st.entropy += out.entropy * inv;

    OutputGrad og;
    og.dlogits.assign(out.probs.size(), 0.0);
    for (std::size_t k = 0; k < out.probs.size(); ++k) {
      const double p = out.probs[k];
      double g = 0.0;
      if (unclipped) g -= s.advantage * ratio * ((static_cast<int>(k) == a ? 1.0 : 0.0) - p);
      if (p > 0.0) g += cfg.c_e * p * (std::log(p) + out.entropy);
      og.dlogits[k] = g * inv;
    }
    og.dvalue = cfg.c_v * 2.0 * verr * inv;
    add_scaled(grads, backward(pass, og), 1.0);
  }
  st.samples = static_cast<int>(batch.size());
  st.loss = st.policy_loss + cfg.c_v * st.value_loss - cfg.c_e * st.entropy;
  return st;
}

PpoStats ppo_update(PolicyParams& params, Adam& adam, std::vector<Sample> batch, const TrainConfig& cfg,
                    std::uint64_t seed) {
  PpoStats total;
  if (batch.empty()) return total;
  std::mt19937_64 rng(seed);
  const std::size_t mb = (batch.size() + cfg.minibatches - 1) / cfg.minibatches;
  int count = 0;
  Gradients g;
  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    std::shuffle(batch.begin(), batch.end(), rng);
    for (std::size_t lo = 0; lo < batch.size(); lo += mb) {
      const std::size_t hi = std::min(batch.size(), lo + mb);
      const PpoStats s =
          ppo_loss_grad(params, std::span<const Sample>(batch).subspan(lo, hi - lo), cfg, rng(), g);
      if (!std::isfinite(s.loss)) {
        throw NonFiniteLoss("non-finite PPO loss at epoch " + std::to_string(epoch) + ": policy " +
                            std::to_string(s.policy_loss) + ", value " + std::to_string(s.value_loss) +
                            ", entropy " + std::to_string(s.entropy));
      }
      adam.step(params, g);
      total.mean_ratio += s.mean_ratio;
      total.clip_fraction += s.clip_fraction;
      total.policy_loss += s.policy_loss;
      total.value_loss += s.value_loss;
      total.entropy += s.entropy;
      total.loss += s.loss;
      ++count;
    }
  }
  for (double* x : {&total.mean_ratio, &total.clip_fraction, &total.policy_loss, &total.value_loss, &total.entropy,
                    &total.loss}) {
    *x /= count;
  }
  total.samples = static_cast<int>(batch.size());
  return total;
}

std::vector<TrainLogRow> train_ppo(PolicyParams& params, const InstanceSampler& sampler, const TrainConfig& cfg,
                                   int updates, double time_budget_s,
                                   const std::function<void(const TrainLogRow&, const PolicyParams&)>& on_update) {
  validate(cfg);
  Adam adam(params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  std::vector<TrainLogRow> log;
  std::uint64_t next_index = 0;
  const auto start = std::chrono::steady_clock::now();
  for (int u = 0; u < updates; ++u) {
    if (time_budget_s > 0.0) {
      const double spent = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (spent >= time_budget_s) break;
    }
    const auto trajs = collect_batch(params, sampler, cfg.batch_size, cfg.budget_factor, mix_seed(cfg.seed, 2 * u),
                                     next_index);
    TrainLogRow row;
    row.update = u;
    for (const auto& t : trajs) {
      row.mean_reward += t.total_reward() / trajs.size();
      row.mean_cost += t.cum_cost / trajs.size();
    }
    row.stats = ppo_update(params, adam, make_samples(trajs, cfg), cfg, mix_seed(cfg.seed, 2 * u + 1));
    log.push_back(row);
    if (on_update) on_update(row, params);
  }
  return log;
}

// ---------------------------------------------------------------------------

FomamlResult fomaml_task(const std::vector<double>& theta, const GradFn& support_grad, const GradFn& query_grad,
                         int inner_steps, double inner_lr) {
  FomamlResult r;
  r.adapted = theta;
  for (int k = 0; k < inner_steps; ++k) {
    const std::vector<double> g = support_grad(r.adapted);
    for (std::size_t i = 0; i < g.size(); ++i) r.adapted[i] -= inner_lr * g[i];
  }
  r.meta_gradient = query_grad(r.adapted);
  return r;
}

PolicyParams inner_adapt(const PolicyParams& theta, const InstanceSampler& sampler, int steps, double lr,
                         int transitions, const TrainConfig& cfg, std::uint64_t seed, std::uint64_t& next_index) {
  PolicyParams p = theta;
  Gradients g;
  for (int k = 0; k < steps; ++k) {
    const auto trajs = collect_batch(p, sampler, transitions, cfg.budget_factor, mix_seed(seed, 2 * k), next_index);
    const auto samples = make_samples(trajs, cfg);
    const PpoStats s = ppo_loss_grad(p, samples, cfg, mix_seed(seed, 2 * k + 1), g);
    if (!std::isfinite(s.loss)) throw NonFiniteLoss("non-finite loss during adaptation step " + std::to_string(k));
    sgd(p, g, lr);
  }
  return p;
}

Gradients meta_gradient(const PolicyParams& theta, const std::vector<InstanceSampler>& tasks, const MetaConfig& meta,
                        const TrainConfig& cfg, std::uint64_t seed, MetaStepStats* stats) {
  if (tasks.empty()) throw ConfigError("meta step needs at least one task");
  Gradients meta_grad = zeros_like(theta);
  Gradients g;
  MetaStepStats st;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::uint64_t task_seed = mix_seed(seed, i);
    std::uint64_t next_index = mix_seed(task_seed, 17) % 1000000;
    const PolicyParams adapted =
        inner_adapt(theta, tasks[i], meta.inner_steps, meta.inner_lr, meta.support_transitions, cfg, task_seed,
                    next_index);
    const auto query = collect_batch(adapted, tasks[i], meta.query_transitions, cfg.budget_factor,
                                     mix_seed(task_seed, 1000), next_index);
    const PpoStats s = ppo_loss_grad(adapted, make_samples(query, cfg), cfg, mix_seed(task_seed, 1001), g);
    if (!std::isfinite(s.loss)) throw NonFiniteLoss("non-finite query loss on task " + std::to_string(i));
    add_scaled(meta_grad, g, 1.0);
    for (const auto& t : query) st.query_reward += t.total_reward() / query.size() / tasks.size();
    st.query_loss += s.loss / tasks.size();
  }
  if (stats) *stats = st;
  return meta_grad;
}

PolicyParams maml_meta_step(const PolicyParams& theta, const std::vector<InstanceSampler>& tasks,
                            const MetaConfig& meta, const TrainConfig& cfg, std::uint64_t seed, MetaStepStats* stats) {
  PolicyParams out = theta;
  sgd(out, meta_gradient(theta, tasks, meta, cfg, seed, stats), meta.meta_lr);
  return out;
}

EvalResult evaluate_policy(const PolicyParams& params, const InstanceSampler& sampler, int n, std::uint64_t first,
                           double budget_factor) {
  EvalResult r;
  for (int i = 0; i < n; ++i) {
    SolverState st = build_instance(sampler(first + i));
    PolicyScheduler sched(borrow(params));
    const RunTrace trace = run_to_fixpoint(st, sched, episode_budget(st, budget_factor));
    r.returns.push_back(trace.total_reward());
    r.costs.push_back(st.cum_cost());
  }
  r.median_return = median(r.returns);
  r.median_cost = median(r.costs);
  return r;
}

namespace {

struct SampledReturns {
  double mean = 0.0;
  double median = 0.0;
};

SampledReturns sampled_returns(const PolicyParams& params, const InstanceSampler& task, int instances,
                               std::uint64_t first, double budget_factor, std::uint64_t seed) {
  const InstanceSampler eval = [&](std::uint64_t i) { return task(first + i / kAdaptEvalSamples); };
  const auto trajs = collect_episodes(params, eval, instances * kAdaptEvalSamples, budget_factor, seed);
  std::vector<double> r;
  for (const auto& t : trajs) r.push_back(t.total_reward());
  SampledReturns out;
  out.mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
  out.median = median(r);
  return out;
}

}  // namespace

AdaptReport adapt(const PolicyParams& theta, const InstanceSampler& task, int steps, double lr, const TrainConfig& cfg,
                  int transitions, int eval_instances, std::uint64_t seed) {
  constexpr std::uint64_t kEvalOffset = 1u << 30;
  const std::uint64_t eval_seed = mix_seed(seed, 0xe7a1);
  AdaptReport r;
  const SampledReturns pre = sampled_returns(theta, task, eval_instances, kEvalOffset, cfg.budget_factor, eval_seed);
  r.pre_reward = pre.mean;
  r.pre_median = pre.median;
  r.pre_cost = evaluate_policy(theta, task, eval_instances, kEvalOffset, cfg.budget_factor).median_cost;
  r.adapted = theta;
  if (steps <= 0) {
    r.post_reward = r.pre_reward;
    r.post_median = r.pre_median;
    r.post_cost = r.pre_cost;
    return r;
  }
  Adam adam(r.adapted, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Gradients g;
  std::uint64_t next_index = 0;
  for (int k = 0; k < steps; ++k) {
    const auto trajs = collect_batch(r.adapted, task, transitions, cfg.budget_factor, mix_seed(seed, 2 * k), next_index);
    const PpoStats s = ppo_loss_grad(r.adapted, make_samples(trajs, cfg), cfg, mix_seed(seed, 2 * k + 1), g);
    if (!std::isfinite(s.loss)) throw NonFiniteLoss("non-finite loss during adaptation step " + std::to_string(k));
    adam.step(r.adapted, g);
  }
  const SampledReturns post = sampled_returns(r.adapted, task, eval_instances, kEvalOffset, cfg.budget_factor, eval_seed);
  r.post_reward = post.mean;
  r.post_median = post.median;
  r.post_cost = evaluate_policy(r.adapted, task, eval_instances, kEvalOffset, cfg.budget_factor).median_cost;
  return r;
}

// ---------------------------------------------------------------------------

std::vector<LabeledState> greedy_labels(const InstanceSpec& spec, std::size_t max_states) {
  std::vector<LabeledState> out;
  SolverState st = build_instance(spec);
  GreedyScheduler greedy;
  ActivityTable table;
  table.resize(st.num_constraints());
  const auto topo = make_topology(st.model());
  while (st.status() == Status::Running && !st.dirty().empty()) {
    if (max_states && out.size() >= max_states) break;
    const ConstraintId c = greedy.select(st);
    if (st.dirty().size() > 1) out.push_back({featurize(st, &table, topo), c});
    const StepOutcome res = st.propagate(c);
    if (res.delta_d > 0) table.bump(c);
    table.decay_all();
  }
  return out;
}

ImitationStats imitation_train(PolicyParams& params, const std::vector<LabeledState>& data, int epochs, double lr,
                               int batch, std::uint64_t seed) {
  ImitationStats stats;
  if (data.empty()) return stats;
  Adam adam(params, lr);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t mb = std::max(1, batch);
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += mb) {
      const std::size_t hi = std::min(order.size(), lo + mb);
      Gradients g = zeros_like(params);
      const double inv = 1.0 / (hi - lo);
      for (std::size_t k = lo; k < hi; ++k) {
        const LabeledState& s = data[order[k]];
        ForwardPass pass = forward(params, s.graph, false, 0, true);
        const int a = pass.out.action_index(s.label);
        if (a < 0) throw std::invalid_argument("imitation label is not a dirty constraint");
        epoch_loss -= std::log(pass.out.probs[a]);
        OutputGrad og;
        og.dlogits.resize(pass.out.probs.size());
        for (std::size_t j = 0; j < og.dlogits.size(); ++j) {
          og.dlogits[j] = (pass.out.probs[j] - (static_cast<int>(j) == a ? 1.0 : 0.0)) * inv;
        }
        add_scaled(g, backward(pass, og), 1.0);
      }
      adam.step(params, g);
    }
    stats.epoch_loss.push_back(epoch_loss / data.size());
  }
  stats.accuracy = label_agreement(params, data);
  return stats;
}

double label_agreement(const PolicyParams& params, const std::vector<LabeledState>& data) {
  if (data.empty()) return 0.0;
  int hits = 0;
  for (const auto& s : data) {
    const ForwardPass pass = forward(params, s.graph, false, 0, false);
    int best = 0;
    for (int i = 1; i < static_cast<int>(pass.out.logits.size()); ++i) {
      if (pass.out.logits[i] > pass.out.logits[best]) best = i;
    }
    if (pass.out.actions[best] == s.label) ++hits;
  }
  return static_cast<double>(hits) / data.size();
}

}  // namespace propsched
