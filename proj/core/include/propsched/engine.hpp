#ifndef PROPSCHED_ENGINE_HPP_
#define PROPSCHED_ENGINE_HPP_

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

#include "propsched/domain.hpp"
#include "propsched/instance.hpp"

namespace propsched {

class Scheduler;

using ConstraintId = int;

enum class Status { Running, Fixpoint, Failed };
std::string_view to_string(Status s);

/// Weights of the per-step reward alpha * delta_d - beta * cost.
struct RewardConfig {
  double alpha = 1.0;
  double beta = 0.1;
};

/// Ring of the most recent step indices at which a variable's domain changed.
class ChangeHistory {
 public:
  static constexpr int kMaxWindow = 32;

  explicit ChangeHistory(int window = 8);

  void record(std::int64_t step);
  int window() const { return window_; }
  int size() const { return count_; }
  /// Entries oldest first; strictly increasing.
  std::vector<std::int64_t> entries() const;
  /// Number of recorded changes at step indices > now - window.
  int count_since(std::int64_t now) const;

  friend bool operator==(const ChangeHistory&, const ChangeHistory&) = default;

 private:
  std::array<std::int64_t, kMaxWindow> ring_{};
  int window_;
  int head_ = 0;
  int count_ = 0;
};

struct Variable {
  int id = 0;
  Domain domain;
  int degree = 0;  ///< number of constraints whose scope includes this variable
  ChangeHistory history;

  friend bool operator==(const Variable&, const Variable&) = default;
};

/// One constraint's executable form.
struct Propagator {
  ConstraintId id = 0;
  ConstraintKind kind = ConstraintKind::NotEqual;
  std::vector<int> scope;
  /// Distinct scope variables, ascending; a change to any of them makes this constraint dirty.
  std::vector<int> watched;
  double k_const = 1.0;
  Mode mode = Mode::Pruning;

  Value lhs = 0, left = 0, right = 0;  // GrammarRule
  Value label = 0;                     // Lexical
  std::vector<Domain> support_fwd;     // BinaryTable: allowed second values per first value
  std::vector<Domain> support_bwd;     // BinaryTable: allowed first values per second value
  std::vector<long long> weights;      // LinearLeq
  long long bound = 0;

  int arity() const { return static_cast<int>(scope.size()); }
};

/// Cost constant per constraint kind: 1 for grammar rules and binary
/// constraints, 0.5 for lexical lookups, arity for n-ary constraints.
double default_k_const(ConstraintKind kind, int arity);

/// Insertion-ordered set of constraint ids with O(1) insert/erase.
class DirtySet {
 public:
  DirtySet() = default;
  explicit DirtySet(int universe);

  bool contains(ConstraintId c) const { return in_[c] != 0; }
  bool empty() const { return size_ == 0; }
  int size() const { return size_; }
  /// Appends c unless already present. Returns true iff inserted.
  bool push_back(ConstraintId c);
  bool erase(ConstraintId c);
  /// Oldest entry; -1 when empty.
  ConstraintId front() const { return head_; }
  std::vector<ConstraintId> to_vector() const;

  template <typename F>
  void for_each(F&& f) const {
    for (ConstraintId c = head_; c != -1; c = next_[c]) f(c);
  }

  friend bool operator==(const DirtySet& a, const DirtySet& b) { return a.to_vector() == b.to_vector(); }

 private:
  std::vector<ConstraintId> next_, prev_;
  std::vector<char> in_;
  ConstraintId head_ = -1, tail_ = -1;
  int size_ = 0;
};

struct StepOutcome {
  ConstraintId cid = -1;
  long delta_d = 0;  ///< total magnitude of domain change
  double cost = 0.0;
  std::vector<ConstraintId> newly_dirty;
  double reward = 0.0;
  bool caused_failure = false;
};

double reward(const StepOutcome& outcome, const RewardConfig& cfg);

struct EngineOptions {
  RewardConfig reward;
  int history_window = 8;
  /// Optional stochastic propagation: after each step in pruning mode, every
  /// remaining value of a changed variable is dropped with this probability.
  double noise_p = 0.0;
  std::uint64_t noise_seed = 0;
};

/// Immutable part of an instance, shared between states built from it.
struct Model {
  Mode mode = Mode::Pruning;
  std::vector<Propagator> propagators;
  std::vector<std::vector<ConstraintId>> watchers;  ///< per variable, ascending
  std::vector<int> capacities;
  int max_degree = 0;
  int max_arity = 0;
  InstanceMeta meta;
  EngineOptions options;
};

/// Mutable part of the solver state; a snapshot is a copy of it.
struct Snapshot {
  std::vector<Variable> variables;
  DirtySet dirty;
  std::int64_t step = 0;
  double cum_cost = 0.0;
  Status status = Status::Running;
  std::mt19937_64 noise_rng;

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

/// The MDP state: domains, constraints, dirty set and counters.
///
/// Single owner; copy to hand a state to another worker.
class SolverState {
 public:
  SolverState(std::shared_ptr<const Model> model, Snapshot initial);

  const Model& model() const { return *model_; }
  Mode mode() const { return model_->mode; }
  const std::vector<Variable>& variables() const { return dyn_.variables; }
  const Variable& variable(int v) const { return dyn_.variables[v]; }
  const Domain& domain(int v) const { return dyn_.variables[v].domain; }
  const std::vector<Propagator>& propagators() const { return model_->propagators; }
  const Propagator& propagator(ConstraintId c) const;
  int num_constraints() const { return static_cast<int>(model_->propagators.size()); }
  int num_variables() const { return static_cast<int>(dyn_.variables.size()); }
  const DirtySet& dirty() const { return dyn_.dirty; }
  std::int64_t step() const { return dyn_.step; }
  double cum_cost() const { return dyn_.cum_cost; }
  Status status() const { return dyn_.status; }
  const RewardConfig& reward_config() const { return model_->options.reward; }

  /// Sum over scope of |D(x)| * k, on current domains.
  double step_cost(ConstraintId c) const;

  /// Applies one dirty constraint to its local fixpoint.
  StepOutcome propagate(ConstraintId c);

  /// Number of domain values the constraint would change if applied now,
  /// from a single non-iterated pass. Does not modify the state.
  long pending_change(ConstraintId c) const;

  Snapshot snapshot() const { return dyn_; }
  void restore(const Snapshot& s) { dyn_ = s; }

  long total_domain_size() const;

  friend bool operator==(const SolverState& a, const SolverState& b) {
    return a.model_ == b.model_ && a.dyn_ == b.dyn_;
  }

 private:
  /// Returns false if a domain became empty (pruning mode).
  bool apply(const Propagator& p, std::vector<int>& changed, long& delta);

  std::shared_ptr<const Model> model_;
  Snapshot dyn_;
};

/// Materializes an instance. All constraints start dirty in id order.
/// Throws MalformedSpec.
SolverState build_instance(const InstanceSpec& spec, const EngineOptions& options = {});

struct TraceStep {
  ConstraintId cid;
  long delta_d;
  double cost;
  double reward;
};

enum class RunOutcome { Fixpoint, Failed, BudgetExhausted };
std::string_view to_string(RunOutcome o);

struct RunTrace {
  std::vector<TraceStep> steps;
  Status status = Status::Running;
  RunOutcome outcome = RunOutcome::BudgetExhausted;

  double total_cost() const;
  long total_delta() const;
  double total_reward() const;
};

/// Repeatedly asks the scheduler for a dirty constraint and propagates it until
/// fixpoint, failure or the step budget runs out.
RunTrace run_to_fixpoint(SolverState& state, Scheduler& scheduler, std::size_t budget);

}  // namespace propsched

#endif  // PROPSCHED_ENGINE_HPP_
