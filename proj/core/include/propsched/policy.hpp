#ifndef PROPSCHED_POLICY_HPP_
#define PROPSCHED_POLICY_HPP_

#include <memory>
#include <random>

#include "propsched/gat.hpp"
#include "propsched/scheduler.hpp"

namespace propsched {

/// Scheduler backed by the GAT policy: argmax in eval mode, sampling otherwise.
///
/// Keeps its own activity table so that the activity feature is populated.
class PolicyScheduler final : public Scheduler {
 public:
  PolicyScheduler(std::shared_ptr<const PolicyParams> params, bool sample = false, std::uint64_t seed = 0,
                  double decay = 0.95, double bump = 1.0);

  ConstraintId select(const SolverState& state) override;
  void notify(ConstraintId cid, const StepOutcome& outcome) override;
  std::string name() const override { return "policy"; }
  const ActivityTable* activity() const override { return &table_; }

  /// Featurizes and scores the state without choosing.
  const PolicyOutput& evaluate(const SolverState& state);
  /// Picks from the last evaluation.
  ConstraintId choose();

  const StateGraph& last_graph() const { return graph_; }
  const PolicyOutput& last_output() const { return out_; }
  int last_index() const { return last_index_; }
  const PolicyParams& params() const { return *params_; }
  int evaluations() const { return evaluations_; }
  double mean_entropy() const { return evaluations_ ? entropy_sum_ / evaluations_ : 0.0; }

 private:
  std::shared_ptr<const PolicyParams> params_;
  bool sample_;
  std::mt19937_64 rng_;
  ActivityTable table_;
  const Model* topo_model_ = nullptr;
  std::shared_ptr<const GraphTopology> topo_;
  StateGraph graph_;
  PolicyOutput out_;
  int last_index_ = -1;
  int evaluations_ = 0;
  double entropy_sum_ = 0.0;
};

/// Uses the policy when its entropy is below tau, otherwise the backup.
/// Both are notified of every step.
class FallbackScheduler final : public Scheduler {
 public:
  FallbackScheduler(std::unique_ptr<PolicyScheduler> policy, std::unique_ptr<Scheduler> backup, FallbackConfig cfg);

  ConstraintId select(const SolverState& state) override;
  void notify(ConstraintId cid, const StepOutcome& outcome) override;
  std::string name() const override { return "fallback"; }
  const ActivityTable* activity() const override { return policy_->activity(); }

  int steps() const { return steps_; }
  int backup_steps() const { return backup_steps_; }
  double fallback_fraction() const { return steps_ ? static_cast<double>(backup_steps_) / steps_ : 0.0; }
  double mean_entropy() const { return steps_ ? entropy_sum_ / steps_ : 0.0; }

 private:
  std::unique_ptr<PolicyScheduler> policy_;
  std::unique_ptr<Scheduler> backup_;
  FallbackConfig cfg_;
  int steps_ = 0;
  int backup_steps_ = 0;
  double entropy_sum_ = 0.0;
};

}  // namespace propsched

#endif  // PROPSCHED_POLICY_HPP_
