#ifndef PROPSCHED_SCHEDULER_HPP_
#define PROPSCHED_SCHEDULER_HPP_

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "propsched/engine.hpp"

namespace propsched {

/// Per-constraint scores that are bumped on useful steps and decay geometrically.
class ActivityTable {
 public:
  ActivityTable(double decay = 0.95, double bump = 1.0);

  double decay() const { return decay_; }
  double bump_amount() const { return bump_; }
  double score(ConstraintId c) const { return c < static_cast<int>(scores_.size()) ? scores_[c] : 0.0; }
  std::span<const double> scores() const { return scores_; }
  double max_score() const;

  void resize(int n) {
    if (static_cast<int>(scores_.size()) < n) scores_.resize(n, 0.0);
  }
  void bump(ConstraintId c);
  void decay_all();

 private:
  double decay_;
  double bump_;
  std::vector<double> scores_;
};

/// Chooses the next dirty constraint to propagate.
class Scheduler {
 public:
  virtual ~Scheduler() = default;

  /// Returns a member of state.dirty(). Throws EmptyDirty.
  virtual ConstraintId select(const SolverState& state) = 0;
  /// Observes the outcome of propagating cid.
  virtual void notify(ConstraintId /*cid*/, const StepOutcome& /*outcome*/) {}
  virtual std::string name() const = 0;
  /// Activity scores when the scheduler keeps them, else nullptr.
  virtual const ActivityTable* activity() const { return nullptr; }
};

class FifoScheduler final : public Scheduler {
 public:
  ConstraintId select(const SolverState& state) override;
  std::string name() const override { return "fifo"; }
};

class RandomScheduler final : public Scheduler {
 public:
  explicit RandomScheduler(std::uint64_t seed) : rng_(seed) {}
  ConstraintId select(const SolverState& state) override;
  std::string name() const override { return "random"; }

 private:
  std::mt19937_64 rng_;
};

/// Activity: bump on pruning/derivation. VSIDS-style additionally bumps on failure.
class ActivityScheduler final : public Scheduler {
 public:
  ActivityScheduler(double decay = 0.95, double bump = 1.0, bool vsids = false);
  ConstraintId select(const SolverState& state) override;
  void notify(ConstraintId cid, const StepOutcome& outcome) override;
  std::string name() const override { return vsids_ ? "vsids" : "activity"; }
  const ActivityTable* activity() const override { return &table_; }
  ActivityTable& table() { return table_; }

 private:
  ActivityTable table_;
  bool vsids_;
};

/// argmin over dirty of (smallest scope domain) / (1 + failure weight).
class DomWdegScheduler final : public Scheduler {
 public:
  ConstraintId select(const SolverState& state) override;
  void notify(ConstraintId cid, const StepOutcome& outcome) override;
  std::string name() const override { return "domwdeg"; }
  int weight(ConstraintId c) const { return c < static_cast<int>(weights_.size()) ? weights_[c] : 0; }

 private:
  std::vector<int> weights_;
};

/// One-step lookahead maximizing delta_d / cost.
class GreedyScheduler final : public Scheduler {
 public:
  ConstraintId select(const SolverState& state) override;
  std::string name() const override { return "greedy"; }
};

// ---------------------------------------------------------------------------
// Entropy fallback gate

enum class GateDecision { UsePolicy, UseBackup };

struct FallbackConfig {
  double tau = 0.0;
  std::vector<double> calibration;
};

/// Shannon entropy in nats; zero-probability entries contribute nothing.
double entropy(std::span<const double> probs);

GateDecision entropy_gate(std::span<const double> probs, const FallbackConfig& cfg);

/// Smallest sample v such that at least `fraction` of the samples lie strictly
/// below it: the value at 1-based rank floor(fraction * n) + 1, clamped to n.
double nearest_rank_percentile(std::vector<double> samples, double fraction);

/// tau at the 80th percentile of dev-set entropies.
FallbackConfig calibrate_fallback(std::vector<double> dev_entropies, double fraction = 0.8);

// ---------------------------------------------------------------------------

enum class SchedulerType { Fifo, Random, Activity, Vsids, DomWdeg, Greedy, Policy, Fallback };

/// Configuration for the classical schedulers (learned ones need a policy handle).
struct SchedulerSpec {
  SchedulerType type = SchedulerType::Fifo;
  std::uint64_t seed = 0;
  double decay = 0.95;
  double bump = 1.0;
  double tau = 0.0;
  SchedulerType backup = SchedulerType::Activity;
};

std::string to_string(SchedulerType t);
/// Throws ConfigError on unknown names.
SchedulerType parse_scheduler_type(const std::string& name);

/// Builds Fifo/Random/Activity/Vsids/DomWdeg/Greedy. Throws ConfigError for learned kinds.
std::unique_ptr<Scheduler> make_classic_scheduler(const SchedulerSpec& spec);

}  // namespace propsched

#endif  // PROPSCHED_SCHEDULER_HPP_
