#include "propsched/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "propsched/errors.hpp"

namespace propsched {

namespace {

void require_dirty(const SolverState& state) {
  if (state.dirty().empty()) throw EmptyDirty("select called with an empty dirty set");
}

/// argmax of score over dirty constraints; ties go to the lowest id.
template <typename Score>
ConstraintId argmax_dirty(const SolverState& state, Score&& score) {
  ConstraintId best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  state.dirty().for_each([&](ConstraintId c) {
    const double s = score(c);
    if (best == -1 || s > best_score || (s == best_score && c < best)) {
      best = c;
      best_score = s;
    }
  });
  return best;
}

}  // namespace

ActivityTable::ActivityTable(double decay, double bump) : decay_(decay), bump_(bump) {
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("activity decay must lie in (0, 1)");
  if (!(bump > 0.0)) throw ConfigError("activity bump must be positive");
}

double ActivityTable::max_score() const {
  double m = 0.0;
  for (double s : scores_) m = std::max(m, s);
  return m;
}

void ActivityTable::bump(ConstraintId c) {
  resize(c + 1);
  scores_[c] += bump_;
}

void ActivityTable::decay_all() {
  for (double& s : scores_) s *= decay_;
}

ConstraintId FifoScheduler::select(const SolverState& state) {
  require_dirty(state);
  return state.dirty().front();
}

ConstraintId RandomScheduler::select(const SolverState& state) {
  require_dirty(state);
  std::uniform_int_distribution<int> pick(0, state.dirty().size() - 1);
  int k = pick(rng_);
  ConstraintId chosen = -1;
  state.dirty().for_each([&](ConstraintId c) {
    if (k-- == 0) chosen = c;
  });
  return chosen;
}

ActivityScheduler::ActivityScheduler(double decay, double bump, bool vsids) : table_(decay, bump), vsids_(vsids) {}

ConstraintId ActivityScheduler::select(const SolverState& state) {
  require_dirty(state);
  table_.resize(state.num_constraints());
  return argmax_dirty(state, [&](ConstraintId c) { return table_.score(c); });
}

void ActivityScheduler::notify(ConstraintId cid, const StepOutcome& outcome) {
  if (outcome.delta_d > 0 || (vsids_ && outcome.caused_failure)) table_.bump(cid);
  table_.decay_all();
}

ConstraintId DomWdegScheduler::select(const SolverState& state) {
  require_dirty(state);
  return argmax_dirty(state, [&](ConstraintId c) {
    int smallest = std::numeric_limits<int>::max();
    for (int v : state.propagator(c).scope) smallest = std::min(smallest, state.domain(v).size());
    return -static_cast<double>(smallest) / (1.0 + weight(c));
  });
}

void DomWdegScheduler::notify(ConstraintId cid, const StepOutcome& outcome) {
  if (!outcome.caused_failure) return;
  if (static_cast<int>(weights_.size()) <= cid) weights_.resize(cid + 1, 0);
  ++weights_[cid];
}

ConstraintId GreedyScheduler::select(const SolverState& state) {
  require_dirty(state);
  SolverState scratch = state;
  const Snapshot base = scratch.snapshot();
  bool any_progress = false;
  ConstraintId best = -1;
  double best_ratio = -1.0;
  state.dirty().for_each([&](ConstraintId c) {
    const StepOutcome out = scratch.propagate(c);
    scratch.restore(base);
    if (out.delta_d == 0) return;
    any_progress = true;
    const double ratio = out.cost > 0.0 ? static_cast<double>(out.delta_d) / out.cost
                                        : std::numeric_limits<double>::infinity();
    if (best == -1 || ratio > best_ratio || (ratio == best_ratio && c < best)) {
      best = c;
      best_ratio = ratio;
    }
  });
  return any_progress ? best : state.dirty().front();
}

// ---------------------------------------------------------------------------

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

GateDecision entropy_gate(std::span<const double> probs, const FallbackConfig& cfg) {
  return entropy(probs) < cfg.tau ? GateDecision::UsePolicy : GateDecision::UseBackup;
}

double nearest_rank_percentile(std::vector<double> samples, double fraction) {
  if (samples.empty()) throw ConfigError("percentile of an empty sample");
  std::sort(samples.begin(), samples.end());
  const auto n = samples.size();
  // small epsilon keeps 0.8 * 10 from rounding down to 7
  auto rank = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9)) + 1;
  rank = std::clamp<std::size_t>(rank, 1, n);
  return samples[rank - 1];
}

FallbackConfig calibrate_fallback(std::vector<double> dev_entropies, double fraction) {
  FallbackConfig cfg;
  cfg.tau = nearest_rank_percentile(dev_entropies, fraction);
  cfg.calibration = std::move(dev_entropies);
  return cfg;
}

// ---------------------------------------------------------------------------

std::string to_string(SchedulerType t) {
  switch (t) {
    case SchedulerType::Fifo: return "fifo";
    case SchedulerType::Random: return "random";
    case SchedulerType::Activity: return "activity";
    case SchedulerType::Vsids: return "vsids";
    case SchedulerType::DomWdeg: return "domwdeg";
    case SchedulerType::Greedy: return "greedy";
    case SchedulerType::Policy: return "policy";
    case SchedulerType::Fallback: return "fallback";
  }
  return "?";
}

SchedulerType parse_scheduler_type(const std::string& name) {
  for (auto t : {SchedulerType::Fifo, SchedulerType::Random, SchedulerType::Activity, SchedulerType::Vsids,
                 SchedulerType::DomWdeg, SchedulerType::Greedy, SchedulerType::Policy, SchedulerType::Fallback}) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown scheduler '" + name + "'");
}

std::unique_ptr<Scheduler> make_classic_scheduler(const SchedulerSpec& spec) {
  switch (spec.type) {
    case SchedulerType::Fifo: return std::make_unique<FifoScheduler>();
    case SchedulerType::Random: return std::make_unique<RandomScheduler>(spec.seed);
    case SchedulerType::Activity: return std::make_unique<ActivityScheduler>(spec.decay, spec.bump, false);
    case SchedulerType::Vsids: return std::make_unique<ActivityScheduler>(spec.decay, spec.bump, true);
    case SchedulerType::DomWdeg: return std::make_unique<DomWdegScheduler>();
    case SchedulerType::Greedy: return std::make_unique<GreedyScheduler>();
    default: break;
  }
  throw ConfigError("scheduler '" + to_string(spec.type) + "' needs a policy");
}

}  // namespace propsched
