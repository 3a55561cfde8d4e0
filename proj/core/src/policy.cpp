#include "propsched/policy.hpp"

#include "propsched/errors.hpp"

namespace propsched {

PolicyScheduler::PolicyScheduler(std::shared_ptr<const PolicyParams> params, bool sample, std::uint64_t seed,
                                 double decay, double bump)
    : params_(std::move(params)), sample_(sample), rng_(seed), table_(decay, bump) {}

const PolicyOutput& PolicyScheduler::evaluate(const SolverState& state) {
  if (state.dirty().empty()) throw EmptyDirty("policy scheduler called with an empty dirty set");
  if (topo_model_ != &state.model()) {
    topo_ = make_topology(state.model());
    topo_model_ = &state.model();
  }
  table_.resize(state.num_constraints());
  graph_ = featurize(state, &table_, topo_);
  out_ = forward(*params_, graph_, false, 0, false).out;
  last_index_ = -1;
  ++evaluations_;
  entropy_sum_ += out_.entropy;
  return out_;
}

ConstraintId PolicyScheduler::choose() {
  int best = 0;
  if (sample_) {
    std::discrete_distribution<int> d(out_.probs.begin(), out_.probs.end());
    best = d(rng_);
  } else {
    for (int i = 1; i < static_cast<int>(out_.probs.size()); ++i) {
      if (out_.logits[i] > out_.logits[best]) best = i;
    }
  }
  last_index_ = best;
  return out_.actions[best];
}

ConstraintId PolicyScheduler::select(const SolverState& state) {
  evaluate(state);
  return choose();
}

void PolicyScheduler::notify(ConstraintId cid, const StepOutcome& outcome) {
  table_.resize(cid + 1);
  if (outcome.delta_d > 0) table_.bump(cid);
  table_.decay_all();
}

FallbackScheduler::FallbackScheduler(std::unique_ptr<PolicyScheduler> policy, std::unique_ptr<Scheduler> backup,
                                     FallbackConfig cfg)
    : policy_(std::move(policy)), backup_(std::move(backup)), cfg_(std::move(cfg)) {
  if (!policy_ || !backup_) throw ConfigError("fallback scheduler needs a policy and a backup");
  if (!(cfg_.tau >= 0.0)) throw ConfigError("tau must be non-negative");
}

ConstraintId FallbackScheduler::select(const SolverState& state) {
  const PolicyOutput& out = policy_->evaluate(state);
  ++steps_;
  entropy_sum_ += out.entropy;
  if (entropy_gate(out.probs, cfg_) == GateDecision::UsePolicy) return policy_->choose();
  ++backup_steps_;
  return backup_->select(state);
}

void FallbackScheduler::notify(ConstraintId cid, const StepOutcome& outcome) {
  policy_->notify(cid, outcome);
  backup_->notify(cid, outcome);
}

}  // namespace propsched
