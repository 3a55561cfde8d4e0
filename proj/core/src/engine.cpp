#include "propsched/engine.hpp"

#include <algorithm>
#include <limits>

#include "propsched/errors.hpp"
#include "propsched/scheduler.hpp"

namespace propsched {

std::string_view to_string(Status s) {
  switch (s) {
    case Status::Running: return "running";
    case Status::Fixpoint: return "fixpoint";
    case Status::Failed: return "failed";
  }
  return "?";
}

std::string_view to_string(RunOutcome o) {
  switch (o) {
    case RunOutcome::Fixpoint: return "fixpoint";
    case RunOutcome::Failed: return "failed";
    case RunOutcome::BudgetExhausted: return "budget_exhausted";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// ChangeHistory

ChangeHistory::ChangeHistory(int window) : window_(std::clamp(window, 1, kMaxWindow)) {}

void ChangeHistory::record(std::int64_t step) {
  // several changes within one step count once
  if (count_ > 0 && ring_[(head_ + window_ - 1) % window_] == step) return;
  ring_[head_] = step;
  head_ = (head_ + 1) % window_;
  count_ = std::min(count_ + 1, window_);
}

std::vector<std::int64_t> ChangeHistory::entries() const {
  std::vector<std::int64_t> out;
  out.reserve(count_);
  for (int i = count_; i > 0; --i) out.push_back(ring_[(head_ + window_ - i) % window_]);
  return out;
}

int ChangeHistory::count_since(std::int64_t now) const {
  int n = 0;
  for (int i = 1; i <= count_; ++i) {
    if (ring_[(head_ + window_ - i) % window_] > now - window_) ++n;
  }
  return n;
}

// ---------------------------------------------------------------------------
// DirtySet

DirtySet::DirtySet(int universe) : next_(universe, -1), prev_(universe, -1), in_(universe, 0) {}

bool DirtySet::push_back(ConstraintId c) {
  if (in_[c]) return false;
  in_[c] = 1;
  prev_[c] = tail_;
  next_[c] = -1;
  if (tail_ != -1) {
    next_[tail_] = c;
  } else {
    head_ = c;
  }
  tail_ = c;
  ++size_;
  return true;
}

bool DirtySet::erase(ConstraintId c) {
  if (c < 0 || c >= static_cast<int>(in_.size()) || !in_[c]) return false;
  in_[c] = 0;
  if (prev_[c] != -1) {
    next_[prev_[c]] = next_[c];
  } else {
    head_ = next_[c];
  }
  if (next_[c] != -1) {
    prev_[next_[c]] = prev_[c];
  } else {
    tail_ = prev_[c];
  }
  next_[c] = prev_[c] = -1;
  --size_;
  return true;
}

std::vector<ConstraintId> DirtySet::to_vector() const {
  std::vector<ConstraintId> out;
  out.reserve(size_);
  for_each([&](ConstraintId c) { out.push_back(c); });
  return out;
}

// ---------------------------------------------------------------------------

double default_k_const(ConstraintKind kind, int arity) {
  switch (kind) {
    case ConstraintKind::GrammarRule: return 1.0;
    case ConstraintKind::Lexical: return 0.5;
    case ConstraintKind::BinaryTable:
    case ConstraintKind::NotEqual: return 1.0;
    case ConstraintKind::AllDifferent:
    case ConstraintKind::LinearLeq: return static_cast<double>(arity);
  }
  return 1.0;
}

double reward(const StepOutcome& outcome, const RewardConfig& cfg) {
  return cfg.alpha * static_cast<double>(outcome.delta_d) - cfg.beta * outcome.cost;
}

SolverState build_instance(const InstanceSpec& spec, const EngineOptions& options) {
  validate(spec);
  auto model = std::make_shared<Model>();
  model->mode = spec.mode;
  model->meta = spec.meta;
  model->options = options;
  const int nvars = static_cast<int>(spec.variables.size());
  const int ncons = static_cast<int>(spec.constraints.size());
  model->watchers.assign(nvars, {});
  for (const auto& v : spec.variables) model->capacities.push_back(v.capacity);

  Snapshot init;
  init.variables.reserve(nvars);
  for (const auto& vs : spec.variables) {
    Variable v{vs.id, Domain(vs.capacity, spec.mode == Mode::Pruning && !vs.domain), 0,
               ChangeHistory(options.history_window)};
    if (vs.domain) {
      for (Value x : *vs.domain) v.domain.insert(x);
    }
    init.variables.push_back(std::move(v));
  }

  model->propagators.reserve(ncons);
  for (const auto& cs : spec.constraints) {
    Propagator p;
    p.id = cs.id;
    p.kind = cs.kind;
    p.scope = cs.scope;
    p.mode = spec.mode;
    p.k_const = default_k_const(cs.kind, p.arity());
    p.lhs = cs.lhs;
    p.left = cs.left;
    p.right = cs.right;
    p.label = cs.label;
    p.weights = cs.weights;
    p.bound = cs.bound;
    p.watched = cs.scope;
    if (cs.kind == ConstraintKind::BinaryTable) {
      const int cx = spec.variables[cs.scope[0]].capacity;
      const int cy = spec.variables[cs.scope[1]].capacity;
      p.support_fwd.assign(cx, Domain(cy));
      p.support_bwd.assign(cy, Domain(cx));
      for (auto [a, b] : cs.allowed) {
        p.support_fwd[a].insert(b);
        p.support_bwd[b].insert(a);
      }
    }
    std::sort(p.watched.begin(), p.watched.end());
    p.watched.erase(std::unique(p.watched.begin(), p.watched.end()), p.watched.end());
    for (int v : p.watched) model->watchers[v].push_back(p.id);
    std::vector<int> uniq = p.scope;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (int v : uniq) ++init.variables[v].degree;
    model->max_arity = std::max(model->max_arity, p.arity());
    model->propagators.push_back(std::move(p));
  }
  for (const auto& v : init.variables) model->max_degree = std::max(model->max_degree, v.degree);

  init.dirty = DirtySet(ncons);
  for (ConstraintId c = 0; c < ncons; ++c) init.dirty.push_back(c);
  init.noise_rng.seed(options.noise_seed);
  init.status = Status::Running;
  if (spec.mode == Mode::Pruning) {
    for (const auto& v : init.variables) {
      if (v.domain.empty()) init.status = Status::Failed;
    }
  }
  if (init.status == Status::Running && init.dirty.empty()) init.status = Status::Fixpoint;
  return SolverState(std::move(model), std::move(init));
}

SolverState::SolverState(std::shared_ptr<const Model> model, Snapshot initial)
    : model_(std::move(model)), dyn_(std::move(initial)) {}

const Propagator& SolverState::propagator(ConstraintId c) const {
  if (c < 0 || c >= num_constraints()) throw UnknownConstraint("unknown constraint id " + std::to_string(c));
  return model_->propagators[c];
}

double SolverState::step_cost(ConstraintId c) const {
  const Propagator& p = propagator(c);
  double sum = 0.0;
  for (int v : p.scope) sum += dyn_.variables[v].domain.size();
  return sum * p.k_const;
}

long SolverState::total_domain_size() const {
  long n = 0;
  for (const auto& v : dyn_.variables) n += v.domain.size();
  return n;
}

namespace {

// Each rule below returns false on an emptied domain and reports the
// variables it touched through `mark`.

template <typename Mark>
bool revise_table(Domain& x, const Domain& y, const std::vector<Domain>& support, Mark&& mark, int xv, long& delta) {
  std::vector<Value> drop;
  x.for_each([&](Value a) {
    bool supported = false;
    y.for_each([&](Value b) {
      if (!supported && support[a].contains(b)) supported = true;
    });
    if (!supported) drop.push_back(a);
  });
  for (Value a : drop) x.erase(a);
  if (!drop.empty()) {
    delta += static_cast<long>(drop.size());
    mark(xv);
  }
  return !x.empty();
}

long long min_contrib(long long w, const Domain& d) { return w >= 0 ? w * d.min() : w * d.max(); }

}  // namespace

bool SolverState::apply(const Propagator& p, std::vector<int>& changed, long& delta) {
  auto& vars = dyn_.variables;
  auto mark = [&](int v) {
    if (std::find(changed.begin(), changed.end(), v) == changed.end()) changed.push_back(v);
  };
  switch (p.kind) {
    case ConstraintKind::GrammarRule: {
      if (vars[p.scope[0]].domain.contains(p.left) && vars[p.scope[1]].domain.contains(p.right) &&
          vars[p.scope[2]].domain.insert(p.lhs)) {
        delta += 1;
        mark(p.scope[2]);
      }
      return true;
    }
    case ConstraintKind::Lexical: {
      if (vars[p.scope[0]].domain.insert(p.label)) {
        delta += 1;
        mark(p.scope[0]);
      }
      return true;
    }
    case ConstraintKind::NotEqual: {
      const int x = p.scope[0], y = p.scope[1];
      bool progress = true;
      while (progress) {
        progress = false;
        if (vars[x].domain.size() == 1 && vars[y].domain.erase(vars[x].domain.min())) {
          delta += 1;
          mark(y);
          progress = true;
          if (vars[y].domain.empty()) return false;
        }
        if (vars[y].domain.size() == 1 && vars[x].domain.erase(vars[y].domain.min())) {
          delta += 1;
          mark(x);
          progress = true;
          if (vars[x].domain.empty()) return false;
        }
      }
      return true;
    }
    case ConstraintKind::BinaryTable: {
      const int x = p.scope[0], y = p.scope[1];
      while (true) {
        const long before = delta;
        if (!revise_table(vars[x].domain, vars[y].domain, p.support_fwd, mark, x, delta)) return false;
        if (!revise_table(vars[y].domain, vars[x].domain, p.support_bwd, mark, y, delta)) return false;
        if (delta == before) return true;
      }
    }
    case ConstraintKind::AllDifferent: {
      bool progress = true;
      while (progress) {
        progress = false;
        for (int i : p.scope) {
          if (vars[i].domain.size() != 1) continue;
          const Value fixed = vars[i].domain.min();
          for (int j : p.scope) {
            if (j == i || !vars[j].domain.erase(fixed)) continue;
            delta += 1;
            mark(j);
            progress = true;
            if (vars[j].domain.empty()) return false;
          }
        }
      }
      return true;
    }
    case ConstraintKind::LinearLeq: {
      bool progress = true;
      while (progress) {
        progress = false;
        long long total = 0;
        for (std::size_t i = 0; i < p.scope.size(); ++i) total += min_contrib(p.weights[i], vars[p.scope[i]].domain);
        for (std::size_t i = 0; i < p.scope.size(); ++i) {
          Domain& d = vars[p.scope[i]].domain;
          const long long w = p.weights[i];
          const long long others = total - min_contrib(w, d);
          std::vector<Value> drop;
          d.for_each([&](Value v) {
            if (others + w * v > p.bound) drop.push_back(v);
          });
          if (drop.empty()) continue;
          for (Value v : drop) d.erase(v);
          delta += static_cast<long>(drop.size());
          mark(p.scope[i]);
          progress = true;
          if (d.empty()) return false;
          total = others + min_contrib(w, d);
        }
      }
      return true;
    }
  }
  return true;
}

long SolverState::pending_change(ConstraintId c) const {
  const Propagator& p = propagator(c);
  const auto& vars = dyn_.variables;
  auto dom = [&](int i) -> const Domain& { return vars[p.scope[i]].domain; };
  long n = 0;
  switch (p.kind) {
    case ConstraintKind::GrammarRule:
      return dom(0).contains(p.left) && dom(1).contains(p.right) && !dom(2).contains(p.lhs) ? 1 : 0;
    case ConstraintKind::Lexical: return dom(0).contains(p.label) ? 0 : 1;
    case ConstraintKind::NotEqual:
      if (dom(0).size() == 1 && dom(1).contains(dom(0).min())) ++n;
      if (dom(1).size() == 1 && dom(0).contains(dom(1).min())) ++n;
      return n;
    case ConstraintKind::BinaryTable: {
      auto unsupported = [&](const Domain& x, const Domain& y, const std::vector<Domain>& support) {
        x.for_each([&](Value a) {
          bool ok = false;
          y.for_each([&](Value b) { ok = ok || support[a].contains(b); });
          if (!ok) ++n;
        });
      };
      unsupported(dom(0), dom(1), p.support_fwd);
      unsupported(dom(1), dom(0), p.support_bwd);
      return n;
    }
    case ConstraintKind::AllDifferent:
      for (int i = 0; i < p.arity(); ++i) {
        if (dom(i).size() != 1) continue;
        for (int j = 0; j < p.arity(); ++j) {
          if (j != i && dom(j).contains(dom(i).min())) ++n;
        }
      }
      return n;
    case ConstraintKind::LinearLeq: {
      for (int i = 0; i < p.arity(); ++i) {
        if (dom(i).empty()) return 0;
      }
      long long total = 0;
      for (int i = 0; i < p.arity(); ++i) total += min_contrib(p.weights[i], dom(i));
      for (int i = 0; i < p.arity(); ++i) {
        const long long others = total - min_contrib(p.weights[i], dom(i));
        dom(i).for_each([&](Value v) {
          if (others + p.weights[i] * v > p.bound) ++n;
        });
      }
      return n;
    }
  }
  return n;
}

StepOutcome SolverState::propagate(ConstraintId c) {
  const Propagator& p = propagator(c);
  if (dyn_.status != Status::Running) {
    throw Halted("cannot propagate constraint " + std::to_string(c) + ": state is " + std::string(to_string(dyn_.status)));
  }
  if (!dyn_.dirty.contains(c)) throw NotDirty("constraint " + std::to_string(c) + " is not dirty");

  StepOutcome out;
  out.cid = c;
  out.cost = step_cost(c);
  dyn_.dirty.erase(c);

  std::vector<int> changed;
  long delta = 0;
  bool ok = apply(p, changed, delta);
  // Only changes made after the rule reached its own fixpoint re-dirty it.
  std::vector<int> perturbed;

  const double noise_p = model_->options.noise_p;
  if (ok && noise_p > 0.0 && model_->mode == Mode::Pruning) {
    std::bernoulli_distribution drop(noise_p);
    for (int v : p.scope) {
      Domain& d = dyn_.variables[v].domain;
      for (Value x : d.values()) {
        if (drop(dyn_.noise_rng)) {
          d.erase(x);
          delta += 1;
          if (std::find(changed.begin(), changed.end(), v) == changed.end()) changed.push_back(v);
          if (std::find(perturbed.begin(), perturbed.end(), v) == perturbed.end()) perturbed.push_back(v);
        }
      }
      if (d.empty()) ok = false;
    }
  }

  for (int v : changed) {
    dyn_.variables[v].history.record(dyn_.step);
    for (ConstraintId w : model_->watchers[v]) {
      if (w == c && perturbed.empty()) continue;
      if (dyn_.dirty.push_back(w)) out.newly_dirty.push_back(w);
    }
  }
  out.delta_d = delta;
  out.reward = reward(out, model_->options.reward);
  dyn_.cum_cost += out.cost;
  dyn_.step += 1;

  if (!ok && model_->mode == Mode::Pruning) {
    dyn_.status = Status::Failed;
    out.caused_failure = true;
  } else if (dyn_.dirty.empty()) {
    dyn_.status = Status::Fixpoint;
  }
  return out;
}

// ---------------------------------------------------------------------------

double RunTrace::total_cost() const {
  double s = 0.0;
  for (const auto& st : steps) s += st.cost;
  return s;
}

long RunTrace::total_delta() const {
  long s = 0;
  for (const auto& st : steps) s += st.delta_d;
  return s;
}

double RunTrace::total_reward() const {
  double s = 0.0;
  for (const auto& st : steps) s += st.reward;
  return s;
}

RunTrace run_to_fixpoint(SolverState& state, Scheduler& scheduler, std::size_t budget) {
  RunTrace trace;
  while (state.status() == Status::Running && trace.steps.size() < budget) {
    const ConstraintId c = scheduler.select(state);
    const StepOutcome out = state.propagate(c);
    scheduler.notify(c, out);
    trace.steps.push_back({c, out.delta_d, out.cost, out.reward});
  }
  trace.status = state.status();
  switch (state.status()) {
    case Status::Fixpoint: trace.outcome = RunOutcome::Fixpoint; break;
    case Status::Failed: trace.outcome = RunOutcome::Failed; break;
    case Status::Running: trace.outcome = RunOutcome::BudgetExhausted; break;
  }
  return trace;
}

}  // namespace propsched
