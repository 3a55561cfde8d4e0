#include <gtest/gtest.h>

#include <numeric>

#include "propsched/errors.hpp"
#include "test_util.hpp"

namespace propsched {
namespace {

using testing::Builder;
using testing::range;

TEST(Domain, InsertEraseAndIteration) {
  Domain d(10);
  EXPECT_TRUE(d.empty());
  EXPECT_TRUE(d.insert(3));
  EXPECT_FALSE(d.insert(3));
  d.insert(7);
  EXPECT_EQ(d.size(), 2);
  EXPECT_EQ(d.min(), 3);
  EXPECT_EQ(d.max(), 7);
  EXPECT_EQ(d.values(), (std::vector<Value>{3, 7}));
  EXPECT_TRUE(d.erase(3));
  EXPECT_FALSE(d.contains(3));
  EXPECT_FALSE(d.contains(-1));
  EXPECT_FALSE(d.contains(10));
}

TEST(Domain, LargeCapacitySpills) {
  Domain d(200, true);
  EXPECT_EQ(d.size(), 200);
  d.erase(150);
  d.erase(0);
  EXPECT_EQ(d.size(), 198);
  EXPECT_EQ(d.min(), 1);
  EXPECT_EQ(d.max(), 199);
  Domain e = d;
  EXPECT_EQ(d, e);
  e.erase(64);
  EXPECT_NE(d, e);
}

TEST(DirtySet, KeepsInsertionOrder) {
  DirtySet s(10);
  s.push_back(4);
  s.push_back(2);
  s.push_back(7);
  EXPECT_FALSE(s.push_back(2));
  EXPECT_EQ(s.to_vector(), (std::vector<ConstraintId>{4, 2, 7}));
  s.erase(2);
  s.push_back(2);
  EXPECT_EQ(s.to_vector(), (std::vector<ConstraintId>{4, 7, 2}));
  EXPECT_EQ(s.front(), 4);
}

TEST(BuildInstance, KnapsackShape) {
  const KnapsackInstance k = knapsack_instance({{2, 3}, {3, 4}}, 4);
  SolverState st = build_instance(k.spec);
  EXPECT_EQ(st.num_variables(), 2);
  EXPECT_EQ(st.num_constraints(), 1);
  EXPECT_EQ(st.propagator(0).kind, ConstraintKind::LinearLeq);
  EXPECT_EQ(st.dirty().to_vector(), (std::vector<ConstraintId>{0}));
  EXPECT_EQ(st.step(), 0);
  EXPECT_EQ(st.cum_cost(), 0.0);
  EXPECT_EQ(st.status(), Status::Running);
}

TEST(BuildInstance, ToyParseCounts) {
  const Grammar g = toy_grammar();
  const InstanceSpec spec = build_parse_instance(g, {"the", "dog", "saw", "the", "cat"});
  EXPECT_EQ(spec.variables.size(), 15u);
  int triples = 0;
  for (int i = 0; i <= 5; ++i) {
    for (int k = i + 1; k <= 5; ++k) {
      for (int j = k + 1; j <= 5; ++j) ++triples;
    }
  }
  int lexical = 0, rules = 0;
  std::set<int> lexical_vars;
  for (const auto& c : spec.constraints) {
    if (c.kind == ConstraintKind::Lexical) {
      ++lexical;
      lexical_vars.insert(c.scope[0]);
    } else {
      ++rules;
    }
  }
  EXPECT_EQ(rules, triples * static_cast<int>(g.binary_rules.size()));
  EXPECT_EQ(lexical, 5);
  EXPECT_EQ(lexical_vars.size(), 5u);
}

TEST(BuildInstance, RejectsMalformed) {
  Builder b;
  const int x = b.var(2), y = b.var(2), z = b.var(2);
  b.linear_leq({x, y, z}, {1, 1}, 1);
  EXPECT_THROW(build_instance(b.spec), MalformedSpec);

  Builder c;
  c.var(2, std::vector<Value>{0, 2});
  EXPECT_THROW(build_instance(c.spec), MalformedSpec);
}

TEST(StepCost, MatchesHandValues) {
  Builder d(Mode::Derivation);
  const int a = d.var(6, std::vector<Value>{0, 1});
  const int b = d.var(6, std::vector<Value>{0, 1, 2});
  const int c = d.var(6, std::vector<Value>{0, 1, 2, 3});
  d.rule(a, b, c, 5, 0, 0);
  d.lexical(c, 4);
  SolverState st = build_instance(d.spec);
  EXPECT_DOUBLE_EQ(st.step_cost(0), 9.0);
  EXPECT_DOUBLE_EQ(st.step_cost(1), 2.0);

  Builder p;
  const int x = p.var(3), y = p.var(3), z = p.var(3);
  p.all_different({x, y, z});
  SolverState s2 = build_instance(p.spec);
  EXPECT_DOUBLE_EQ(s2.step_cost(0), 27.0);
  EXPECT_THROW(s2.step_cost(5), UnknownConstraint);
}

TEST(StepCost, IndependentSumForEveryKind) {
  for (int i = 0; i < 24; ++i) {
    SolverState st = build_instance(testing::mixed_instance(i, 11));
    for (ConstraintId c = 0; c < st.num_constraints(); ++c) {
      const Propagator& p = st.propagator(c);
      double k = 1.0;
      if (p.kind == ConstraintKind::Lexical) k = 0.5;
      if (p.kind == ConstraintKind::AllDifferent || p.kind == ConstraintKind::LinearLeq) k = p.arity();
      double sum = 0.0;
      for (int v : p.scope) sum += st.domain(v).size();
      EXPECT_DOUBLE_EQ(st.step_cost(c), sum * k);
    }
  }
}

TEST(Propagate, GrammarRuleDerivesAndDirtiesParents) {
  const Grammar g = toy_grammar();
  const InstanceSpec spec = build_parse_instance(g, {"the", "dog", "saw", "the", "cat"});
  SolverState st = build_instance(spec);
  // Apply the lexical constraints for "the" and "dog" first.
  for (const auto& c : spec.constraints) {
    if (c.kind == ConstraintKind::Lexical && (c.span[0] == 0 || c.span[0] == 1)) st.propagate(c.id);
  }
  const int x02 = span_variable(5, 0, 2);
  int np_rule = -1;
  for (const auto& c : spec.constraints) {
    if (c.kind == ConstraintKind::GrammarRule && c.lhs == 1 && c.span == std::vector<int>{0, 1, 2}) np_rule = c.id;
  }
  ASSERT_GE(np_rule, 0);
  ASSERT_FALSE(st.domain(x02).contains(1));
  const StepOutcome out = st.propagate(np_rule);
  EXPECT_EQ(out.delta_d, 1);
  EXPECT_TRUE(st.domain(x02).contains(1));
  for (ConstraintId c : out.newly_dirty) {
    const auto& scope = spec.constraints[c].scope;
    EXPECT_NE(std::find(scope.begin(), scope.end(), x02), scope.end());
  }
  int parents = 0;
  for (const auto& c : spec.constraints) {
    if (c.id == np_rule || c.kind != ConstraintKind::GrammarRule) continue;
    if (std::find(c.scope.begin(), c.scope.end(), x02) != c.scope.end()) {
      ++parents;
      EXPECT_TRUE(st.dirty().contains(c.id));
    }
  }
  EXPECT_GT(parents, 0);
}

TEST(Propagate, FailedPremiseGivesCostOnlyReward) {
  Builder d(Mode::Derivation);
  const int a = d.var(3), b = d.var(3, std::vector<Value>{1}), c = d.var(3);
  d.rule(a, b, c, 2, 0, 1);
  SolverState st = build_instance(d.spec);
  const double cost = st.step_cost(0);
  const StepOutcome out = st.propagate(0);
  EXPECT_EQ(out.delta_d, 0);
  EXPECT_TRUE(out.newly_dirty.empty());
  EXPECT_DOUBLE_EQ(out.cost, cost);
  EXPECT_DOUBLE_EQ(out.reward, -0.1 * cost);
}

TEST(Propagate, NotEqualOnEqualSingletonsFails) {
  Builder b;
  const int x = b.var(5, std::vector<Value>{3}), y = b.var(5, std::vector<Value>{3});
  b.not_equal(x, y);
  SolverState st = build_instance(b.spec);
  const StepOutcome out = st.propagate(0);
  EXPECT_TRUE(out.caused_failure);
  EXPECT_EQ(st.status(), Status::Failed);
  EXPECT_TRUE(st.domain(x).empty() || st.domain(y).empty());
  EXPECT_THROW(st.propagate(0), Halted);
}

TEST(Propagate, Errors) {
  Builder b;
  const int x = b.var(3), y = b.var(3, std::vector<Value>{1});
  b.not_equal(x, y);
  b.not_equal(x, y);
  SolverState st = build_instance(b.spec);
  st.propagate(0);
  EXPECT_FALSE(st.dirty().contains(0));
  EXPECT_THROW(st.propagate(0), NotDirty);
  EXPECT_THROW(st.propagate(9), UnknownConstraint);
}

TEST(Reward, HandValues) {
  StepOutcome o;
  o.delta_d = 5;
  o.cost = 9;
  EXPECT_NEAR(reward(o, {}), 4.1, 1e-12);
  o.delta_d = 0;
  o.cost = 0;
  EXPECT_EQ(reward(o, {}), 0.0);
  o.cost = 2;
  EXPECT_NEAR(reward(o, {}), -0.2, 1e-12);
}

TEST(Snapshot, RoundTrips) {
  SolverState st = build_instance(testing::mixed_instance(3, 5));
  const SolverState before = st;
  const Snapshot s0 = st.snapshot();
  st.propagate(st.dirty().front());
  const Snapshot s1 = st.snapshot();
  const SolverState middle = st;
  if (!st.dirty().empty() && st.status() == Status::Running) st.propagate(st.dirty().front());
  st.restore(s1);
  EXPECT_EQ(st, middle);
  st.restore(s0);
  EXPECT_EQ(st, before);
}

TEST(Snapshot, RestoreAfterFailure) {
  Builder b;
  const int x = b.var(5, std::vector<Value>{3}), y = b.var(5, std::vector<Value>{3});
  b.not_equal(x, y);
  SolverState st = build_instance(b.spec);
  const Snapshot snap = st.snapshot();
  st.propagate(0);
  ASSERT_EQ(st.status(), Status::Failed);
  st.restore(snap);
  EXPECT_EQ(st.status(), Status::Running);
  EXPECT_EQ(st.domain(x).size(), 1);
}

TEST(RunToFixpoint, ToySentenceParses) {
  const InstanceSpec spec = build_parse_instance(toy_grammar(), {"the", "dog", "saw", "the", "cat"});
  SolverState st = build_instance(spec);
  FifoScheduler fifo;
  const RunTrace trace = run_to_fixpoint(st, fifo, 100000);
  EXPECT_EQ(trace.outcome, RunOutcome::Fixpoint);
  EXPECT_TRUE(st.domain(span_variable(5, 0, 5)).contains(0));
  EXPECT_TRUE(parse_success(st));
  EXPECT_DOUBLE_EQ(trace.total_cost(), st.cum_cost());
}

TEST(RunToFixpoint, TriangleWithTwoColorsFailsOnceFixed) {
  Builder b;
  const int x = b.var(2, std::vector<Value>{0}), y = b.var(2), z = b.var(2);
  b.not_equal(x, y);
  b.not_equal(y, z);
  b.not_equal(x, z);
  SolverState st = build_instance(b.spec);
  FifoScheduler fifo;
  const RunTrace trace = run_to_fixpoint(st, fifo, 100);
  EXPECT_EQ(trace.outcome, RunOutcome::Failed);
  EXPECT_EQ(st.status(), Status::Failed);
}

TEST(RunToFixpoint, BudgetIsAnOutcome) {
  const InstanceSpec spec = build_parse_instance(toy_grammar(), {"the", "dog", "saw", "the", "cat"});
  SolverState st = build_instance(spec);
  FifoScheduler fifo;
  const RunTrace trace = run_to_fixpoint(st, fifo, 3);
  EXPECT_EQ(trace.outcome, RunOutcome::BudgetExhausted);
  EXPECT_EQ(trace.steps.size(), 3u);
  EXPECT_EQ(st.status(), Status::Running);
}

TEST(Properties, ConfluenceAcrossRandomSchedules) {
  for (int i = 0; i < 16; ++i) {
    const InstanceSpec spec = testing::mixed_instance(i, 21);
    FifoScheduler fifo;
    Status gold_status;
    const auto gold = testing::run_with(spec, fifo, &gold_status);
    for (std::uint64_t s = 0; s < 5; ++s) {
      RandomScheduler rnd(s);
      Status status;
      const auto got = testing::run_with(spec, rnd, &status);
      EXPECT_EQ(status, gold_status) << "instance " << i;
      if (gold_status == Status::Fixpoint) EXPECT_EQ(got, gold) << "instance " << i << " seed " << s;
    }
  }
}

TEST(Properties, MonotoneDomainsAndCostBookkeeping) {
  for (int i = 0; i < 16; ++i) {
    SolverState st = build_instance(testing::mixed_instance(i, 31));
    RandomScheduler rnd(i);
    double cost = 0.0;
    long size = st.total_domain_size();
    while (st.status() == Status::Running && !st.dirty().empty()) {
      const ConstraintId c = rnd.select(st);
      const double expect = st.step_cost(c);
      const StepOutcome out = st.propagate(c);
      EXPECT_DOUBLE_EQ(out.cost, expect);
      cost += expect;
      const long now = st.total_domain_size();
      if (st.mode() == Mode::Pruning) {
        EXPECT_LE(now, size);
        EXPECT_EQ(size - now, out.delta_d);
      } else {
        EXPECT_GE(now, size);
        EXPECT_EQ(now - size, out.delta_d);
      }
      size = now;
      EXPECT_NEAR(out.reward, out.delta_d - 0.1 * out.cost, 1e-12);
    }
    EXPECT_NEAR(st.cum_cost(), cost, 1e-9);
  }
}

/// Re-applies a constraint in a fresh instance whose initial domains are the
/// current ones; this does not depend on the engine's dirty bookkeeping.
long fresh_delta(const InstanceSpec& spec, const SolverState& st, ConstraintId c) {
  InstanceSpec copy = spec;
  for (int v = 0; v < st.num_variables(); ++v) copy.variables[v].domain = st.domain(v).values();
  SolverState fresh = build_instance(copy);
  return fresh.propagate(c).delta_d;
}

TEST(Properties, CleanConstraintsAreAtTheirFixpoint) {
  int probed = 0;
  for (int i = 0; i < 40 && probed < 200; ++i) {
    const InstanceSpec spec = testing::mixed_instance(i, 41);
    if (spec.constraints.size() > 12) continue;
    SolverState st = build_instance(spec);
    RandomScheduler rnd(i);
    while (st.status() == Status::Running && !st.dirty().empty()) {
      st.propagate(rnd.select(st));
      if (st.status() != Status::Running) break;
      for (ConstraintId c = 0; c < st.num_constraints(); ++c) {
        if (st.dirty().contains(c)) continue;
        EXPECT_EQ(fresh_delta(spec, st, c), 0) << "instance " << i << " constraint " << c;
        ++probed;
      }
    }
  }
  EXPECT_GT(probed, 20);
}

TEST(Properties, NoiseHookIsSeeded) {
  EngineOptions opts;
  opts.noise_p = 0.1;
  opts.noise_seed = 9;
  const InstanceSpec spec = gen_random_csp(8, 6, 0.5, 0.2, 3);
  auto run = [&] {
    SolverState st = build_instance(spec, opts);
    FifoScheduler f;
    run_to_fixpoint(st, f, 10000);
    return st.snapshot();
  };
  EXPECT_EQ(run(), run());
}

TEST(InstanceJson, RoundTripsByteIdentically) {
  for (int i = 0; i < 12; ++i) {
    const InstanceSpec spec = testing::mixed_instance(i, 51);
    const std::string text = to_json(spec);
    const InstanceSpec back = instance_from_json(text);
    EXPECT_EQ(to_json(back), text);
  }
  EXPECT_THROW(instance_from_json("{\"mode\": \"sideways\"}"), MalformedSpec);
  EXPECT_THROW(instance_from_json("not json"), MalformedSpec);
}

TEST(ChangeHistory, WindowCounting) {
  ChangeHistory h(4);
  for (std::int64_t s : {1, 3, 4, 6, 7}) h.record(s);
  EXPECT_EQ(h.size(), 4);
  EXPECT_EQ(h.entries(), (std::vector<std::int64_t>{3, 4, 6, 7}));
  EXPECT_EQ(h.count_since(7), 3);  // steps 4..7
  EXPECT_EQ(h.count_since(20), 0);
}

}  // namespace
}  // namespace propsched
