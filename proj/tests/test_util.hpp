#ifndef PROPSCHED_TESTS_TEST_UTIL_HPP_
#define PROPSCHED_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "propsched/engine.hpp"
#include "propsched/instance.hpp"
#include "propsched/scheduler.hpp"
#include "propsched/tasks.hpp"

namespace propsched::testing {

/// Small builder for hand-written instances.
struct Builder {
  InstanceSpec spec;

  explicit Builder(Mode mode = Mode::Pruning) { spec.mode = mode; }

  int var(int capacity, std::optional<std::vector<Value>> domain = std::nullopt) {
    const int id = static_cast<int>(spec.variables.size());
    spec.variables.push_back({id, capacity, std::move(domain)});
    return id;
  }

  int add(ConstraintSpec c) {
    c.id = static_cast<int>(spec.constraints.size());
    spec.constraints.push_back(std::move(c));
    return c.id;
  }

  int not_equal(int x, int y) {
    ConstraintSpec c;
    c.kind = ConstraintKind::NotEqual;
    c.scope = {x, y};
    return add(c);
  }

  int table(int x, int y, std::vector<std::pair<Value, Value>> allowed) {
    ConstraintSpec c;
    c.kind = ConstraintKind::BinaryTable;
    c.scope = {x, y};
    c.allowed = std::move(allowed);
    return add(c);
  }

  int all_different(std::vector<int> scope) {
    ConstraintSpec c;
    c.kind = ConstraintKind::AllDifferent;
    c.scope = std::move(scope);
    return add(c);
  }

  int linear_leq(std::vector<int> scope, std::vector<long long> weights, long long bound) {
    ConstraintSpec c;
    c.kind = ConstraintKind::LinearLeq;
    c.scope = std::move(scope);
    c.weights = std::move(weights);
    c.bound = bound;
    return add(c);
  }

  int lexical(int x, Value label) {
    ConstraintSpec c;
    c.kind = ConstraintKind::Lexical;
    c.scope = {x};
    c.label = label;
    return add(c);
  }

  int rule(int left_span, int right_span, int parent, Value lhs, Value left, Value right) {
    ConstraintSpec c;
    c.kind = ConstraintKind::GrammarRule;
    c.scope = {left_span, right_span, parent};
    c.lhs = lhs;
    c.left = left;
    c.right = right;
    return add(c);
  }
};

inline std::vector<Value> range(int lo, int hi) {
  std::vector<Value> v;
  for (int x = lo; x < hi; ++x) v.push_back(x);
  return v;
}

/// Two constraints sharing x, where ratio-greedy picks the wide table first
/// and pays for it twice. By hand: greedy 16 + 16 + 5 = 37, best order 16 + 12 = 28.
inline InstanceSpec greedy_trap() {
  Builder b;
  const int x = b.var(8);
  const int y = b.var(8);
  const int w = b.var(8);
  std::vector<std::pair<Value, Value>> any_x_y0, x_low;
  for (int v = 0; v < 8; ++v) any_x_y0.emplace_back(v, 0);
  for (int v = 0; v < 4; ++v) {
    for (int u = 0; u < 8; ++u) x_low.emplace_back(v, u);
  }
  b.table(x, y, any_x_y0);  // prunes y to {0}: delta 7, cost 16
  b.table(x, w, x_low);     // prunes x to {0..3}: delta 4, cost 16
  b.spec.meta.family = "handmade";
  return b.spec;
}

/// Textbook CKY: chart[i][j] is the set of nonterminals deriving tokens[i, j).
inline std::vector<std::vector<std::set<int>>> cky_chart(const Grammar& g, const std::vector<std::string>& tokens) {
  const int n = static_cast<int>(tokens.size());
  std::vector<std::vector<std::set<int>>> chart(n + 1, std::vector<std::set<int>>(n + 1));
  for (int i = 0; i < n; ++i) {
    for (const auto& r : g.lexical_rules) {
      if (g.terminals[r.terminal] == tokens[i]) chart[i][i + 1].insert(r.lhs);
    }
  }
  for (int width = 2; width <= n; ++width) {
    for (int i = 0; i + width <= n; ++i) {
      const int j = i + width;
      for (int k = i + 1; k < j; ++k) {
        for (const auto& r : g.binary_rules) {
          if (chart[i][k].count(r.left) && chart[k][j].count(r.right)) chart[i][j].insert(r.lhs);
        }
      }
    }
  }
  return chart;
}

inline std::vector<Domain> run_with(const InstanceSpec& spec, Scheduler& sched, Status* status = nullptr) {
  SolverState st = build_instance(spec);
  run_to_fixpoint(st, sched, std::numeric_limits<std::size_t>::max());
  if (status) *status = st.status();
  std::vector<Domain> out;
  for (const auto& v : st.variables()) out.push_back(v.domain);
  return out;
}

/// Mixed-family instance stream used by the property suites.
inline InstanceSpec mixed_instance(int i, std::uint64_t seed) {
  const std::uint64_t s = mix_seed(seed, i);
  switch (i % 4) {
    case 0: {
      ParseFamily f;
      f.grammar = i % 8 == 0 ? toy_grammar() : sample_grammar(GrammarSampling{}, s, 3, 6);
      f.min_len = 3;
      f.max_len = 6;
      return generate(TaskSpec{"parse", f, s}, i);
    }
    case 1: {
      KnapsackFamily f;
      f.n = 4 + i % 8;
      return gen_knapsack(f, s).spec;
    }
    case 2: return gen_coloring(5 + i % 6, 0.35, 3, s).spec;
    default: return gen_random_csp(5 + i % 4, 4, 0.5, 0.25, s);
  }
}

}  // namespace propsched::testing

#endif  // PROPSCHED_TESTS_TEST_UTIL_HPP_
