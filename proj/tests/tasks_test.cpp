#include <gtest/gtest.h>

#include <functional>

#include "propsched/errors.hpp"
#include "test_util.hpp"

namespace propsched {
namespace {

/// Span-by-span comparison of the engine's fixpoint chart with textbook CKY.
void expect_chart_matches(const Grammar& g, const std::vector<std::string>& tokens) {
  const int n = static_cast<int>(tokens.size());
  const Fixpoint fp = gold_fixpoint(build_parse_instance(g, tokens));
  const auto chart = testing::cky_chart(g, tokens);
  EXPECT_EQ(fp.status, Status::Fixpoint);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j <= n; ++j) {
      const auto values = fp.domains[span_variable(n, i, j)].values();
      EXPECT_EQ(std::set<int>(values.begin(), values.end()), chart[i][j]) << "span (" << i << ", " << j << ")";
    }
  }
}

TEST(Parse, ToySentenceMatchesCky) {
  const std::vector<std::string> s = {"the", "dog", "saw", "the", "cat"};
  expect_chart_matches(toy_grammar(), s);
  const Fixpoint fp = gold_fixpoint(build_parse_instance(toy_grammar(), s));
  EXPECT_TRUE(fp.domains[span_variable(5, 0, 5)].contains(toy_grammar().start));
}

TEST(Parse, RandomGrammarsMatchCky) {
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 100; ++seed) {
    const Grammar g = sample_grammar(GrammarSampling{}, seed, 2, 8);
    const int len = std::uniform_int_distribution<int>(2, 8)(rng);
    std::vector<std::string> tokens = sample_sentence(g, len, seed * 7 + 1);
    if (tokens.empty()) continue;
    if (seed % 3 == 0) {
      tokens[rng() % tokens.size()] = g.terminals[rng() % g.terminals.size()];
    }
    expect_chart_matches(g, tokens);
    ++checked;
  }
}

TEST(Parse, SpanVariablesAreWidthMajor) {
  for (int n = 2; n <= 8; ++n) {
    int expect = 0;
    for (int w = 1; w <= n; ++w) {
      for (int i = 0; i + w <= n; ++i) EXPECT_EQ(span_variable(n, i, i + w), expect++);
    }
    EXPECT_EQ(expect, n * (n + 1) / 2);
  }
}

TEST(Parse, NoBinaryMatchLeavesRootEmpty) {
  Grammar g;
  g.nonterminals = {"S", "A", "B"};
  g.terminals = {"a", "b"};
  g.binary_rules = {{0, 2, 1}};  // S -> B A, never matches "a b"
  g.lexical_rules = {{1, 0}, {2, 1}};
  const Fixpoint fp = gold_fixpoint(build_parse_instance(g, {"a", "b"}));
  EXPECT_TRUE(fp.domains[span_variable(2, 0, 2)].empty());
  EXPECT_EQ(fp.domains[span_variable(2, 0, 1)].values(), std::vector<Value>{1});
}

TEST(Parse, Errors) {
  EXPECT_THROW(build_parse_instance(toy_grammar(), {"the", "unicorn"}), UnknownToken);
  EXPECT_THROW(build_parse_instance(toy_grammar(), {"the"}), MalformedSpec);
  Grammar bad = toy_grammar();
  bad.binary_rules.push_back({0, 9, 1});
  EXPECT_THROW(validate(bad), MalformedSpec);
}

TEST(Parse, SampledSentencesAreDerivable) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Grammar g = sample_grammar(GrammarSampling{}, seed, 3, 6);
    for (int len = 3; len <= 6; ++len) {
      const auto tokens = sample_sentence(g, len, seed);
      if (tokens.empty()) continue;
      EXPECT_EQ(static_cast<int>(tokens.size()), len);
      EXPECT_TRUE(testing::cky_chart(g, tokens)[0][len].count(g.start));
    }
  }
}

TEST(Grammar, JsonRoundTrip) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Grammar g = sample_grammar(GrammarSampling{}, seed);
    const std::string text = to_json(g);
    EXPECT_EQ(to_json(grammar_from_json(text)), text);
  }
  EXPECT_THROW(grammar_from_json("{\"nonterminals\": [\"S\"]}"), MalformedSpec);
}

TEST(Knapsack, OracleExamples) {
  const KnapsackInstance k = knapsack_instance({{2, 3}, {3, 4}}, 4);
  EXPECT_EQ(k.optimum, 4.0);
  EXPECT_EQ(k.best_assignment, (std::vector<int>{0, 1}));

  const KnapsackInstance all = knapsack_instance({{2, 3}, {3, 4}, {1, 1}}, 10);
  EXPECT_EQ(all.optimum, 8.0);

  const KnapsackInstance zero = knapsack_instance({{2, 3}, {3, 4}}, 0);
  EXPECT_EQ(zero.optimum, 0.0);
  const Fixpoint fp = gold_fixpoint(zero.spec);
  for (const auto& d : fp.domains) EXPECT_EQ(d.values(), std::vector<Value>{0});
}

TEST(Knapsack, PropagationKeepsTheOptimum) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    KnapsackFamily f;
    f.n = 1 + static_cast<int>(seed % 12);
    f.capacity_ratio = 0.1 + 0.1 * static_cast<double>(seed % 8);
    const KnapsackInstance k = gen_knapsack(f, seed);
    const Fixpoint fp = gold_fixpoint(k.spec);
    ASSERT_EQ(fp.status, Status::Fixpoint);
    for (int i = 0; i < f.n; ++i) EXPECT_TRUE(fp.domains[i].contains(k.best_assignment[i])) << seed;
  }
}

bool brute_force_colorable(int n, const std::vector<std::pair<int, int>>& edges, int colors) {
  std::vector<int> c(n, 0);
  std::function<bool(int)> go = [&](int v) {
    if (v == n) {
      for (auto [a, b] : edges) {
        if (c[a] == c[b]) return false;
      }
      return true;
    }
    for (int k = 0; k < colors; ++k) {
      c[v] = k;
      if (go(v + 1)) return true;
    }
    return false;
  };
  return go(0);
}

TEST(Coloring, Examples) {
  const std::vector<std::pair<int, int>> k3 = {{0, 1}, {1, 2}, {0, 2}};
  EXPECT_TRUE(coloring_instance(3, k3, 3).satisfiable);
  const ColoringInstance two = coloring_instance(3, k3, 2);
  EXPECT_FALSE(two.satisfiable);
  // Propagation alone does not see it: no domain is a singleton to start with.
  EXPECT_EQ(gold_fixpoint(two.spec).status, Status::Fixpoint);
  EXPECT_TRUE(coloring_instance(5, {}, 1).satisfiable);
}

TEST(Coloring, OracleMatchesBruteForce) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 60; ++t) {
    const int n = 1 + t % 12;
    const int colors = 2 + t % 3;
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.4) edges.emplace_back(a, b);
      }
    }
    EXPECT_EQ(coloring_satisfiable(n, edges, colors), brute_force_colorable(n, edges, colors)) << t;
    const ColoringInstance gen = gen_coloring(n, 0.4, colors, t);
    EXPECT_EQ(gen.spec.variables.size(), static_cast<std::size_t>(n));
  }
}

TEST(RandomCsp, TightnessExtremes) {
  const InstanceSpec loose = gen_random_csp(6, 4, 1.0, 0.0, 3);
  const Fixpoint fl = gold_fixpoint(loose);
  EXPECT_EQ(fl.status, Status::Fixpoint);
  for (const auto& d : fl.domains) EXPECT_EQ(d.size(), 4);

  const InstanceSpec tight = gen_random_csp(6, 4, 1.0, 1.0, 3);
  EXPECT_EQ(gold_fixpoint(tight).status, Status::Failed);
}

TEST(RandomCsp, DeterministicBytes) {
  EXPECT_EQ(to_json(gen_random_csp(7, 5, 0.6, 0.3, 11)), to_json(gen_random_csp(7, 5, 0.6, 0.3, 11)));
  EXPECT_NE(to_json(gen_random_csp(7, 5, 0.6, 0.3, 11)), to_json(gen_random_csp(7, 5, 0.6, 0.3, 12)));
}

TEST(GoldFixpoint, IsIdempotent) {
  for (int i = 0; i < 12; ++i) {
    InstanceSpec spec = testing::mixed_instance(i, 71);
    const Fixpoint fp = gold_fixpoint(spec);
    if (fp.status != Status::Fixpoint) continue;
    for (std::size_t v = 0; v < spec.variables.size(); ++v) spec.variables[v].domain = fp.domains[v].values();
    const Fixpoint again = gold_fixpoint(spec);
    EXPECT_EQ(again.domains, fp.domains);
  }
}

TEST(TaskSpec, GenerateIsPure) {
  TaskSpec t{"p", ParseFamily{toy_grammar(), 3, 5, 0.0}, 5};
  for (std::uint64_t i = 0; i < 5; ++i) EXPECT_EQ(to_json(generate(t, i)), to_json(generate(t, i)));
  EXPECT_EQ(family_name(t), "parse");
  TaskSpec k{"k", KnapsackFamily{}, 5};
  EXPECT_EQ(family_name(k), "knapsack");
}

}  // namespace
}  // namespace propsched
