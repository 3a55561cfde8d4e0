#ifndef PROPSCHED_TASKS_HPP_
#define PROPSCHED_TASKS_HPP_

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "propsched/engine.hpp"
#include "propsched/instance.hpp"

namespace propsched {

/// Context-free grammar in Chomsky normal form. Symbols are dense ids.
struct Grammar {
  struct Binary {
    Value lhs, left, right;
  };
  struct Lexical {
    Value lhs;
    int terminal;
  };

  std::vector<std::string> nonterminals;
  std::vector<std::string> terminals;
  std::vector<Binary> binary_rules;
  std::vector<Lexical> lexical_rules;
  Value start = 0;

  int num_nonterminals() const { return static_cast<int>(nonterminals.size()); }
  /// Terminal id for a token, or -1.
  int terminal_id(const std::string& token) const;
};

/// Throws MalformedSpec if a rule references an undeclared symbol.
void validate(const Grammar& g);
/// Grammar file: {"nonterminals": [...], "terminals": [...], "rules": [{"lhs", "rhs": [...]}], "start"}.
std::string to_json(const Grammar& g);
Grammar grammar_from_json(const std::string& text);

/// S -> NP VP, NP -> D N, VP -> V NP, D -> the, N -> dog | cat, V -> saw.
Grammar toy_grammar();

/// Index of span variable (i, j), 0 <= i < j <= n, in width-major order.
int span_variable(int n, int i, int j);

/// One derivation-mode variable per span; a lexical constraint per (A -> w_i, i);
/// a grammar-rule constraint per (A -> B C, i < k < j). Throws UnknownToken.
InstanceSpec build_parse_instance(const Grammar& g, const std::vector<std::string>& tokens);

/// Sampled random CNF grammar; phrasal symbols carry binary rules and
/// preterminals carry lexical rules.
struct GrammarSampling {
  int min_nonterminals = 4, max_nonterminals = 10;
  int min_binary = 6, max_binary = 20;
  int min_terminals = 4, max_terminals = 8;
};
Grammar sample_grammar(const GrammarSampling& cfg, std::uint64_t seed, int min_len = 2, int max_len = 8);

/// Top-down sample of a sentence of exactly `length` tokens derivable from the
/// start symbol. Empty if no such sentence exists.
std::vector<std::string> sample_sentence(const Grammar& g, int length, std::uint64_t seed);

struct KnapsackItem {
  long long weight;
  long long value;
};
struct KnapsackInstance {
  InstanceSpec spec;
  double optimum = 0.0;
  std::vector<int> best_assignment;  ///< 0/1 per item
};
KnapsackInstance knapsack_instance(const std::vector<KnapsackItem>& items, long long capacity);

struct KnapsackFamily {
  int n = 8;
  long long min_weight = 1, max_weight = 10;
  long long min_value = 1, max_value = 10;
  double capacity_ratio = 0.5;
};
/// n <= 20 (oracle enumerates subsets).
KnapsackInstance gen_knapsack(const KnapsackFamily& family, std::uint64_t seed);

struct ColoringInstance {
  InstanceSpec spec;
  bool satisfiable = false;
};
ColoringInstance coloring_instance(int n, const std::vector<std::pair<int, int>>& edges, int colors);
/// Exhaustive oracle; n <= 12.
ColoringInstance gen_coloring(int n, double edge_prob, int colors, std::uint64_t seed);
/// Exhaustive assignment search.
bool coloring_satisfiable(int n, const std::vector<std::pair<int, int>>& edges, int colors);

InstanceSpec gen_random_csp(int n, int domain_size, double density, double tightness, std::uint64_t seed);

struct ParseFamily {
  Grammar grammar;
  int min_len = 4, max_len = 6;
  double noise = 0.0;  ///< probability that one token is substituted
};
struct ColoringFamily {
  int n = 8;
  double edge_prob = 0.3;
  int colors = 3;
};
struct CspFamily {
  int n = 6;
  int domain_size = 4;
  double density = 0.5;
  double tightness = 0.3;
};

/// A task distribution; instances are pure functions of (task, index).
struct TaskSpec {
  std::string name;
  std::variant<ParseFamily, KnapsackFamily, ColoringFamily, CspFamily> family;
  std::uint64_t seed = 0;
};

std::string family_name(const TaskSpec& task);
InstanceSpec generate(const TaskSpec& task, std::uint64_t index);

struct Fixpoint {
  std::vector<Domain> domains;
  Status status = Status::Running;
};

/// Domains after running FIFO to completion with no step budget.
Fixpoint gold_fixpoint(const InstanceSpec& spec);
Fixpoint fixpoint_of(const SolverState& terminal);

/// True iff the instance is a parse instance whose root span derives the start symbol.
bool parse_success(const SolverState& state);

/// SplitMix64 mixing of a seed with a stream index.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace propsched

#endif  // PROPSCHED_TASKS_HPP_
