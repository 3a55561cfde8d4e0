#ifndef PROPSCHED_INSTANCE_HPP_
#define PROPSCHED_INSTANCE_HPP_

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "propsched/domain.hpp"

namespace propsched {

enum class Mode { Pruning, Derivation };

enum class ConstraintKind { GrammarRule = 0, Lexical, BinaryTable, NotEqual, AllDifferent, LinearLeq };
inline constexpr int kNumConstraintKinds = 6;

std::string_view to_string(Mode m);
std::string_view to_string(ConstraintKind k);
std::optional<ConstraintKind> parse_kind(std::string_view s);

struct VariableSpec {
  int id = 0;
  int capacity = 0;
  /// Initial domain; absent means full in pruning mode and empty in derivation mode.
  std::optional<std::vector<Value>> domain;
};

struct ConstraintSpec {
  int id = 0;
  ConstraintKind kind = ConstraintKind::NotEqual;
  std::vector<int> scope;

  // GrammarRule: lhs -> left right over span (i, k, j).
  Value lhs = 0, left = 0, right = 0;
  // Lexical: label at position.
  Value label = 0;
  std::vector<int> span;  // (i, k, j) for GrammarRule, (i) for Lexical; informational
  // BinaryTable
  std::vector<std::pair<Value, Value>> allowed;
  // LinearLeq
  std::vector<long long> weights;
  long long bound = 0;
};

struct ParseInfo {
  std::vector<std::string> tokens;
  Value start = 0;
  int root_var = 0;  ///< variable of span (0, n)
};

struct InstanceMeta {
  std::string family;
  std::optional<ParseInfo> parse;
  std::optional<double> optimum;       ///< knapsack brute-force optimum
  std::optional<bool> satisfiable;     ///< coloring oracle
};

/// Validated-on-build description of a problem instance; mirrors the JSON instance file.
struct InstanceSpec {
  Mode mode = Mode::Pruning;
  std::vector<VariableSpec> variables;
  std::vector<ConstraintSpec> constraints;
  InstanceMeta meta;
};

/// Throws MalformedSpec describing the first problem found.
void validate(const InstanceSpec& spec);

std::string to_json(const InstanceSpec& spec);
/// Parses and validates. Throws MalformedSpec on schema or JSON errors.
InstanceSpec instance_from_json(std::string_view text);

InstanceSpec load_instance(const std::string& path);
void save_instance(const InstanceSpec& spec, const std::string& path);

}  // namespace propsched

#endif  // PROPSCHED_INSTANCE_HPP_
