#include "propsched/instance.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "propsched/errors.hpp"

namespace propsched {

using nlohmann::json;

namespace {

constexpr std::string_view kKindNames[] = {"grammar_rule", "lexical",       "binary_table",
                                           "not_equal",    "all_different", "linear_leq"};

int expected_arity(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::GrammarRule: return 3;
    case ConstraintKind::Lexical: return 1;
    case ConstraintKind::BinaryTable:
    case ConstraintKind::NotEqual: return 2;
    default: return -1;
  }
}

[[noreturn]] void malformed(const std::string& what) { throw MalformedSpec(what); }

}  // namespace

std::string_view to_string(Mode m) { return m == Mode::Pruning ? "pruning" : "derivation"; }

std::string_view to_string(ConstraintKind k) { return kKindNames[static_cast<int>(k)]; }

std::optional<ConstraintKind> parse_kind(std::string_view s) {
  for (int i = 0; i < kNumConstraintKinds; ++i) {
    if (kKindNames[i] == s) return static_cast<ConstraintKind>(i);
  }
  return std::nullopt;
}

void validate(const InstanceSpec& spec) {
  const int nvars = static_cast<int>(spec.variables.size());
  for (int i = 0; i < nvars; ++i) {
    const auto& v = spec.variables[i];
    if (v.id != i) malformed("variable ids must be dense and ordered; got " + std::to_string(v.id) + " at index " + std::to_string(i));
    if (v.capacity < 1) malformed("variable " + std::to_string(i) + " has capacity < 1");
    if (v.domain) {
      for (Value x : *v.domain) {
        if (x < 0 || x >= v.capacity) malformed("variable " + std::to_string(i) + ": value id " + std::to_string(x) + " >= capacity");
      }
    }
  }
  auto cap = [&](int var) { return spec.variables[var].capacity; };
  auto check_value = [&](const ConstraintSpec& c, int var, Value x) {
    if (x < 0 || x >= cap(var)) {
      malformed("constraint " + std::to_string(c.id) + ": value id " + std::to_string(x) + " >= capacity of variable " + std::to_string(var));
    }
  };
  for (int i = 0; i < static_cast<int>(spec.constraints.size()); ++i) {
    const auto& c = spec.constraints[i];
    const std::string where = "constraint " + std::to_string(c.id);
    if (c.id != i) malformed("constraint ids must be dense and ordered; got " + std::to_string(c.id) + " at index " + std::to_string(i));
    if (c.scope.empty()) malformed(where + ": empty scope");
    for (int var : c.scope) {
      if (var < 0 || var >= nvars) malformed(where + ": scope references unknown variable " + std::to_string(var));
    }
    const int arity = expected_arity(c.kind);
    if (arity > 0 && static_cast<int>(c.scope.size()) != arity) {
      malformed(where + ": " + std::string(to_string(c.kind)) + " expects arity " + std::to_string(arity) + ", got " + std::to_string(c.scope.size()));
    }
    const bool derivation_kind = c.kind == ConstraintKind::GrammarRule || c.kind == ConstraintKind::Lexical;
    if (derivation_kind != (spec.mode == Mode::Derivation)) {
      malformed(where + ": kind " + std::string(to_string(c.kind)) + " not allowed in " + std::string(to_string(spec.mode)) + " mode");
    }
    switch (c.kind) {
      case ConstraintKind::GrammarRule:
        check_value(c, c.scope[0], c.left);
        check_value(c, c.scope[1], c.right);
        check_value(c, c.scope[2], c.lhs);
        break;
      case ConstraintKind::Lexical: check_value(c, c.scope[0], c.label); break;
      case ConstraintKind::BinaryTable:
        for (auto [a, b] : c.allowed) {
          check_value(c, c.scope[0], a);
          check_value(c, c.scope[1], b);
        }
        break;
      case ConstraintKind::AllDifferent:
        if (c.scope.size() < 2) malformed(where + ": all_different needs at least 2 variables");
        break;
      case ConstraintKind::LinearLeq:
        if (c.weights.size() != c.scope.size()) {
          malformed(where + ": linear_leq has " + std::to_string(c.scope.size()) + " scope variables but " + std::to_string(c.weights.size()) + " weights");
        }
        break;
      case ConstraintKind::NotEqual: break;
    }
  }
}

namespace {

json constraint_to_json(const ConstraintSpec& c) {
  json j;
  j["id"] = c.id;
  j["kind"] = std::string(to_string(c.kind));
  j["scope"] = c.scope;
  switch (c.kind) {
    case ConstraintKind::GrammarRule:
      j["rule"] = {c.lhs, c.left, c.right};
      if (!c.span.empty()) j["span"] = c.span;
      break;
    case ConstraintKind::Lexical:
      j["label"] = c.label;
      if (!c.span.empty()) j["position"] = c.span.front();
      break;
    case ConstraintKind::BinaryTable: {
      json pairs = json::array();
      for (auto [a, b] : c.allowed) pairs.push_back({a, b});
      j["allowed"] = std::move(pairs);
      break;
    }
    case ConstraintKind::LinearLeq:
      j["weights"] = c.weights;
      j["bound"] = c.bound;
      break;
    default: break;
  }
  return j;
}

ConstraintSpec constraint_from_json(const json& j) {
  ConstraintSpec c;
  c.id = j.at("id").get<int>();
  const auto kind_name = j.at("kind").get<std::string>();
  const auto kind = parse_kind(kind_name);
  if (!kind) malformed("constraint " + std::to_string(c.id) + ": unknown kind '" + kind_name + "'");
  c.kind = *kind;
  c.scope = j.at("scope").get<std::vector<int>>();
  switch (c.kind) {
    case ConstraintKind::GrammarRule: {
      const auto rule = j.at("rule").get<std::vector<Value>>();
      if (rule.size() != 3) malformed("constraint " + std::to_string(c.id) + ": rule must be [lhs, left, right]");
      c.lhs = rule[0];
      c.left = rule[1];
      c.right = rule[2];
      if (j.contains("span")) c.span = j["span"].get<std::vector<int>>();
      break;
    }
    case ConstraintKind::Lexical:
      c.label = j.at("label").get<Value>();
      if (j.contains("position")) c.span = {j["position"].get<int>()};
      break;
    case ConstraintKind::BinaryTable:
      for (const auto& p : j.at("allowed")) {
        if (!p.is_array() || p.size() != 2) malformed("constraint " + std::to_string(c.id) + ": allowed entries must be pairs");
        c.allowed.emplace_back(p[0].get<Value>(), p[1].get<Value>());
      }
      break;
    case ConstraintKind::LinearLeq:
      c.weights = j.at("weights").get<std::vector<long long>>();
      c.bound = j.at("bound").get<long long>();
      break;
    default: break;
  }
  return c;
}

json meta_to_json(const InstanceMeta& m) {
  json j = json::object();
  if (!m.family.empty()) j["family"] = m.family;
  if (m.parse) {
    j["parse"] = {{"tokens", m.parse->tokens}, {"start", m.parse->start}, {"root_var", m.parse->root_var}};
  }
  if (m.optimum) j["optimum"] = *m.optimum;
  if (m.satisfiable) j["satisfiable"] = *m.satisfiable;
  return j;
}

InstanceMeta meta_from_json(const json& j) {
  InstanceMeta m;
  if (j.contains("family")) m.family = j["family"].get<std::string>();
  if (j.contains("parse")) {
    const auto& p = j["parse"];
    m.parse = ParseInfo{p.at("tokens").get<std::vector<std::string>>(), p.at("start").get<Value>(),
                        p.at("root_var").get<int>()};
  }
  if (j.contains("optimum")) m.optimum = j["optimum"].get<double>();
  if (j.contains("satisfiable")) m.satisfiable = j["satisfiable"].get<bool>();
  return m;
}

}  // namespace

std::string to_json(const InstanceSpec& spec) {
  json j;
  j["mode"] = std::string(to_string(spec.mode));
  json vars = json::array();
  for (const auto& v : spec.variables) {
    json jv = {{"id", v.id}, {"capacity", v.capacity}};
    if (v.domain) jv["domain"] = *v.domain;
    vars.push_back(std::move(jv));
  }
  j["variables"] = std::move(vars);
  json cons = json::array();
  for (const auto& c : spec.constraints) cons.push_back(constraint_to_json(c));
  j["constraints"] = std::move(cons);
  const json meta = meta_to_json(spec.meta);
  if (!meta.empty()) j["meta"] = meta;
  return j.dump();
}

InstanceSpec instance_from_json(std::string_view text) {
  InstanceSpec spec;
  try {
    const json j = json::parse(text);
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "pruning") {
      spec.mode = Mode::Pruning;
    } else if (mode == "derivation") {
      spec.mode = Mode::Derivation;
    } else {
      malformed("unknown mode '" + mode + "'");
    }
    for (const auto& jv : j.at("variables")) {
      VariableSpec v;
      v.id = jv.at("id").get<int>();
      v.capacity = jv.at("capacity").get<int>();
      if (jv.contains("domain")) v.domain = jv["domain"].get<std::vector<Value>>();
      spec.variables.push_back(std::move(v));
    }
    for (const auto& jc : j.at("constraints")) spec.constraints.push_back(constraint_from_json(jc));
    if (j.contains("meta")) spec.meta = meta_from_json(j["meta"]);
  } catch (const json::exception& e) {
    malformed(std::string("instance JSON: ") + e.what());
  }
  validate(spec);
  return spec;
}

InstanceSpec load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) malformed("cannot open instance file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return instance_from_json(ss.str());
}

void save_instance(const InstanceSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write instance file " + path);
  out << to_json(spec) << '\n';
}

}  // namespace propsched
