#include "propsched/tasks.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "json.hpp"
#include "propsched/errors.hpp"
#include "propsched/scheduler.hpp"

namespace propsched {

using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Grammar

int Grammar::terminal_id(const std::string& token) const {
  auto it = std::find(terminals.begin(), terminals.end(), token);
  return it == terminals.end() ? -1 : static_cast<int>(it - terminals.begin());
}

void validate(const Grammar& g) {
  const int nn = g.num_nonterminals();
  const int nt = static_cast<int>(g.terminals.size());
  auto nonterm = [&](Value v) { return v >= 0 && v < nn; };
  if (!nonterm(g.start)) throw MalformedSpec("grammar start symbol is not a declared nonterminal");
  for (const auto& r : g.binary_rules) {
    if (!nonterm(r.lhs) || !nonterm(r.left) || !nonterm(r.right)) throw MalformedSpec("binary rule references an undeclared nonterminal");
  }
  for (const auto& r : g.lexical_rules) {
    if (!nonterm(r.lhs)) throw MalformedSpec("lexical rule references an undeclared nonterminal");
    if (r.terminal < 0 || r.terminal >= nt) throw MalformedSpec("lexical rule references an undeclared terminal");
  }
}

std::string to_json(const Grammar& g) {
  json rules = json::array();
  for (const auto& r : g.binary_rules) {
    rules.push_back({{"lhs", g.nonterminals[r.lhs]}, {"rhs", {g.nonterminals[r.left], g.nonterminals[r.right]}}});
  }
  for (const auto& r : g.lexical_rules) {
    rules.push_back({{"lhs", g.nonterminals[r.lhs]}, {"rhs", {g.terminals[r.terminal]}}});
  }
  json j = {{"nonterminals", g.nonterminals},
            {"terminals", g.terminals},
            {"rules", std::move(rules)},
            {"start", g.nonterminals[g.start]}};
  return j.dump();
}

Grammar grammar_from_json(const std::string& text) {
  Grammar g;
  try {
    const json j = json::parse(text);
    g.nonterminals = j.at("nonterminals").get<std::vector<std::string>>();
    g.terminals = j.at("terminals").get<std::vector<std::string>>();
    auto nt = [&](const std::string& s) -> Value {
      auto it = std::find(g.nonterminals.begin(), g.nonterminals.end(), s);
      if (it == g.nonterminals.end()) throw MalformedSpec("grammar: undeclared nonterminal '" + s + "'");
      return static_cast<Value>(it - g.nonterminals.begin());
    };
    for (const auto& r : j.at("rules")) {
      const Value lhs = nt(r.at("lhs").get<std::string>());
      const auto rhs = r.at("rhs").get<std::vector<std::string>>();
      if (rhs.size() == 2) {
        g.binary_rules.push_back({lhs, nt(rhs[0]), nt(rhs[1])});
      } else if (rhs.size() == 1) {
        const int t = g.terminal_id(rhs[0]);
        if (t < 0) throw MalformedSpec("grammar: undeclared terminal '" + rhs[0] + "'");
        g.lexical_rules.push_back({lhs, t});
      } else {
        throw MalformedSpec("grammar: rules must be in CNF");
      }
    }
    g.start = nt(j.at("start").get<std::string>());
  } catch (const json::exception& e) {
    throw MalformedSpec(std::string("grammar JSON: ") + e.what());
  }
  validate(g);
  return g;
}

Grammar toy_grammar() {
  Grammar g;
  g.nonterminals = {"S", "NP", "VP", "D", "N", "V"};
  g.terminals = {"the", "dog", "cat", "saw"};
  g.binary_rules = {{0, 1, 2}, {1, 3, 4}, {2, 5, 1}};
  g.lexical_rules = {{3, 0}, {4, 1}, {4, 2}, {5, 3}};
  g.start = 0;
  return g;
}

int span_variable(int n, int i, int j) {
  const int width = j - i;
  // spans of width w < width come first: sum_{w'=1}^{width-1} (n - w' + 1)
  const int before = (width - 1) * (n + 1) - (width - 1) * width / 2;
  return before + i;
}

InstanceSpec build_parse_instance(const Grammar& g, const std::vector<std::string>& tokens) {
  validate(g);
  const int n = static_cast<int>(tokens.size());
  if (n < 2 || n > 20) throw MalformedSpec("sentence length must lie in [2, 20], got " + std::to_string(n));
  std::vector<int> ids;
  for (const auto& t : tokens) {
    const int id = g.terminal_id(t);
    if (id < 0) throw UnknownToken("token '" + t + "' is not a grammar terminal");
    ids.push_back(id);
  }

  InstanceSpec spec;
  spec.mode = Mode::Derivation;
  const int nvars = n * (n + 1) / 2;
  for (int v = 0; v < nvars; ++v) spec.variables.push_back({v, g.num_nonterminals(), std::nullopt});

  auto add = [&](ConstraintSpec c) {
    c.id = static_cast<int>(spec.constraints.size());
    spec.constraints.push_back(std::move(c));
  };
  for (int i = 0; i < n; ++i) {
    for (const auto& r : g.lexical_rules) {
      if (r.terminal != ids[i]) continue;
      ConstraintSpec c;
      c.kind = ConstraintKind::Lexical;
      c.scope = {span_variable(n, i, i + 1)};
      c.label = r.lhs;
      c.span = {i};
      add(std::move(c));
    }
  }
  for (const auto& r : g.binary_rules) {
    for (int i = 0; i < n; ++i) {
      for (int k = i + 1; k < n; ++k) {
        for (int j = k + 1; j <= n; ++j) {
          ConstraintSpec c;
          c.kind = ConstraintKind::GrammarRule;
          c.scope = {span_variable(n, i, k), span_variable(n, k, j), span_variable(n, i, j)};
          c.lhs = r.lhs;
          c.left = r.left;
          c.right = r.right;
          c.span = {i, k, j};
          add(std::move(c));
        }
      }
    }
  }
  spec.meta.family = "parse";
  spec.meta.parse = ParseInfo{tokens, g.start, span_variable(n, 0, n)};
  return spec;
}

namespace {

/// derivable[A][len] for len in [1, max_len].
std::vector<std::vector<char>> derivable_table(const Grammar& g, int max_len) {
  const int nn = g.num_nonterminals();
  std::vector<std::vector<char>> d(nn, std::vector<char>(max_len + 1, 0));
  for (const auto& r : g.lexical_rules) d[r.lhs][1] = 1;
  for (int len = 2; len <= max_len; ++len) {
    for (const auto& r : g.binary_rules) {
      for (int l = 1; l < len && !d[r.lhs][len]; ++l) {
        if (d[r.left][l] && d[r.right][len - l]) d[r.lhs][len] = 1;
      }
    }
  }
  return d;
}

void expand(const Grammar& g, const std::vector<std::vector<char>>& d, Value sym, int len, std::mt19937_64& rng,
            std::vector<std::string>& out) {
  if (len == 1) {
    std::vector<int> options;
    for (const auto& r : g.lexical_rules) {
      if (r.lhs == sym) options.push_back(r.terminal);
    }
    out.push_back(g.terminals[options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)]]);
    return;
  }
  std::vector<std::pair<std::size_t, int>> options;  // (rule, left length)
  for (std::size_t r = 0; r < g.binary_rules.size(); ++r) {
    const auto& rule = g.binary_rules[r];
    if (rule.lhs != sym) continue;
    for (int l = 1; l < len; ++l) {
      if (d[rule.left][l] && d[rule.right][len - l]) options.emplace_back(r, l);
    }
  }
  const auto [r, l] = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
  expand(g, d, g.binary_rules[r].left, l, rng, out);
  expand(g, d, g.binary_rules[r].right, len - l, rng, out);
}

}  // namespace

std::vector<std::string> sample_sentence(const Grammar& g, int length, std::uint64_t seed) {
  const auto d = derivable_table(g, length);
  if (length < 1 || !d[g.start][length]) return {};
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  expand(g, d, g.start, length, rng, out);
  return out;
}

Grammar sample_grammar(const GrammarSampling& cfg, std::uint64_t seed, int min_len, int max_len) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int attempt = 0;; ++attempt) {
    Grammar g;
    const int nn = uniform(cfg.min_nonterminals, cfg.max_nonterminals);
    const int npre = std::max(1, nn / 2);
    const int nphrasal = nn - npre;
    const int nterm = uniform(cfg.min_terminals, cfg.max_terminals);
    const int nbin = uniform(cfg.min_binary, cfg.max_binary);
    for (int a = 0; a < nn; ++a) g.nonterminals.push_back(a < nphrasal ? "X" + std::to_string(a) : "P" + std::to_string(a));
    for (int t = 0; t < nterm; ++t) g.terminals.push_back("w" + std::to_string(t));
    g.start = 0;
    // every terminal gets one preterminal; every preterminal gets at least one terminal
    for (int t = 0; t < nterm; ++t) {
      const Value pre = t < npre ? nphrasal + t : nphrasal + uniform(0, npre - 1);
      g.lexical_rules.push_back({pre, t});
    }
    for (int p = nterm; p < npre; ++p) g.lexical_rules.push_back({nphrasal + p, uniform(0, nterm - 1)});
    std::set<std::tuple<Value, Value, Value>> seen;
    for (int r = 0; static_cast<int>(g.binary_rules.size()) < nbin && r < 20 * nbin; ++r) {
      // first rules give each phrasal symbol an expansion
      const Value lhs = static_cast<int>(g.binary_rules.size()) < nphrasal ? static_cast<Value>(g.binary_rules.size())
                                                                            : uniform(0, nphrasal - 1);
      const Value left = uniform(0, nn - 1), right = uniform(0, nn - 1);
      if (seen.insert({lhs, left, right}).second) g.binary_rules.push_back({lhs, left, right});
    }
    const auto d = derivable_table(g, max_len);
    int ok_lengths = 0;
    for (int len = std::max(min_len, 2); len <= max_len; ++len) ok_lengths += d[g.start][len];
    if (ok_lengths == max_len - std::max(min_len, 2) + 1 || attempt > 200) {
      if (ok_lengths == 0) continue;
      return g;
    }
  }
}

// ---------------------------------------------------------------------------
// Pruning-mode families

KnapsackInstance knapsack_instance(const std::vector<KnapsackItem>& items, long long capacity) {
  const int n = static_cast<int>(items.size());
  if (n > 20) throw MalformedSpec("knapsack oracle supports at most 20 items");
  KnapsackInstance out;
  out.spec.mode = Mode::Pruning;
  ConstraintSpec c;
  c.id = 0;
  c.kind = ConstraintKind::LinearLeq;
  c.bound = capacity;
  for (int i = 0; i < n; ++i) {
    out.spec.variables.push_back({i, 2, std::nullopt});
    c.scope.push_back(i);
    c.weights.push_back(items[i].weight);
  }
  if (n > 0) out.spec.constraints.push_back(std::move(c));

  long long best = 0;
  std::uint32_t best_mask = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    long long w = 0, v = 0;
    for (int i = 0; i < n; ++i) {
      if (mask >> i & 1u) {
        w += items[i].weight;
        v += items[i].value;
      }
    }
    if (w <= capacity && v > best) {
      best = v;
      best_mask = mask;
    }
  }
  out.optimum = static_cast<double>(best);
  for (int i = 0; i < n; ++i) out.best_assignment.push_back(static_cast<int>(best_mask >> i & 1u));
  out.spec.meta.family = "knapsack";
  out.spec.meta.optimum = out.optimum;
  return out;
}

KnapsackInstance gen_knapsack(const KnapsackFamily& f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<KnapsackItem> items;
  long long total = 0;
  for (int i = 0; i < f.n; ++i) {
    const long long w = std::uniform_int_distribution<long long>(f.min_weight, f.max_weight)(rng);
    const long long v = std::uniform_int_distribution<long long>(f.min_value, f.max_value)(rng);
    items.push_back({w, v});
    total += w;
  }
  return knapsack_instance(items, static_cast<long long>(f.capacity_ratio * static_cast<double>(total)));
}

bool coloring_satisfiable(int n, const std::vector<std::pair<int, int>>& edges, int colors) {
  std::vector<std::vector<int>> adj(n);
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<int> color(n, -1);
  auto assign = [&](auto&& self, int v) -> bool {
    if (v == n) return true;
    for (int c = 0; c < colors; ++c) {
      bool clash = false;
      for (int u : adj[v]) clash = clash || color[u] == c;
      if (clash) continue;
      color[v] = c;
      if (self(self, v + 1)) return true;
      color[v] = -1;
    }
    return false;
  };
  return assign(assign, 0);
}

ColoringInstance coloring_instance(int n, const std::vector<std::pair<int, int>>& edges, int colors) {
  ColoringInstance out;
  out.spec.mode = Mode::Pruning;
  for (int v = 0; v < n; ++v) out.spec.variables.push_back({v, colors, std::nullopt});
  for (auto [a, b] : edges) {
    ConstraintSpec c;
    c.id = static_cast<int>(out.spec.constraints.size());
    c.kind = ConstraintKind::NotEqual;
    c.scope = {a, b};
    out.spec.constraints.push_back(std::move(c));
  }
  out.satisfiable = coloring_satisfiable(n, edges, colors);
  out.spec.meta.family = "coloring";
  out.spec.meta.satisfiable = out.satisfiable;
  return out;
}

ColoringInstance gen_coloring(int n, double edge_prob, int colors, std::uint64_t seed) {
  if (n > 12) throw MalformedSpec("coloring oracle supports at most 12 vertices");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution edge(edge_prob);
  std::vector<std::pair<int, int>> edges;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (edge(rng)) edges.emplace_back(a, b);
    }
  }
  return coloring_instance(n, edges, colors);
}

InstanceSpec gen_random_csp(int n, int domain_size, double density, double tightness, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  InstanceSpec spec;
  spec.mode = Mode::Pruning;
  for (int v = 0; v < n; ++v) spec.variables.push_back({v, domain_size, std::nullopt});
  std::bernoulli_distribution constrained(density);
  const int total = domain_size * domain_size;
  const int forbidden = static_cast<int>(std::lround(tightness * total));
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (!constrained(rng)) continue;
      std::vector<int> tuples(total);
      for (int t = 0; t < total; ++t) tuples[t] = t;
      std::shuffle(tuples.begin(), tuples.end(), rng);
      std::sort(tuples.begin() + forbidden, tuples.end());
      ConstraintSpec c;
      c.id = static_cast<int>(spec.constraints.size());
      c.kind = ConstraintKind::BinaryTable;
      c.scope = {a, b};
      for (int t = forbidden; t < total; ++t) c.allowed.emplace_back(tuples[t] / domain_size, tuples[t] % domain_size);
      spec.constraints.push_back(std::move(c));
    }
  }
  spec.meta.family = "csp";
  return spec;
}

// ---------------------------------------------------------------------------

std::string family_name(const TaskSpec& task) {
  switch (task.family.index()) {
    case 0: return "parse";
    case 1: return "knapsack";
    case 2: return "coloring";
    default: return "csp";
  }
}

InstanceSpec generate(const TaskSpec& task, std::uint64_t index) {
  const std::uint64_t seed = mix_seed(task.seed, index);
  InstanceSpec spec = std::visit(
      [&](const auto& f) -> InstanceSpec {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, ParseFamily>) {
          std::mt19937_64 rng(seed);
          for (int attempt = 0; attempt < 64; ++attempt) {
            const int len = std::uniform_int_distribution<int>(f.min_len, f.max_len)(rng);
            auto tokens = sample_sentence(f.grammar, len, rng());
            if (tokens.empty()) continue;
            if (f.noise > 0.0 && std::bernoulli_distribution(f.noise)(rng)) {
              const auto pos = std::uniform_int_distribution<std::size_t>(0, tokens.size() - 1)(rng);
              tokens[pos] = f.grammar.terminals[std::uniform_int_distribution<std::size_t>(0, f.grammar.terminals.size() - 1)(rng)];
            }
            return build_parse_instance(f.grammar, tokens);
          }
          throw MalformedSpec("grammar derives no sentence in the requested length range");
        } else if constexpr (std::is_same_v<F, KnapsackFamily>) {
          return gen_knapsack(f, seed).spec;
        } else if constexpr (std::is_same_v<F, ColoringFamily>) {
          return gen_coloring(f.n, f.edge_prob, f.colors, seed).spec;
        } else {
          return gen_random_csp(f.n, f.domain_size, f.density, f.tightness, seed);
        }
      },
      task.family);
  return spec;
}

Fixpoint fixpoint_of(const SolverState& terminal) {
  Fixpoint fp;
  for (const auto& v : terminal.variables()) fp.domains.push_back(v.domain);
  fp.status = terminal.status();
  return fp;
}

Fixpoint gold_fixpoint(const InstanceSpec& spec) {
  SolverState state = build_instance(spec);
  FifoScheduler fifo;
  run_to_fixpoint(state, fifo, std::numeric_limits<std::size_t>::max());
  return fixpoint_of(state);
}

bool parse_success(const SolverState& state) {
  const auto& meta = state.model().meta;
  if (!meta.parse) return false;
  return state.domain(meta.parse->root_var).contains(meta.parse->start);
}

}  // namespace propsched
