#include "propsched/gat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "propsched/errors.hpp"

namespace propsched {

namespace {

constexpr const char* kFormat = "propsched-policy/1";

std::string layer_name(int l, const char* what) { return "layer" + std::to_string(l) + "." + what; }

struct Shape {
  std::string name;
  int rows, cols, fan_in;
};

std::vector<Shape> layout(const GatConfig& cfg) {
  const int H = cfg.hidden;
  std::vector<Shape> s = {
      {"in_var.W", kVarFeatures, H, kVarFeatures},
      {"in_var.b", 1, H, kVarFeatures},
      {"in_con.W", kConFeatures, H, kConFeatures},
      {"in_con.b", 1, H, kConFeatures},
  };
  if (cfg.arch == PolicyArch::Gat) {
    for (int l = 0; l < cfg.layers; ++l) {
      const int dout = cfg.head_dim();
      s.push_back({layer_name(l, "W"), H, cfg.heads * dout, H});
      s.push_back({layer_name(l, "a_src"), cfg.heads, dout, 2 * dout});
      s.push_back({layer_name(l, "a_dst"), cfg.heads, dout, 2 * dout});
    }
  } else {
    for (int l = 0; l < cfg.layers; ++l) {
      const int din = l == 0 ? 2 * H : H;
      s.push_back({"mlp" + std::to_string(l) + ".W", din, H, din});
      s.push_back({"mlp" + std::to_string(l) + ".b", 1, H, din});
    }
  }
  const int E = cfg.embedding_dim();
  const int S = cfg.arch == PolicyArch::Gat ? E + H : E;
  s.push_back({"score.W", S, 1, S});
  s.push_back({"score.b", 1, 1, S});
  s.push_back({"value.W", E, 1, E});
  s.push_back({"value.b", 1, 1, E});
  return s;
}

/// (heads * d) x d matrix that averages head blocks.
Matrix head_average(int heads, int d) {
  Matrix m(heads * d, d);
  for (int h = 0; h < heads; ++h) {
    for (int k = 0; k < d; ++k) m(h * d + k, k) = 1.0 / heads;
  }
  return m;
}

Matrix dropout_mask(int rows, int cols, double p, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  const double s = 1.0 / (1.0 - p);
  const auto threshold = static_cast<std::uint64_t>(p * 18446744073709551616.0);
  for (double& x : m.data) x = rng() >= threshold ? s : 0.0;
  return m;
}

/// Parameter leaves are created on first use so unused tensors stay off the tape.
class Leaves {
 public:
  Leaves(Tape& t, const PolicyParams& p) : t_(t), p_(p), vars_(p.tensors.size()) {}
  Var operator()(const std::string& name) {
    const int i = p_.index(name);
    if (vars_[i].id < 0) vars_[i] = t_.parameter(p_.tensors[i], i);
    return vars_[i];
  }

 private:
  Tape& t_;
  const PolicyParams& p_;
  std::vector<Var> vars_;
};

void check_graph(const PolicyParams& params, const StateGraph& graph) {
  validate(params.config);
  if (!graph.topo || graph.topo->num_nodes() == 0) throw EmptyDirtyMask("graph has no nodes");
  if (graph.num_dirty() == 0) throw EmptyDirtyMask("no dirty constraint to score");
}

void finish(ForwardPass& pass, const StateGraph& graph) {
  const Matrix& L = pass.tape.value(pass.logits);
  PolicyOutput& out = pass.out;
  for (int c = 0; c < static_cast<int>(graph.dirty_mask.size()); ++c) {
    if (!graph.dirty_mask[c]) continue;
    out.actions.push_back(c);
    out.logits.push_back(L(c, 0));
  }
  out.probs = softmax(out.logits);
  out.entropy = 0.0;
  for (double p : out.probs) {
    if (p > 0.0) out.entropy -= p * std::log(p);
  }
  out.value = pass.tape.value(pass.value)(0, 0);
}

/// Shared input projection: ELU of a per-role affine map, variables stacked over constraints.
std::pair<Var, Var> project_inputs(Tape& t, Leaves& P, const StateGraph& graph) {
  Var xv = t.constant(graph.var_feats);
  Var xc = t.constant(graph.con_feats);
  Var hv = t.elu(t.add_row(t.matmul(xv, P("in_var.W")), P("in_var.b")));
  Var hc = t.elu(t.add_row(t.matmul(xc, P("in_con.W")), P("in_con.b")));
  return {hv, hc};
}

}  // namespace

void validate(const GatConfig& cfg) {
  if (cfg.layers < 1) throw ConfigError("policy needs at least one layer");
  if (cfg.hidden < 1 || cfg.heads < 1) throw ConfigError("hidden and heads must be positive");
  if (cfg.arch == PolicyArch::Gat && cfg.hidden % cfg.heads != 0) {
    throw ConfigError("hidden (" + std::to_string(cfg.hidden) + ") must be divisible by heads (" +
                      std::to_string(cfg.heads) + ")");
  }
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!(cfg.slope >= 0.0)) throw ConfigError("leaky slope must be non-negative");
}

int PolicyParams::index(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("no parameter tensor named " + name);
  return static_cast<int>(it - names.begin());
}

std::size_t PolicyParams::num_scalars() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

PolicyParams init_params(const GatConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  PolicyParams p;
  p.config = cfg;
  std::mt19937_64 rng(seed);
  for (const Shape& s : layout(cfg)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix m(s.rows, s.cols);
    for (double& x : m.data) x = u(rng);
    p.names.push_back(s.name);
    p.tensors.push_back(std::move(m));
  }
  return p;
}

Gradients zeros_like(const PolicyParams& p) {
  Gradients g;
  g.reserve(p.tensors.size());
  for (const auto& t : p.tensors) g.emplace_back(t.rows, t.cols);
  return g;
}

double PolicyOutput::prob_of(ConstraintId c) const {
  const int i = action_index(c);
  return i < 0 ? 0.0 : probs[i];
}

int PolicyOutput::action_index(ConstraintId c) const {
  auto it = std::lower_bound(actions.begin(), actions.end(), c);
  return it != actions.end() && *it == c ? static_cast<int>(it - actions.begin()) : -1;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
  for (double& x : p) x /= z;
  return p;
}

ForwardPass forward(const PolicyParams& params, const StateGraph& graph, bool train_mode, std::uint64_t seed,
                    bool record) {
  if (params.config.arch == PolicyArch::Mlp) return mlp_ablation_forward(params, graph, train_mode, seed, record);
  check_graph(params, graph);
  const GatConfig& cfg = params.config;
  const GraphTopology& topo = *graph.topo;

  ForwardPass pass{PolicyOutput{}, Tape(record), Var{}, Var{}, {}, graph.topo, params.size()};
  Tape& t = pass.tape;
  Leaves P(t, params);
  std::mt19937_64 rng(seed);
  const bool drop = train_mode && cfg.dropout > 0.0;

  auto [hv, hc] = project_inputs(t, P, graph);
  Var h = t.concat_rows(hv, hc);
  const std::span<const int> src(topo.edge_src);
  const std::span<const int> dst(topo.edge_dst);

  for (int l = 0; l < cfg.layers; ++l) {
    if (drop) h = t.mask(h, dropout_mask(topo.num_nodes(), cfg.hidden, cfg.dropout, rng));
    const bool last = l + 1 == cfg.layers;
    Var z = t.matmul(h, P(layer_name(l, "W")));
    Matrix alpha;
    Var combined = t.graph_attention(z, P(layer_name(l, "a_src")), P(layer_name(l, "a_dst")), src, dst, topo.by_dst,
                                     cfg.slope, &alpha);
    pass.attention.push_back(std::move(alpha));
    if (last && cfg.heads > 1) combined = t.matmul(combined, t.constant(head_average(cfg.heads, cfg.head_dim())));
    h = t.elu(combined);
  }

  const Var score_in[] = {t.gather_rows(h, topo.con_nodes), hc};
  Var hcon = t.concat_cols(score_in);
  pass.logits = t.add_row(t.matmul(hcon, P("score.W")), P("score.b"));
  pass.value = t.add_row(t.matmul(t.mean_rows(h), P("value.W")), P("value.b"));
  finish(pass, graph);
  return pass;
}

ForwardPass mlp_ablation_forward(const PolicyParams& params, const StateGraph& graph, bool train_mode,
                                 std::uint64_t seed, bool record) {
  if (params.config.arch != PolicyArch::Mlp) throw ConfigError("parameters were not built for the MLP ablation");
  check_graph(params, graph);
  const GatConfig& cfg = params.config;
  const int nc = graph.topo->num_cons;

  ForwardPass pass{PolicyOutput{}, Tape(record), Var{}, Var{}, {}, graph.topo, params.size()};
  Tape& t = pass.tape;
  Leaves P(t, params);
  std::mt19937_64 rng(seed);
  const bool drop = train_mode && cfg.dropout > 0.0;

  auto [hv, hc] = project_inputs(t, P, graph);
  Var pooled = t.mean_rows(t.concat_rows(hv, hc));
  Var ones = t.constant(Matrix(nc, 1, 1.0));
  Var broadcast = t.matmul(ones, pooled);
  const Var parts[] = {hc, broadcast};
  Var z = t.concat_cols(parts);
  for (int l = 0; l < cfg.layers; ++l) {
    if (drop) {
      const Matrix& v = t.value(z);
      z = t.mask(z, dropout_mask(v.rows, v.cols, cfg.dropout, rng));
    }
    const std::string n = "mlp" + std::to_string(l);
    z = t.elu(t.add_row(t.matmul(z, P(n + ".W")), P(n + ".b")));
  }
  pass.logits = t.add_row(t.matmul(z, P("score.W")), P("score.b"));
  pass.value = t.add_row(t.matmul(t.mean_rows(z), P("value.W")), P("value.b"));
  finish(pass, graph);
  return pass;
}

Gradients backward(ForwardPass& pass, const OutputGrad& grad) {
  if (grad.dlogits.size() != pass.out.actions.size()) {
    throw std::invalid_argument("dlogits must have one entry per action");
  }
  const Matrix& L = pass.tape.value(pass.logits);
  Matrix dl(L.rows, 1);
  for (std::size_t i = 0; i < pass.out.actions.size(); ++i) dl(pass.out.actions[i], 0) = grad.dlogits[i];
  const std::pair<Var, Matrix> seeds[] = {{pass.logits, std::move(dl)}, {pass.value, Matrix(1, 1, grad.dvalue)}};
  return pass.tape.backward(seeds, pass.num_slots);
}

std::vector<double> attention_coefficients(const Matrix& W, std::span<const double> a, std::span<const double> h_i,
                                           const std::vector<std::vector<double>>& neighbors, double slope) {
  if (neighbors.empty()) throw NoNeighbors("attention needs at least one neighbor");
  if (static_cast<int>(a.size()) != 2 * W.cols || static_cast<int>(h_i.size()) != W.rows) {
    throw std::invalid_argument("attention shape mismatch");
  }
  auto project = [&](std::span<const double> h) {
    std::vector<double> z(W.cols, 0.0);
    for (int r = 0; r < W.rows; ++r) {
      for (int c = 0; c < W.cols; ++c) z[c] += h[r] * W(r, c);
    }
    return z;
  };
  const std::vector<double> zi = project(h_i);
  double self_term = 0.0;
  for (int c = 0; c < W.cols; ++c) self_term += a[c] * zi[c];
  std::vector<double> e;
  for (const auto& hj : neighbors) {
    if (static_cast<int>(hj.size()) != W.rows) throw std::invalid_argument("attention shape mismatch");
    const std::vector<double> zj = project(hj);
    double s = self_term;
    for (int c = 0; c < W.cols; ++c) s += a[W.cols + c] * zj[c];
    e.push_back(s > 0.0 ? s : slope * s);
  }
  return softmax(e);
}

// ---------------------------------------------------------------------------
// Serialization

std::string to_json(const GatConfig& cfg) {
  nlohmann::json j = {{"layers", cfg.layers},   {"hidden", cfg.hidden}, {"heads", cfg.heads},
                      {"dropout", cfg.dropout}, {"slope", cfg.slope},
                      {"arch", cfg.arch == PolicyArch::Gat ? "gat" : "mlp"}};
  return j.dump();
}

namespace {

GatConfig config_from(const nlohmann::json& j) {
  GatConfig cfg;
  cfg.layers = j.value("layers", cfg.layers);
  cfg.hidden = j.value("hidden", cfg.hidden);
  cfg.heads = j.value("heads", cfg.heads);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.slope = j.value("slope", cfg.slope);
  const std::string arch = j.value("arch", std::string("gat"));
  if (arch == "gat") {
    cfg.arch = PolicyArch::Gat;
  } else if (arch == "mlp") {
    cfg.arch = PolicyArch::Mlp;
  } else {
    throw ConfigError("unknown policy architecture '" + arch + "'");
  }
  validate(cfg);
  return cfg;
}

}  // namespace

GatConfig gat_config_from_json(const std::string& text) {
  try {
    return config_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad policy config: ") + e.what());
  }
}

std::string to_json(const PolicyParams& p) {
  nlohmann::json tensors = nlohmann::json::array();
  for (int i = 0; i < p.size(); ++i) {
    tensors.push_back({{"name", p.names[i]},
                       {"rows", p.tensors[i].rows},
                       {"cols", p.tensors[i].cols},
                       {"data", p.tensors[i].data}});
  }
  nlohmann::json j = {{"format", kFormat}, {"config", nlohmann::json::parse(to_json(p.config))}, {"tensors", tensors}};
  return j.dump();
}

PolicyParams params_from_json(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.value("format", std::string()) != kFormat) {
      throw CheckpointError("unsupported checkpoint format '" + j.value("format", std::string()) + "'");
    }
    PolicyParams p;
    p.config = config_from(j.at("config"));
    const std::vector<Shape> expected = layout(p.config);
    const auto& tensors = j.at("tensors");
    if (tensors.size() != expected.size()) throw CheckpointError("checkpoint tensor count does not match its config");
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const auto& t = tensors[i];
      const std::string name = t.at("name").get<std::string>();
      const int rows = t.at("rows").get<int>(), cols = t.at("cols").get<int>();
      if (name != expected[i].name || rows != expected[i].rows || cols != expected[i].cols) {
        throw CheckpointError("checkpoint tensor " + name + " does not match the expected layout");
      }
      Matrix m(rows, cols);
      m.data = t.at("data").get<std::vector<double>>();
      if (m.data.size() != static_cast<std::size_t>(rows) * cols) {
        throw CheckpointError("checkpoint tensor " + name + " has the wrong number of entries");
      }
      for (double x : m.data) {
        if (!std::isfinite(x)) throw CheckpointError("checkpoint tensor " + name + " has a non-finite entry");
      }
      p.names.push_back(name);
      p.tensors.push_back(std::move(m));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
}

void save_params(const PolicyParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  out << to_json(p) << '\n';
}

PolicyParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot read checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return params_from_json(ss.str());
}

}  // namespace propsched
