#include "propsched/features.hpp"

#include <algorithm>
#include <numeric>

#include "propsched/scheduler.hpp"

namespace propsched {

std::shared_ptr<const GraphTopology> make_topology(int num_vars, const std::vector<std::vector<int>>& scopes) {
  auto topo = std::make_shared<GraphTopology>();
  topo->num_vars = num_vars;
  topo->num_cons = static_cast<int>(scopes.size());
  for (int c = 0; c < topo->num_cons; ++c) {
    std::vector<int> vars = scopes[c];
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
    for (int v : vars) topo->incidence.emplace_back(v, c);
    topo->con_nodes.push_back(num_vars + c);
  }

  const int n = topo->num_nodes();
  std::vector<std::vector<int>> incoming(n);
  for (int i = 0; i < n; ++i) incoming[i].push_back(i);
  for (auto [v, c] : topo->incidence) {
    incoming[num_vars + c].push_back(v);
    incoming[v].push_back(num_vars + c);
  }
  topo->by_dst.offsets.assign(1, 0);
  for (int i = 0; i < n; ++i) {
    std::sort(incoming[i].begin(), incoming[i].end());
    for (int j : incoming[i]) {
      topo->edge_src.push_back(j);
      topo->edge_dst.push_back(i);
    }
    topo->by_dst.offsets.push_back(topo->num_edges());
  }
  return topo;
}

std::shared_ptr<const GraphTopology> make_topology(const Model& model) {
  std::vector<std::vector<int>> scopes;
  scopes.reserve(model.propagators.size());
  for (const auto& p : model.propagators) scopes.push_back(p.watched);
  return make_topology(static_cast<int>(model.capacities.size()), scopes);
}

int StateGraph::num_dirty() const { return static_cast<int>(std::count(dirty_mask.begin(), dirty_mask.end(), 1)); }

double violation(const SolverState& state, ConstraintId c) {
  const long pending = state.pending_change(c);
  if (state.mode() == Mode::Derivation) return pending > 0 ? 1.0 : 0.0;
  long total = 0;
  for (int v : state.propagator(c).watched) total += state.domain(v).size();
  return total > 0 ? std::min(1.0, static_cast<double>(pending) / total) : 0.0;
}

StateGraph featurize(const SolverState& state, const ActivityTable* activity,
                     std::shared_ptr<const GraphTopology> topo) {
  const Model& model = state.model();
  StateGraph g;
  g.topo = topo ? std::move(topo) : make_topology(model);

  const int nv = state.num_variables();
  g.var_feats = Matrix(nv, kVarFeatures);
  for (int v = 0; v < nv; ++v) {
    const Variable& var = state.variable(v);
    const int cap = model.capacities[v];
    g.var_feats(v, 0) = cap > 0 ? static_cast<double>(var.domain.size()) / cap : 0.0;
    g.var_feats(v, 1) = model.max_degree > 0 ? static_cast<double>(var.degree) / model.max_degree : 0.0;
    g.var_feats(v, 2) = state.step() > 0
                            ? static_cast<double>(var.history.count_since(state.step() - 1)) / var.history.window()
                            : 0.0;
  }

  const int nc = state.num_constraints();
  g.con_feats = Matrix(nc, kConFeatures);
  g.dirty_mask.assign(nc, 0);
  const double max_act = activity ? activity->max_score() : 0.0;
  for (int c = 0; c < nc; ++c) {
    const Propagator& p = state.propagator(c);
    g.con_feats(c, static_cast<int>(p.kind)) = 1.0;
    g.con_feats(c, kNumConstraintKinds) = model.max_arity > 0 ? static_cast<double>(p.arity()) / model.max_arity : 0.0;
    g.con_feats(c, kNumConstraintKinds + 1) = violation(state, c);
    g.con_feats(c, kNumConstraintKinds + 2) = max_act > 0.0 ? activity->score(c) / max_act : 0.0;
    const bool dirty = state.dirty().contains(c);
    g.con_feats(c, kNumConstraintKinds + 3) = dirty ? 1.0 : 0.0;
    g.dirty_mask[c] = dirty ? 1 : 0;
  }
  return g;
}

}  // namespace propsched
