#ifndef PROPSCHED_FEATURES_HPP_
#define PROPSCHED_FEATURES_HPP_

#include <memory>
#include <vector>

#include "propsched/autodiff.hpp"
#include "propsched/engine.hpp"

namespace propsched {

class ActivityTable;

inline constexpr int kVarFeatures = 3;
inline constexpr int kConFeatures = kNumConstraintKinds + 4;

/// Bipartite incidence of an instance, shared by every state of that instance.
///
/// Nodes are numbered variables first, then constraints (node V + c). Each
/// (variable, constraint) scope pair contributes one edge in each direction,
/// and every node has a self-loop. Edges are sorted by destination node so
/// that `by_dst` segments the incoming edges of each node.
struct GraphTopology {
  int num_vars = 0;
  int num_cons = 0;
  std::vector<std::pair<int, int>> incidence;  ///< (variable, constraint), one per distinct scope member
  std::vector<int> edge_src;
  std::vector<int> edge_dst;
  Segments by_dst;
  std::vector<int> con_nodes;  ///< node index of every constraint, in id order

  int num_nodes() const { return num_vars + num_cons; }
  int num_edges() const { return static_cast<int>(edge_src.size()); }
};

std::shared_ptr<const GraphTopology> make_topology(int num_vars, const std::vector<std::vector<int>>& scopes);
std::shared_ptr<const GraphTopology> make_topology(const Model& model);

/// Featurized state.
///
/// Variable row: [|D|/capacity, degree/max degree, recent changes / window].
/// Constraint row: [kind one-hot (6), arity/max arity, violation, activity, dirty].
struct StateGraph {
  std::shared_ptr<const GraphTopology> topo;
  Matrix var_feats;
  Matrix con_feats;
  std::vector<char> dirty_mask;

  int num_dirty() const;
};

/// Violation feature of one constraint. Derivation mode: 1 when the
/// constraint would add a value, else 0. Pruning mode: values it would remove
/// as a fraction of the total scope domain size.
double violation(const SolverState& state, ConstraintId c);

/// `activity` may be null; scores are normalized by the table's maximum.
/// Reuses `topo` when given, which must come from the same instance.
StateGraph featurize(const SolverState& state, const ActivityTable* activity = nullptr,
                     std::shared_ptr<const GraphTopology> topo = nullptr);

}  // namespace propsched

#endif  // PROPSCHED_FEATURES_HPP_
