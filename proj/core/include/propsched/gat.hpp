#ifndef PROPSCHED_GAT_HPP_
#define PROPSCHED_GAT_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "propsched/autodiff.hpp"
#include "propsched/features.hpp"

namespace propsched {

enum class PolicyArch { Gat, Mlp };

struct GatConfig {
  int layers = 3;
  int hidden = 32;
  int heads = 4;
  double dropout = 0.1;
  double slope = 0.2;
  PolicyArch arch = PolicyArch::Gat;

  /// Width of one head on a hidden layer; heads are concatenated back to `hidden`.
  int head_dim() const { return hidden / heads; }
  /// Width of the final node embedding read by the heads.
  int embedding_dim() const { return arch == PolicyArch::Gat ? head_dim() : hidden; }

  friend bool operator==(const GatConfig&, const GatConfig&) = default;
};

/// Throws ConfigError.
void validate(const GatConfig& cfg);

/// Named parameter tensors. Layout for the GAT:
///   in_var.W, in_var.b, in_con.W, in_con.b,
///   layer{l}.W      hidden x (heads * d), head h in columns [h*d, (h+1)*d)
///   layer{l}.a_src  heads x d, one attention half-vector per head
///   layer{l}.a_dst  heads x d
/// with d = hidden / heads. The last layer averages its heads, so the final
/// embedding is d wide. value.W reads its node mean; score.W reads each
/// constraint's final embedding next to its input embedding (d + hidden rows).
///   score.W, score.b, value.W, value.b
/// The MLP ablation replaces the attention layers with mlp{l}.W, mlp{l}.b.
struct PolicyParams {
  GatConfig config;
  std::vector<std::string> names;
  std::vector<Matrix> tensors;

  int size() const { return static_cast<int>(tensors.size()); }
  /// Throws std::out_of_range.
  int index(const std::string& name) const;
  const Matrix& operator[](const std::string& name) const { return tensors[index(name)]; }
  Matrix& operator[](const std::string& name) { return tensors[index(name)]; }
  std::size_t num_scalars() const;

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
PolicyParams init_params(const GatConfig& cfg, std::uint64_t seed);

/// One gradient tensor per parameter tensor, same shapes.
using Gradients = std::vector<Matrix>;
Gradients zeros_like(const PolicyParams& p);

struct PolicyOutput {
  std::vector<ConstraintId> actions;  ///< dirty constraints, ascending id
  std::vector<double> logits;         ///< per action
  std::vector<double> probs;          ///< per action
  double entropy = 0.0;
  double value = 0.0;

  /// Probability of constraint c; 0 when c is not dirty.
  double prob_of(ConstraintId c) const;
  /// Position of c in actions, or -1.
  int action_index(ConstraintId c) const;
};

/// d(loss)/d(output) for a forward pass.
struct OutputGrad {
  std::vector<double> dlogits;  ///< per action
  double dvalue = 0.0;
};

/// Output of a forward pass plus everything needed to replay it.
struct ForwardPass {
  PolicyOutput out;
  Tape tape;
  Var logits;  ///< all constraints, C x 1
  Var value;   ///< 1 x 1
  std::vector<Matrix> attention;  ///< per layer, E x heads attention weights, edges grouped by destination
  std::shared_ptr<const GraphTopology> topo;
  int num_slots = 0;
};

/// Message passing with attention, score head on constraint nodes and value
/// head on mean-pooled node embeddings. Dispatches to the MLP ablation when
/// params.config.arch is Mlp. Dropout is used only in train mode, drawn from
/// `seed`. Throws EmptyDirtyMask.
ForwardPass forward(const PolicyParams& params, const StateGraph& graph, bool train_mode = false,
                    std::uint64_t seed = 0, bool record = true);

/// Scores each constraint from its own features and globally pooled features.
ForwardPass mlp_ablation_forward(const PolicyParams& params, const StateGraph& graph, bool train_mode = false,
                                 std::uint64_t seed = 0, bool record = true);

/// Reverse pass. Throws TapeConsumed on a second call.
Gradients backward(ForwardPass& pass, const OutputGrad& grad);

/// Attention weights of node i over its neighbors for one head:
/// softmax_j LeakyReLU(a^T [W h_i || W h_j]), with `a` of length 2 * cols(W).
/// Throws NoNeighbors.
std::vector<double> attention_coefficients(const Matrix& W, std::span<const double> a, std::span<const double> h_i,
                                           const std::vector<std::vector<double>>& neighbors, double slope = 0.2);

/// Softmax over `logits`, computed stably.
std::vector<double> softmax(std::span<const double> logits);

/// JSON checkpoint: {"format": "propsched-policy/1", "config": {...}, "tensors": [...]}.
std::string to_json(const PolicyParams& p);
/// Throws CheckpointError.
PolicyParams params_from_json(const std::string& text);
void save_params(const PolicyParams& p, const std::string& path);
PolicyParams load_params(const std::string& path);

std::string to_json(const GatConfig& cfg);
/// Throws ConfigError.
GatConfig gat_config_from_json(const std::string& text);

}  // namespace propsched

#endif  // PROPSCHED_GAT_HPP_
