#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "types.hpp"

namespace eqcausal {

using NodeId = int;

enum class OpKind : std::uint8_t {
  Input,
  Constant,
  Add,
  Subtract,
  Multiply,
  Reciprocal,
  Negate,
  MatVec,     // inputs: (row-major matrix flattened, vector)
  Dot,
  Power,      // constant exponent
  Exp,
  Log,
  Relu,
  Concat,
  Gather,     // also used for slices
  Broadcast,  // size-1 input to `size` copies
};

std::string_view to_string(OpKind op);
OpKind op_from_string(std::string_view name);

struct ExprNode {
  OpKind op = OpKind::Constant;
  std::vector<NodeId> inputs;
  int size = 0;  // output length
  // payloads; only the one matching `op` is meaningful
  int slot = -1;
  Vector value;
  std::vector<int> indices;
  double exponent = 0.0;
  int rows = 0;
  int cols = 0;
};

/// Immutable expression DAG over dense vectors.
///
/// Nodes are stored in topological order (every input id precedes its user).
/// Evaluation never mutates the graph, so one graph may be evaluated from
/// several threads at once.
class ExprGraph {
 public:
  ExprGraph() = default;

  const std::vector<int>& slot_sizes() const { return slot_sizes_; }
  int num_slots() const { return static_cast<int>(slot_sizes_.size()); }
  const std::vector<ExprNode>& nodes() const { return nodes_; }
  NodeId output() const { return output_; }
  int output_size() const { return nodes_.empty() ? 0 : nodes_[output_].size; }
  bool empty() const { return nodes_.empty(); }

 private:
  friend class GraphBuilder;
  std::vector<int> slot_sizes_;
  std::vector<ExprNode> nodes_;
  NodeId output_ = -1;
};

/// Incremental construction of an ExprGraph. Shapes are checked as nodes are
/// added, so a built graph is always shape-consistent.
class GraphBuilder {
 public:
  explicit GraphBuilder(std::vector<int> slot_sizes);

  NodeId input(int slot);
  NodeId constant(Vector value);
  NodeId scalar(double value);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId reciprocal(NodeId a);
  NodeId negate(NodeId a);
  NodeId matvec(NodeId matrix, NodeId vec, int rows, int cols);
  NodeId dot(NodeId a, NodeId b);
  NodeId pow(NodeId a, double exponent);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId relu(NodeId a);
  NodeId concat(std::span<const NodeId> parts);
  NodeId gather(NodeId a, std::vector<int> indices);
  NodeId slice(NodeId a, int offset, int length);
  NodeId broadcast(NodeId a, int size);
  NodeId sum(NodeId a);

  /// Copies `graph` into this builder, substituting its input slots with the
  /// given nodes. Returns the id of the copied output.
  NodeId inline_graph(const ExprGraph& graph, std::span<const NodeId> slot_values);

  int size_of(NodeId id) const;
  ExprGraph build(NodeId output) &&;

  /// Raw node insertion used by deserialization; validates like the typed adders.
  NodeId push(ExprNode node);

 private:
  NodeId checked(NodeId id) const;

  std::vector<int> slot_sizes_;
  std::vector<ExprNode> nodes_;
};

/// Per-slot partial derivatives; `slots[s]` has the shape of input slot s.
struct Gradient {
  std::vector<Vector> slots;
};

Vector forward_eval(const ExprGraph& graph, std::span<const Vector> bindings);

/// Returns cotangent^T * J for the Jacobian J of the output w.r.t. each slot.
Gradient reverse_vjp(const ExprGraph& graph, std::span<const Vector> bindings,
                     const Vector& cotangent);

/// Dense Jacobian of the output w.r.t. one slot, one reverse sweep per row.
Matrix jacobian(const ExprGraph& graph, std::span<const Vector> bindings, int slot);

/// Central-difference Jacobian; column j = (fn(x + h e_j) - fn(x - h e_j)) / 2h.
Matrix finite_difference_jacobian(const std::function<Vector(const Vector&)>& fn,
                                  const Vector& x, double h);

}  // namespace eqcausal
