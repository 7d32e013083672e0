#pragma once

#include <cstdint>
#include <vector>

#include "expr_graph.hpp"
#include "types.hpp"

namespace eqcausal {

/// Fully connected ReLU network. Hidden layers use ReLU; the output layer is
/// linear so the network can produce signed corrections.
struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden = {20, 10};
  int output_dim = 1;
  std::uint64_t seed = 0;
  bool zero_output_layer = true;  // start as the zero function

  void validate() const;
  /// Layer widths including input and output.
  std::vector<int> widths() const;
  int param_count() const;
};

/// Weights laid out layer by layer, each as a row-major (out x in) matrix
/// followed by its bias. Entries ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Vector mlp_init(const MlpSpec& spec);

/// Direct evaluation. Throws DimensionMismatch on wrong input or weight sizes.
Vector mlp_forward(const MlpSpec& spec, const Vector& weights, const Vector& input);

/// Emits the network into `b`. `weights` is a node holding the flat weights
/// starting at `offset`.
NodeId emit_mlp(GraphBuilder& b, const MlpSpec& spec, NodeId weights, int offset, NodeId input);

}  // namespace eqcausal
