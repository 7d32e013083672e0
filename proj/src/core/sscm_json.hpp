#pragma once

#include <json.hpp>

#include "expr_graph.hpp"
#include "sscm.hpp"

namespace eqcausal {

// Document layout:
//   {"names": [...], "theta": {"ref": [...], "box": [[lo, hi], ...], "names": [...]},
//    "u": [...], "w": [...], "x_ref": [...] (optional),
//    "nodes": [{"parents": [...], "theta_index": [...], "u_index": [...],
//               "w_index": [...], "graph": <graph>}, ...]}
// A graph is {"slots": [sizes], "output": id, "ops": [op, ...]} where each op is
// {"op": code, "in": [ids]} plus "slot", "value", "indices", "exponent",
// "rows"/"cols" or "size" as the op code requires.

nlohmann::json graph_to_json(const ExprGraph& graph);
ExprGraph graph_from_json(const nlohmann::json& doc);

nlohmann::json spec_to_json(const SscmSpec& spec);
/// Throws ParseError on malformed documents and InvalidSpec when the decoded
/// model fails validation.
SscmSpec spec_from_json(const nlohmann::json& doc);

}  // namespace eqcausal
