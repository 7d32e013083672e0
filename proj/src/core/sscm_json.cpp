#include "sscm_json.hpp"

#include <string>

#include "error.hpp"

namespace eqcausal {

using nlohmann::json;

namespace {

json vector_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

[[noreturn]] void malformed(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ParseError, where + ": " + what);
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) malformed(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) malformed(where, std::string("missing \"") + key + "\"");
  return *it;
}

Vector vector_from(const json& arr, const std::string& where) {
  if (!arr.is_array()) malformed(where, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) malformed(where + "/" + std::to_string(i), "expected a number");
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  return v;
}

std::vector<int> ints_from(const json& arr, const std::string& where) {
  if (!arr.is_array()) malformed(where, "expected an array of integers");
  std::vector<int> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number_integer()) malformed(where + "/" + std::to_string(i), "expected an integer");
    out.push_back(arr[i].get<int>());
  }
  return out;
}

int int_from(const json& v, const std::string& where) {
  if (!v.is_number_integer()) malformed(where, "expected an integer");
  return v.get<int>();
}

}  // namespace

json graph_to_json(const ExprGraph& graph) {
  json ops = json::array();
  for (const ExprNode& n : graph.nodes()) {
    json op = {{"op", std::string(to_string(n.op))}, {"in", n.inputs}};
    switch (n.op) {
      case OpKind::Input:
        op["slot"] = n.slot;
        break;
      case OpKind::Constant:
        op["value"] = vector_json(n.value);
        break;
      case OpKind::Gather:
        op["indices"] = n.indices;
        break;
      case OpKind::Power:
        op["exponent"] = n.exponent;
        break;
      case OpKind::MatVec:
        op["rows"] = n.rows;
        op["cols"] = n.cols;
        break;
      case OpKind::Broadcast:
        op["size"] = n.size;
        break;
      default:
        break;
    }
    ops.push_back(std::move(op));
  }
  return {{"slots", graph.slot_sizes()}, {"output", graph.output()}, {"ops", std::move(ops)}};
}

ExprGraph graph_from_json(const json& doc) {
  const std::string where = "graph";
  GraphBuilder b(ints_from(field(doc, "slots", where), where + "/slots"));
  const json& ops = field(doc, "ops", where);
  if (!ops.is_array() || ops.empty()) malformed(where + "/ops", "expected a nonempty array");
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const std::string at = where + "/ops/" + std::to_string(i);
    const json& op = ops[i];
    const json& code = field(op, "op", at);
    if (!code.is_string()) malformed(at + "/op", "expected a string");
    ExprNode n;
    n.op = op_from_string(code.get<std::string>());
    n.inputs = ints_from(field(op, "in", at), at + "/in");
    for (int in : n.inputs) {
      if (in < 0 || in >= static_cast<int>(i)) malformed(at + "/in", "input must precede the op");
    }
    switch (n.op) {
      case OpKind::Input:
        n.slot = int_from(field(op, "slot", at), at + "/slot");
        break;
      case OpKind::Constant:
        n.value = vector_from(field(op, "value", at), at + "/value");
        break;
      case OpKind::Gather:
        n.indices = ints_from(field(op, "indices", at), at + "/indices");
        break;
      case OpKind::Power: {
        const json& e = field(op, "exponent", at);
        if (!e.is_number()) malformed(at + "/exponent", "expected a number");
        n.exponent = e.get<double>();
        break;
      }
      case OpKind::MatVec:
        n.rows = int_from(field(op, "rows", at), at + "/rows");
        n.cols = int_from(field(op, "cols", at), at + "/cols");
        break;
      case OpKind::Broadcast:
        n.size = int_from(field(op, "size", at), at + "/size");
        break;
      default:
        break;
    }
    try {
      b.push(std::move(n));
    } catch (const Error& e) {
      malformed(at, e.what());
    }
  }
  const int output = int_from(field(doc, "output", where), where + "/output");
  if (output < 0 || output >= static_cast<int>(ops.size())) malformed(where + "/output", "out of range");
  return std::move(b).build(output);
}

json spec_to_json(const SscmSpec& spec) {
  json box = json::array();
  for (const Interval& iv : spec.theta_box) box.push_back(json::array({iv.lo, iv.hi}));
  json nodes = json::array();
  for (const Assignment& a : spec.assignments) {
    nodes.push_back({{"parents", a.parents},
                     {"theta_index", a.theta_index},
                     {"u_index", a.u_index},
                     {"w_index", a.w_index},
                     {"graph", graph_to_json(a.graph)}});
  }
  json doc = {{"names", spec.names},
              {"theta",
               {{"ref", vector_json(spec.theta_ref)},
                {"box", std::move(box)},
                {"names", spec.theta_names}}},
              {"u", vector_json(spec.u)},
              {"w", vector_json(spec.w)},
              {"nodes", std::move(nodes)}};
  if (spec.x_ref) doc["x_ref"] = vector_json(*spec.x_ref);
  return doc;
}

SscmSpec spec_from_json(const json& doc) {
  SscmSpec spec;
  const json& names = field(doc, "names", "model");
  if (!names.is_array()) malformed("model/names", "expected an array of strings");
  for (const json& n : names) {
    if (!n.is_string()) malformed("model/names", "expected strings");
    spec.names.push_back(n.get<std::string>());
  }
  const json& theta = field(doc, "theta", "model");
  spec.theta_ref = vector_from(field(theta, "ref", "model/theta"), "model/theta/ref");
  const json& box = field(theta, "box", "model/theta");
  if (!box.is_array()) malformed("model/theta/box", "expected an array of [lo, hi] pairs");
  for (std::size_t i = 0; i < box.size(); ++i) {
    Vector pair = vector_from(box[i], "model/theta/box/" + std::to_string(i));
    if (pair.size() != 2) malformed("model/theta/box/" + std::to_string(i), "expected [lo, hi]");
    spec.theta_box.push_back({pair[0], pair[1]});
  }
  if (auto it = theta.find("names"); it != theta.end()) {
    for (const json& n : *it) {
      if (!n.is_string()) malformed("model/theta/names", "expected strings");
      spec.theta_names.push_back(n.get<std::string>());
    }
  }
  if (auto it = doc.find("u"); it != doc.end()) spec.u = vector_from(*it, "model/u");
  if (auto it = doc.find("w"); it != doc.end()) spec.w = vector_from(*it, "model/w");
  if (auto it = doc.find("x_ref"); it != doc.end()) spec.x_ref = vector_from(*it, "model/x_ref");

  const json& nodes = field(doc, "nodes", "model");
  if (!nodes.is_array()) malformed("model/nodes", "expected an array");
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    const std::string at = "model/nodes/" + std::to_string(j);
    const json& n = nodes[j];
    Assignment a;
    a.parents = ints_from(field(n, "parents", at), at + "/parents");
    auto optional_ints = [&](const char* key) {
      auto it = n.find(key);
      return it == n.end() ? std::vector<int>{} : ints_from(*it, at + "/" + key);
    };
    a.theta_index = optional_ints("theta_index");
    a.u_index = optional_ints("u_index");
    a.w_index = optional_ints("w_index");
    a.graph = graph_from_json(field(n, "graph", at));
    spec.assignments.push_back(std::move(a));
  }
  require_valid(spec);
  return spec;
}

}  // namespace eqcausal
