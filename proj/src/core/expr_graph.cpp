#include "expr_graph.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "error.hpp"

namespace eqcausal {

namespace {

struct OpName {
  OpKind op;
  std::string_view name;
};

constexpr OpName kOpNames[] = {
    {OpKind::Input, "input"},         {OpKind::Constant, "const"},
    {OpKind::Add, "add"},             {OpKind::Subtract, "sub"},
    {OpKind::Multiply, "mul"},        {OpKind::Reciprocal, "recip"},
    {OpKind::Negate, "neg"},          {OpKind::MatVec, "matvec"},
    {OpKind::Dot, "dot"},             {OpKind::Power, "pow"},
    {OpKind::Exp, "exp"},             {OpKind::Log, "log"},
    {OpKind::Relu, "relu"},           {OpKind::Concat, "concat"},
    {OpKind::Gather, "gather"},       {OpKind::Broadcast, "broadcast"},
};

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

std::string node_label(NodeId id, OpKind op) {
  return "node " + std::to_string(id) + " (" + std::string(to_string(op)) + ")";
}

void check_bindings(const ExprGraph& graph, std::span<const Vector> bindings) {
  if (static_cast<int>(bindings.size()) < graph.num_slots()) {
    throw Error(ErrorCode::UnboundSlot, "slot " + std::to_string(bindings.size()) +
                                            " of " + std::to_string(graph.num_slots()) +
                                            " is not bound");
  }
  for (int s = 0; s < graph.num_slots(); ++s) {
    if (bindings[s].size() != graph.slot_sizes()[s]) {
      throw Error(ErrorCode::ShapeMismatch,
                  "slot " + std::to_string(s) + " expects " +
                      std::to_string(graph.slot_sizes()[s]) + " values, got " +
                      std::to_string(bindings[s].size()));
    }
  }
}

Vector eval_node(const ExprNode& node, NodeId id, const std::vector<Vector>& values,
                 std::span<const Vector> bindings) {
  auto in = [&](int k) -> const Vector& { return values[node.inputs[k]]; };
  switch (node.op) {
    case OpKind::Input:
      return bindings[node.slot];
    case OpKind::Constant:
      return node.value;
    case OpKind::Add:
      return in(0) + in(1);
    case OpKind::Subtract:
      return in(0) - in(1);
    case OpKind::Multiply:
      return in(0).cwiseProduct(in(1));
    case OpKind::Reciprocal: {
      const Vector& a = in(0);
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a[i] == 0.0) {
          throw Error(ErrorCode::DomainError, "reciprocal of zero at " + node_label(id, node.op));
        }
      }
      return a.cwiseInverse();
    }
    case OpKind::Negate:
      return -in(0);
    case OpKind::MatVec:
      return RowMajorMap(in(0).data(), node.rows, node.cols) * in(1);
    case OpKind::Dot:
      return Vector::Constant(1, in(0).dot(in(1)));
    case OpKind::Power: {
      const Vector& a = in(0);
      const double e = node.exponent;
      const bool integral = std::floor(e) == e;
      Vector out(a.size());
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        if ((e < 0.0 && a[i] <= 0.0) || (!integral && a[i] < 0.0)) {
          throw Error(ErrorCode::DomainError, "power " + std::to_string(e) + " of " +
                                                  std::to_string(a[i]) + " at " +
                                                  node_label(id, node.op));
        }
        out[i] = std::pow(a[i], e);
      }
      return out;
    }
    case OpKind::Exp:
      return in(0).array().exp().matrix();
    case OpKind::Log: {
      const Vector& a = in(0);
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (!(a[i] > 0.0)) {
          throw Error(ErrorCode::DomainError,
                      "log of " + std::to_string(a[i]) + " at " + node_label(id, node.op));
        }
      }
      return a.array().log().matrix();
    }
    case OpKind::Relu:
      return in(0).cwiseMax(0.0);
    case OpKind::Concat: {
      Vector out(node.size);
      Eigen::Index offset = 0;
      for (NodeId part : node.inputs) {
        out.segment(offset, values[part].size()) = values[part];
        offset += values[part].size();
      }
      return out;
    }
    case OpKind::Gather: {
      const Vector& a = in(0);
      Vector out(node.indices.size());
      for (std::size_t i = 0; i < node.indices.size(); ++i) out[i] = a[node.indices[i]];
      return out;
    }
    case OpKind::Broadcast:
      return Vector::Constant(node.size, in(0)[0]);
  }
  throw Error(ErrorCode::InvalidSpec, "unknown op at node " + std::to_string(id));
}

// Forward values of every node; the tape for reverse sweeps.
std::vector<Vector> run_forward(const ExprGraph& graph, std::span<const Vector> bindings) {
  check_bindings(graph, bindings);
  std::vector<Vector> values(graph.nodes().size());
  for (std::size_t i = 0; i < graph.nodes().size(); ++i) {
    values[i] = eval_node(graph.nodes()[i], static_cast<NodeId>(i), values, bindings);
  }
  return values;
}

Gradient run_backward(const ExprGraph& graph, const std::vector<Vector>& values,
                      const Vector& cotangent) {
  const auto& nodes = graph.nodes();
  if (cotangent.size() != graph.output_size()) {
    throw Error(ErrorCode::ShapeMismatch, "cotangent has " + std::to_string(cotangent.size()) +
                                              " entries, output has " +
                                              std::to_string(graph.output_size()));
  }
  Gradient grad;
  grad.slots.reserve(graph.num_slots());
  for (int s : graph.slot_sizes()) grad.slots.push_back(Vector::Zero(s));

  std::vector<Vector> adj(nodes.size());
  adj[graph.output()] = cotangent;

  auto accumulate = [&](NodeId target, const auto& contribution) {
    if (adj[target].size() == 0) {
      adj[target] = contribution;
    } else {
      adj[target] += contribution;
    }
  };

  for (int i = graph.output(); i >= 0; --i) {
    if (adj[i].size() == 0) continue;
    const ExprNode& node = nodes[i];
    const Vector& g = adj[i];
    auto in = [&](int k) -> const Vector& { return values[node.inputs[k]]; };
    switch (node.op) {
      case OpKind::Input:
        grad.slots[node.slot] += g;
        break;
      case OpKind::Constant:
        break;
      case OpKind::Add:
        accumulate(node.inputs[0], g);
        accumulate(node.inputs[1], g);
        break;
      case OpKind::Subtract:
        accumulate(node.inputs[0], g);
        accumulate(node.inputs[1], Vector(-g));
        break;
      case OpKind::Multiply:
        accumulate(node.inputs[0], Vector(g.cwiseProduct(in(1))));
        accumulate(node.inputs[1], Vector(g.cwiseProduct(in(0))));
        break;
      case OpKind::Reciprocal:
        accumulate(node.inputs[0], Vector(-g.cwiseProduct(values[i].cwiseAbs2())));
        break;
      case OpKind::Negate:
        accumulate(node.inputs[0], Vector(-g));
        break;
      case OpKind::MatVec: {
        const Vector& m = in(0);
        const Vector& v = in(1);
        Vector gm(m.size());
        for (int r = 0; r < node.rows; ++r) {
          gm.segment(static_cast<Eigen::Index>(r) * node.cols, node.cols) = g[r] * v;
        }
        accumulate(node.inputs[0], gm);
        accumulate(node.inputs[1], Vector(RowMajorMap(m.data(), node.rows, node.cols).transpose() * g));
        break;
      }
      case OpKind::Dot:
        accumulate(node.inputs[0], Vector(g[0] * in(1)));
        accumulate(node.inputs[1], Vector(g[0] * in(0)));
        break;
      case OpKind::Power: {
        const Vector& a = in(0);
        const double e = node.exponent;
        Vector d(a.size());
        for (Eigen::Index k = 0; k < a.size(); ++k) {
          d[k] = e == 0.0 ? 0.0 : g[k] * e * std::pow(a[k], e - 1.0);
        }
        accumulate(node.inputs[0], d);
        break;
      }
      case OpKind::Exp:
        accumulate(node.inputs[0], Vector(g.cwiseProduct(values[i])));
        break;
      case OpKind::Log:
        accumulate(node.inputs[0], Vector(g.cwiseQuotient(in(0))));
        break;
      case OpKind::Relu: {
        // derivative at exactly zero is taken as zero
        Vector d = (in(0).array() > 0.0).select(g.array(), 0.0).matrix();
        accumulate(node.inputs[0], d);
        break;
      }
      case OpKind::Concat: {
        Eigen::Index offset = 0;
        for (NodeId part : node.inputs) {
          const Eigen::Index n = values[part].size();
          accumulate(part, Vector(g.segment(offset, n)));
          offset += n;
        }
        break;
      }
      case OpKind::Gather: {
        Vector d = Vector::Zero(in(0).size());
        for (std::size_t k = 0; k < node.indices.size(); ++k) d[node.indices[k]] += g[k];
        accumulate(node.inputs[0], d);
        break;
      }
      case OpKind::Broadcast:
        accumulate(node.inputs[0], Vector::Constant(1, g.sum()));
        break;
    }
  }
  return grad;
}

}  // namespace

std::string_view to_string(OpKind op) {
  for (const auto& entry : kOpNames) {
    if (entry.op == op) return entry.name;
  }
  return "unknown";
}

OpKind op_from_string(std::string_view name) {
  for (const auto& entry : kOpNames) {
    if (entry.name == name) return entry.op;
  }
  throw Error(ErrorCode::ParseError, "unknown op code '" + std::string(name) + "'");
}

GraphBuilder::GraphBuilder(std::vector<int> slot_sizes) : slot_sizes_(std::move(slot_sizes)) {
  for (int s : slot_sizes_) {
    if (s < 0) throw Error(ErrorCode::ShapeMismatch, "negative slot size");
  }
}

NodeId GraphBuilder::checked(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
    throw Error(ErrorCode::InvalidSpec, "node id " + std::to_string(id) + " does not exist yet");
  }
  return id;
}

int GraphBuilder::size_of(NodeId id) const { return nodes_[checked(id)].size; }

NodeId GraphBuilder::push(ExprNode node) {
  for (NodeId in : node.inputs) checked(in);
  auto sz = [&](int k) { return nodes_[node.inputs[k]].size; };
  auto need_inputs = [&](std::size_t n) {
    if (node.inputs.size() != n) {
      throw Error(ErrorCode::ShapeMismatch, std::string(to_string(node.op)) + " takes " +
                                                std::to_string(n) + " inputs");
    }
  };
  auto mismatch = [&](const std::string& what) {
    throw Error(ErrorCode::ShapeMismatch, std::string(to_string(node.op)) + ": " + what);
  };

  switch (node.op) {
    case OpKind::Input:
      need_inputs(0);
      if (node.slot < 0 || node.slot >= static_cast<int>(slot_sizes_.size())) {
        mismatch("slot " + std::to_string(node.slot) + " out of range");
      }
      node.size = slot_sizes_[node.slot];
      break;
    case OpKind::Constant:
      need_inputs(0);
      node.size = static_cast<int>(node.value.size());
      break;
    case OpKind::Add:
    case OpKind::Subtract:
    case OpKind::Multiply:
      need_inputs(2);
      if (sz(0) != sz(1)) mismatch(std::to_string(sz(0)) + " vs " + std::to_string(sz(1)));
      node.size = sz(0);
      break;
    case OpKind::Dot:
      need_inputs(2);
      if (sz(0) != sz(1)) mismatch(std::to_string(sz(0)) + " vs " + std::to_string(sz(1)));
      node.size = 1;
      break;
    case OpKind::Reciprocal:
    case OpKind::Negate:
    case OpKind::Power:
    case OpKind::Exp:
    case OpKind::Log:
    case OpKind::Relu:
      need_inputs(1);
      node.size = sz(0);
      break;
    case OpKind::MatVec:
      need_inputs(2);
      if (node.rows < 0 || node.cols < 0 || sz(0) != node.rows * node.cols || sz(1) != node.cols) {
        mismatch("matrix of " + std::to_string(sz(0)) + " entries is not " +
                 std::to_string(node.rows) + "x" + std::to_string(node.cols) +
                 " or vector length " + std::to_string(sz(1)) + " differs");
      }
      node.size = node.rows;
      break;
    case OpKind::Concat: {
      if (node.inputs.empty()) mismatch("needs at least one part");
      int total = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) total += sz(static_cast<int>(k));
      node.size = total;
      break;
    }
    case OpKind::Gather:
      need_inputs(1);
      for (int idx : node.indices) {
        if (idx < 0 || idx >= sz(0)) mismatch("index " + std::to_string(idx) + " out of range");
      }
      node.size = static_cast<int>(node.indices.size());
      break;
    case OpKind::Broadcast:
      need_inputs(1);
      if (sz(0) != 1) mismatch("input must have one entry");
      if (node.size < 0) mismatch("negative size");
      break;
  }
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId GraphBuilder::input(int slot) {
  ExprNode n;
  n.op = OpKind::Input;
  n.slot = slot;
  return push(std::move(n));
}

NodeId GraphBuilder::constant(Vector value) {
  ExprNode n;
  n.op = OpKind::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId GraphBuilder::scalar(double value) { return constant(Vector::Constant(1, value)); }

namespace {
ExprNode make(OpKind op, std::vector<NodeId> inputs) {
  ExprNode n;
  n.op = op;
  n.inputs = std::move(inputs);
  return n;
}
}  // namespace

NodeId GraphBuilder::add(NodeId a, NodeId b) { return push(make(OpKind::Add, {a, b})); }
NodeId GraphBuilder::sub(NodeId a, NodeId b) { return push(make(OpKind::Subtract, {a, b})); }
NodeId GraphBuilder::mul(NodeId a, NodeId b) { return push(make(OpKind::Multiply, {a, b})); }
NodeId GraphBuilder::reciprocal(NodeId a) { return push(make(OpKind::Reciprocal, {a})); }
NodeId GraphBuilder::negate(NodeId a) { return push(make(OpKind::Negate, {a})); }
NodeId GraphBuilder::dot(NodeId a, NodeId b) { return push(make(OpKind::Dot, {a, b})); }
NodeId GraphBuilder::exp(NodeId a) { return push(make(OpKind::Exp, {a})); }
NodeId GraphBuilder::log(NodeId a) { return push(make(OpKind::Log, {a})); }
NodeId GraphBuilder::relu(NodeId a) { return push(make(OpKind::Relu, {a})); }

NodeId GraphBuilder::matvec(NodeId matrix, NodeId vec, int rows, int cols) {
  ExprNode n = make(OpKind::MatVec, {matrix, vec});
  n.rows = rows;
  n.cols = cols;
  return push(std::move(n));
}

NodeId GraphBuilder::pow(NodeId a, double exponent) {
  ExprNode n = make(OpKind::Power, {a});
  n.exponent = exponent;
  return push(std::move(n));
}

NodeId GraphBuilder::concat(std::span<const NodeId> parts) {
  return push(make(OpKind::Concat, std::vector<NodeId>(parts.begin(), parts.end())));
}

NodeId GraphBuilder::gather(NodeId a, std::vector<int> indices) {
  ExprNode n = make(OpKind::Gather, {a});
  n.indices = std::move(indices);
  return push(std::move(n));
}

NodeId GraphBuilder::slice(NodeId a, int offset, int length) {
  std::vector<int> idx(length);
  for (int i = 0; i < length; ++i) idx[i] = offset + i;
  return gather(a, std::move(idx));
}

NodeId GraphBuilder::broadcast(NodeId a, int size) {
  ExprNode n = make(OpKind::Broadcast, {a});
  n.size = size;
  return push(std::move(n));
}

NodeId GraphBuilder::sum(NodeId a) { return dot(a, constant(Vector::Ones(size_of(a)))); }

NodeId GraphBuilder::inline_graph(const ExprGraph& graph, std::span<const NodeId> slot_values) {
  if (static_cast<int>(slot_values.size()) != graph.num_slots()) {
    throw Error(ErrorCode::UnboundSlot, "inlined graph has " + std::to_string(graph.num_slots()) +
                                            " slots, " + std::to_string(slot_values.size()) +
                                            " given");
  }
  for (int s = 0; s < graph.num_slots(); ++s) {
    if (size_of(slot_values[s]) != graph.slot_sizes()[s]) {
      throw Error(ErrorCode::ShapeMismatch, "inlined slot " + std::to_string(s) + " expects " +
                                                std::to_string(graph.slot_sizes()[s]) +
                                                " values");
    }
  }
  std::vector<NodeId> remap(graph.nodes().size());
  for (std::size_t i = 0; i < graph.nodes().size(); ++i) {
    const ExprNode& src = graph.nodes()[i];
    if (src.op == OpKind::Input) {
      remap[i] = slot_values[src.slot];
      continue;
    }
    ExprNode copy = src;
    for (NodeId& in : copy.inputs) in = remap[in];
    remap[i] = push(std::move(copy));
  }
  return remap[graph.output()];
}

ExprGraph GraphBuilder::build(NodeId output) && {
  checked(output);
  ExprGraph g;
  g.slot_sizes_ = std::move(slot_sizes_);
  g.nodes_ = std::move(nodes_);
  g.output_ = output;
  return g;
}

Vector forward_eval(const ExprGraph& graph, std::span<const Vector> bindings) {
  if (graph.empty()) throw Error(ErrorCode::InvalidSpec, "empty expression graph");
  auto values = run_forward(graph, bindings);
  return std::move(values[graph.output()]);
}

Gradient reverse_vjp(const ExprGraph& graph, std::span<const Vector> bindings,
                     const Vector& cotangent) {
  if (graph.empty()) throw Error(ErrorCode::InvalidSpec, "empty expression graph");
  auto values = run_forward(graph, bindings);
  return run_backward(graph, values, cotangent);
}

Matrix jacobian(const ExprGraph& graph, std::span<const Vector> bindings, int slot) {
  if (graph.empty()) throw Error(ErrorCode::InvalidSpec, "empty expression graph");
  if (slot < 0 || slot >= graph.num_slots()) {
    throw Error(ErrorCode::UnboundSlot, "no slot " + std::to_string(slot));
  }
  auto values = run_forward(graph, bindings);
  const int n = graph.output_size();
  Matrix jac(n, graph.slot_sizes()[slot]);
  for (int r = 0; r < n; ++r) {
    Vector basis = Vector::Zero(n);
    basis[r] = 1.0;
    jac.row(r) = run_backward(graph, values, basis).slots[slot].transpose();
  }
  return jac;
}

Matrix finite_difference_jacobian(const std::function<Vector(const Vector&)>& fn,
                                  const Vector& x, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "finite-difference step must be > 0");
  Matrix jac;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector plus = x;
    Vector minus = x;
    plus[j] += h;
    minus[j] -= h;
    Vector column = (fn(plus) - fn(minus)) / (2.0 * h);
    if (j == 0) jac.resize(column.size(), x.size());
    jac.col(j) = column;
  }
  return jac;
}

}  // namespace eqcausal
