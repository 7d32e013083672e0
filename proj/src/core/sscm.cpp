#include "sscm.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <utility>

#include "error.hpp"

namespace eqcausal {

const std::vector<int>& Assignment::index(ParamBlock block) const {
  switch (block) {
    case ParamBlock::Theta:
      return theta_index;
    case ParamBlock::Intervention:
      return u_index;
    case ParamBlock::Policy:
      break;
  }
  return w_index;
}

const Vector& ParamValues::block(ParamBlock b) const {
  return b == ParamBlock::Theta ? theta : b == ParamBlock::Intervention ? u : w;
}

Vector& ParamValues::block(ParamBlock b) {
  return b == ParamBlock::Theta ? theta : b == ParamBlock::Intervention ? u : w;
}

const Vector& MapVjp::block(ParamBlock b) const {
  return b == ParamBlock::Theta ? theta : b == ParamBlock::Intervention ? u : w;
}

ParamValues reference_params(const SscmSpec& spec) { return {spec.theta_ref, spec.u, spec.w}; }

ParamValues params_with_theta(const SscmSpec& spec, const Vector& theta) {
  return {theta, spec.u, spec.w};
}

Vector gather(const Vector& src, const std::vector<int>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = src[idx[i]];
  return out;
}

AssignmentBuilder::AssignmentBuilder(std::vector<int> parents, std::vector<int> theta_index,
                                     std::vector<int> u_index, std::vector<int> w_index)
    : builder_({static_cast<int>(parents.size()), static_cast<int>(theta_index.size()),
                static_cast<int>(u_index.size()), static_cast<int>(w_index.size())}) {
  a_.parents = std::move(parents);
  a_.theta_index = std::move(theta_index);
  a_.u_index = std::move(u_index);
  a_.w_index = std::move(w_index);
}

NodeId AssignmentBuilder::entry(AssignmentSlot slot, int k) {
  return builder_.slice(builder_.input(slot), k, 1);
}

NodeId AssignmentBuilder::parent(int k) { return entry(kParentSlot, k); }
NodeId AssignmentBuilder::theta(int k) { return entry(kThetaSlot, k); }
NodeId AssignmentBuilder::u(int k) { return entry(kInterventionSlot, k); }

Assignment AssignmentBuilder::finish(NodeId output) && {
  a_.graph = std::move(builder_).build(output);
  return std::move(a_);
}

std::vector<std::string> validate(const SscmSpec& spec) {
  std::vector<std::string> out;
  const int d = spec.dim();
  if (static_cast<int>(spec.names.size()) != d) {
    out.push_back(std::to_string(spec.names.size()) + " names for " + std::to_string(d) +
                  " assignments");
  }
  if (!spec.theta_names.empty() && static_cast<int>(spec.theta_names.size()) != spec.num_theta()) {
    out.push_back("theta_names has " + std::to_string(spec.theta_names.size()) +
                  " entries, theta has " + std::to_string(spec.num_theta()));
  }
  if (static_cast<int>(spec.theta_box.size()) != spec.num_theta()) {
    out.push_back("theta_box has " + std::to_string(spec.theta_box.size()) +
                  " intervals, theta has " + std::to_string(spec.num_theta()));
  } else {
    for (int i = 0; i < spec.num_theta(); ++i) {
      const Interval& b = spec.theta_box[i];
      if (!(b.lo <= b.hi)) {
        out.push_back("theta_box[" + std::to_string(i) + "] is empty");
      } else if (!(spec.theta_ref[i] >= b.lo && spec.theta_ref[i] <= b.hi)) {
        out.push_back("theta_ref[" + std::to_string(i) + "] = " +
                      std::to_string(spec.theta_ref[i]) + " lies outside its box");
      }
    }
  }
  if (spec.x_ref && spec.x_ref->size() != d) {
    out.push_back("x_ref has " + std::to_string(spec.x_ref->size()) + " entries");
  }

  const std::array<std::pair<ParamBlock, Eigen::Index>, 3> blocks{
      std::pair{ParamBlock::Theta, spec.theta_ref.size()},
      std::pair{ParamBlock::Intervention, spec.u.size()},
      std::pair{ParamBlock::Policy, spec.w.size()}};
  const char* block_names[] = {"theta", "u", "w"};

  for (int j = 0; j < d; ++j) {
    const Assignment& a = spec.assignments[j];
    const std::string where = "node " + std::to_string(j);
    std::set<int> seen;
    for (int p : a.parents) {
      if (p < 0 || p >= d) {
        out.push_back(where + ": parent " + std::to_string(p) + " out of range");
      } else if (p == j) {
        out.push_back(where + ": lists itself as a parent");
      } else if (!seen.insert(p).second) {
        out.push_back(where + ": parent " + std::to_string(p) + " listed twice");
      }
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      for (int idx : a.index(blocks[b].first)) {
        if (idx < 0 || idx >= blocks[b].second) {
          out.push_back(where + ": " + block_names[b] + " index " + std::to_string(idx) +
                        " out of range");
        }
      }
    }
    const ExprGraph& g = a.graph;
    if (g.empty()) {
      out.push_back(where + ": empty assignment graph");
      continue;
    }
    if (g.num_slots() != kNumAssignmentSlots) {
      out.push_back(where + ": assignment graph has " + std::to_string(g.num_slots()) +
                    " slots, expected " + std::to_string(kNumAssignmentSlots));
      continue;
    }
    const std::array<std::size_t, 4> arity{a.parents.size(), a.theta_index.size(),
                                           a.u_index.size(), a.w_index.size()};
    const char* slot_names[] = {"parent", "theta", "u", "w"};
    for (int s = 0; s < kNumAssignmentSlots; ++s) {
      if (g.slot_sizes()[s] != static_cast<int>(arity[s])) {
        out.push_back(where + ": " + slot_names[s] + " slot arity " +
                      std::to_string(g.slot_sizes()[s]) + " but " + std::to_string(arity[s]) +
                      " declared");
      }
    }
    if (g.output_size() != 1) {
      out.push_back(where + ": assignment output has " + std::to_string(g.output_size()) +
                    " entries");
    }
  }
  return out;
}

void require_valid(const SscmSpec& spec) {
  auto diags = validate(spec);
  if (diags.empty()) return;
  std::string msg = diags.front();
  for (std::size_t i = 1; i < diags.size(); ++i) msg += "; " + diags[i];
  throw Error(ErrorCode::InvalidSpec, msg);
}

void check_params(const SscmSpec& spec, const ParamValues& params) {
  auto check = [](const char* name, Eigen::Index got, Eigen::Index want) {
    if (got != want) {
      throw Error(ErrorCode::DimensionMismatch, std::string(name) + " has " + std::to_string(got) +
                                                    " entries, model expects " +
                                                    std::to_string(want));
    }
  };
  check("theta", params.theta.size(), spec.theta_ref.size());
  check("u", params.u.size(), spec.u.size());
  check("w", params.w.size(), spec.w.size());
}

namespace {

std::array<Vector, kNumAssignmentSlots> bindings_for(const Assignment& a, const ParamValues& p,
                                                     const Vector& x) {
  return {gather(x, a.parents), gather(p.theta, a.theta_index), gather(p.u, a.u_index),
          gather(p.w, a.w_index)};
}

void check_state(const SscmSpec& spec, const Vector& x) {
  if (x.size() != spec.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "state has " + std::to_string(x.size()) +
                                                  " entries, model has " +
                                                  std::to_string(spec.dim()) + " nodes");
  }
}

void scatter_add(Vector& dst, const std::vector<int>& idx, const Vector& src) {
  for (std::size_t i = 0; i < idx.size(); ++i) dst[idx[i]] += src[static_cast<Eigen::Index>(i)];
}

}  // namespace

Vector evaluate_map(const SscmSpec& spec, const ParamValues& params, const Vector& x) {
  check_state(spec, x);
  Vector out(spec.dim());
  for (int j = 0; j < spec.dim(); ++j) {
    const Assignment& a = spec.assignments[j];
    auto binds = bindings_for(a, params, x);
    out[j] = forward_eval(a.graph, binds)[0];
  }
  return out;
}

VectorMap assemble_map(const SscmSpec& spec, const ParamValues& params) {
  require_valid(spec);
  check_params(spec, params);
  return [&spec, params](const Vector& x) { return evaluate_map(spec, params, x); };
}

VectorMap assemble_map(const SscmSpec& spec, const Vector& theta) {
  return assemble_map(spec, params_with_theta(spec, theta));
}

MapVjp map_vjp(const SscmSpec& spec, const ParamValues& params, const Vector& x,
               const Vector& cotangent) {
  check_state(spec, x);
  if (cotangent.size() != spec.dim()) {
    throw Error(ErrorCode::ShapeMismatch, "cotangent has " + std::to_string(cotangent.size()) +
                                              " entries for " + std::to_string(spec.dim()) +
                                              " nodes");
  }
  MapVjp out{Vector::Zero(spec.dim()), Vector::Zero(params.theta.size()),
             Vector::Zero(params.u.size()), Vector::Zero(params.w.size())};
  Vector seed(1);
  for (int j = 0; j < spec.dim(); ++j) {
    if (cotangent[j] == 0.0) continue;
    const Assignment& a = spec.assignments[j];
    auto binds = bindings_for(a, params, x);
    seed[0] = cotangent[j];
    Gradient g = reverse_vjp(a.graph, binds, seed);
    scatter_add(out.x, a.parents, g.slots[kParentSlot]);
    scatter_add(out.theta, a.theta_index, g.slots[kThetaSlot]);
    scatter_add(out.u, a.u_index, g.slots[kInterventionSlot]);
    scatter_add(out.w, a.w_index, g.slots[kPolicySlot]);
  }
  return out;
}

Matrix map_jacobian_x(const SscmSpec& spec, const ParamValues& params, const Vector& x) {
  check_state(spec, x);
  const int d = spec.dim();
  Matrix jac = Matrix::Zero(d, d);
  const Vector one = Vector::Ones(1);
  for (int j = 0; j < d; ++j) {
    const Assignment& a = spec.assignments[j];
    if (a.parents.empty()) continue;
    auto binds = bindings_for(a, params, x);
    Gradient g = reverse_vjp(a.graph, binds, one);
    for (std::size_t k = 0; k < a.parents.size(); ++k) {
      jac(j, a.parents[k]) += g.slots[kParentSlot][static_cast<Eigen::Index>(k)];
    }
  }
  return jac;
}

Matrix map_jacobian_params(const SscmSpec& spec, const ParamValues& params, const Vector& x,
                           ParamBlock block) {
  check_state(spec, x);
  const int d = spec.dim();
  const int slot = block == ParamBlock::Theta          ? kThetaSlot
                   : block == ParamBlock::Intervention ? kInterventionSlot
                                                       : kPolicySlot;
  Matrix jac = Matrix::Zero(d, params.block(block).size());
  const Vector one = Vector::Ones(1);
  for (int j = 0; j < d; ++j) {
    const Assignment& a = spec.assignments[j];
    const auto& idx = a.index(block);
    if (idx.empty()) continue;
    auto binds = bindings_for(a, params, x);
    Gradient g = reverse_vjp(a.graph, binds, one);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      jac(j, idx[k]) += g.slots[slot][static_cast<Eigen::Index>(k)];
    }
  }
  return jac;
}

EquilibriumSolution solve_equilibrium(const SscmSpec& spec, const ParamValues& params,
                                      const SolverConfig& cfg) {
  VectorMap f = assemble_map(spec, params);
  EquilibriumSolution sol;
  sol.report = solve_fixed_point(f, Vector::Zero(spec.dim()), cfg);
  sol.x_star = sol.report.solution;
  sol.theta = params.theta;
  return sol;
}

EquilibriumSolution solve_equilibrium(const SscmSpec& spec, const Vector& theta,
                                      const SolverConfig& cfg) {
  return solve_equilibrium(spec, params_with_theta(spec, theta), cfg);
}

double condition_number(const Matrix& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double smin = s[s.size() - 1];
  if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
  return s[0] / smin;
}

DiffeomorphismReport check_local_diffeomorphism(const SscmSpec& spec, const Vector& x,
                                                const ParamValues& params, double cond_max,
                                                double tol) {
  require_valid(spec);
  check_params(spec, params);
  DiffeomorphismReport r;
  const Vector fx = evaluate_map(spec, params, x);
  r.relative_residual = convergence_metric(x, fx - x);
  r.is_solution = r.relative_residual <= tol;
  const Matrix j = Matrix::Identity(spec.dim(), spec.dim()) - map_jacobian_x(spec, params, x);
  r.condition_number = condition_number(j);
  r.jacobian_invertible = r.condition_number <= cond_max;
  return r;
}

DiffeomorphismReport check_local_diffeomorphism(const SscmSpec& spec, const Vector& x,
                                                const Vector& theta, double cond_max,
                                                double tol) {
  return check_local_diffeomorphism(spec, x, params_with_theta(spec, theta), cond_max, tol);
}

}  // namespace eqcausal
