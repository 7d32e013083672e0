#include "interventions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <set>
#include <utility>

#include "error.hpp"

namespace eqcausal {

namespace {

constexpr double kUnbounded = std::numeric_limits<double>::max();

void check_node(const SscmSpec& spec, int node, const char* what) {
  if (node < 0 || node >= spec.dim()) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(what) + " node " + std::to_string(node) + " out of range");
  }
}

std::vector<int> iota(int from, int count) {
  std::vector<int> out(count);
  for (int i = 0; i < count; ++i) out[i] = from + i;
  return out;
}

// Appends one theta entry with an unbounded box; returns its index.
int append_theta(SscmSpec& spec, double value, const std::string& name) {
  const int idx = spec.num_theta();
  spec.theta_ref.conservativeResize(idx + 1);
  spec.theta_ref[idx] = value;
  spec.theta_box.push_back({-kUnbounded, kUnbounded});
  if (!spec.theta_names.empty()) spec.theta_names.push_back(name);
  return idx;
}

Vector concat_vectors(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

// Rewrites every assignment except `j`'s so that parent j is read from theta[idx].
void reroute_children(SscmSpec& spec, int j, int idx) {
  for (int c = 0; c < spec.dim(); ++c) {
    if (c == j) continue;
    Assignment& a = spec.assignments[c];
    auto pos = std::find(a.parents.begin(), a.parents.end(), j);
    if (pos == a.parents.end()) continue;
    const int at = static_cast<int>(pos - a.parents.begin());

    AssignmentBuilder b([&] {
      std::vector<int> p = a.parents;
      p.erase(p.begin() + at);
      return p;
    }(), [&] {
      std::vector<int> t = a.theta_index;
      t.push_back(idx);
      return t;
    }(), a.u_index, a.w_index);
    GraphBuilder& g = b.graph();
    const int np = static_cast<int>(a.parents.size());
    const int nt = static_cast<int>(a.theta_index.size());
    NodeId new_parents = b.parents();
    NodeId new_theta = b.theta();
    std::vector<NodeId> pieces;
    if (at > 0) pieces.push_back(g.slice(new_parents, 0, at));
    pieces.push_back(g.slice(new_theta, nt, 1));
    if (at + 1 < np) pieces.push_back(g.slice(new_parents, at, np - at - 1));
    const std::array<NodeId, 4> slots{g.concat(pieces), g.slice(new_theta, 0, nt), b.u(), b.w()};
    NodeId out = g.inline_graph(a.graph, slots);
    a = std::move(b).finish(out);
  }
}

Assignment policy_assignment(const SscmSpec& spec, const InvariantInterventionSpec& plan,
                             std::vector<int> w_index) {
  const Assignment& old = spec.assignments[plan.auxiliary];
  const ExprGraph& g = plan.policy.graph;
  const std::array<std::size_t, 4> expected{old.parents.size(), plan.policy.theta_index.size(),
                                            plan.u_index.size(),
                                            static_cast<std::size_t>(plan.policy.w.size())};
  if (g.empty() || g.num_slots() != kNumAssignmentSlots) {
    throw Error(ErrorCode::PolicyArityMismatch, "policy graph must use the four assignment slots");
  }
  const char* names[] = {"parent", "theta", "intervention", "weight"};
  for (int s = 0; s < kNumAssignmentSlots; ++s) {
    if (g.slot_sizes()[s] != static_cast<int>(expected[s])) {
      throw Error(ErrorCode::PolicyArityMismatch,
                  std::string("policy ") + names[s] + " slot has " +
                      std::to_string(g.slot_sizes()[s]) + " entries, node " +
                      std::to_string(plan.auxiliary) + " provides " + std::to_string(expected[s]));
    }
  }
  if (g.output_size() != 1) throw Error(ErrorCode::PolicyArityMismatch, "policy output must be scalar");
  Assignment a;
  a.parents = old.parents;
  a.theta_index = plan.policy.theta_index;
  a.u_index = plan.u_index;
  a.w_index = std::move(w_index);
  a.graph = g;
  return a;
}

void check_triple(const SscmSpec& spec, const InvariantInterventionSpec& plan) {
  check_node(spec, plan.intervened, "intervened");
  check_node(spec, plan.invariant, "invariant");
  check_node(spec, plan.auxiliary, "auxiliary");
  if (plan.intervened == plan.invariant || plan.intervened == plan.auxiliary) {
    throw Error(ErrorCode::InvalidArgument,
                "the intervened node must differ from the invariant and auxiliary nodes");
  }
  for (int idx : plan.u_index) {
    if (idx < 0 || idx >= spec.u.size()) {
      throw Error(ErrorCode::InvalidArgument, "intervention index " + std::to_string(idx) +
                                                  " out of range");
    }
  }
}

}  // namespace

std::string_view to_string(LieGroup group) {
  return group == LieGroup::Multiplicative ? "multiplicative" : "additive";
}

LieGroup lie_group_from_string(std::string_view name) {
  if (name == "multiplicative") return LieGroup::Multiplicative;
  if (name == "additive") return LieGroup::Additive;
  throw Error(ErrorCode::InvalidArgument, "unknown group '" + std::string(name) + "'");
}

double group_identity_value(LieGroup group) {
  return group == LieGroup::Multiplicative ? 1.0 : 0.0;
}

void LieElement::validate() const {
  if (values.size() != static_cast<Eigen::Index>(targets.size())) {
    throw Error(ErrorCode::InvalidArgument, std::to_string(values.size()) + " values for " +
                                                std::to_string(targets.size()) + " targets");
  }
  std::set<int> seen(targets.begin(), targets.end());
  if (seen.size() != targets.size()) {
    throw Error(ErrorCode::InvalidArgument, "duplicate intervention target");
  }
  if (group == LieGroup::Multiplicative) {
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      if (!(values[i] > 0.0)) {
        throw Error(ErrorCode::DomainError, "multiplicative value " + std::to_string(values[i]) +
                                                " is not strictly positive");
      }
    }
  }
  if (!values.allFinite()) throw Error(ErrorCode::DomainError, "non-finite intervention value");
}

bool LieElement::is_identity() const {
  return (values.array() == group_identity_value(group)).all();
}

LieElement identity(LieGroup group, std::vector<int> targets) {
  LieElement g;
  g.group = group;
  g.values = Vector::Constant(static_cast<Eigen::Index>(targets.size()),
                              group_identity_value(group));
  g.targets = std::move(targets);
  return g;
}

LieElement compose(const LieElement& g1, const LieElement& g2) {
  if (g1.group != g2.group || g1.targets != g2.targets) {
    throw Error(ErrorCode::MismatchedTargets, "composed elements differ in group or targets");
  }
  g1.validate();
  g2.validate();
  LieElement out = g1;
  out.values = g1.group == LieGroup::Multiplicative ? Vector(g1.values.cwiseProduct(g2.values))
                                                    : Vector(g1.values + g2.values);
  return out;
}

LieElement inverse(const LieElement& g) {
  g.validate();
  LieElement out = g;
  out.values = g.group == LieGroup::Multiplicative ? Vector(g.values.cwiseInverse())
                                                   : Vector(-g.values);
  return out;
}

std::vector<int> appended_u_index(const SscmSpec& spec, const LieElement& g) {
  return iota(static_cast<int>(spec.u.size()), static_cast<int>(g.targets.size()));
}

SscmSpec apply(const SscmSpec& spec, const LieElement& g) {
  g.validate();
  for (int t : g.targets) check_node(spec, t, "intervention target");
  SscmSpec out = spec;
  const int base = static_cast<int>(spec.u.size());
  out.u = concat_vectors(spec.u, g.values);
  for (std::size_t t = 0; t < g.targets.size(); ++t) {
    const Assignment& old = spec.assignments[g.targets[t]];
    std::vector<int> u_index = old.u_index;
    u_index.push_back(base + static_cast<int>(t));
    const int n_old = static_cast<int>(old.u_index.size());
    AssignmentBuilder b(old.parents, old.theta_index, u_index, old.w_index);
    GraphBuilder& gb = b.graph();
    NodeId u = b.u();
    const std::array<NodeId, 4> slots{b.parents(), b.theta(), gb.slice(u, 0, n_old), b.w()};
    NodeId f = gb.inline_graph(old.graph, slots);
    NodeId value = gb.slice(u, n_old, 1);
    NodeId wrapped = g.group == LieGroup::Multiplicative ? gb.mul(value, f) : gb.add(f, value);
    out.assignments[g.targets[t]] = std::move(b).finish(wrapped);
  }
  return out;
}

SscmSpec clamp_node(const SscmSpec& spec, int k, double lambda) {
  check_node(spec, k, "clamped");
  SscmSpec out = spec;
  const int idx = append_theta(out, lambda, "lambda_" + std::to_string(k));
  AssignmentBuilder b({}, {idx});
  out.assignments[k] = std::move(b).finish(b.theta());
  return out;
}

double hard_intervention_derivative(const SscmSpec& spec, int j, int k, const ParamValues& params,
                                    const SolverConfig& cfg, double cond_max) {
  check_node(spec, j, "target");
  check_node(spec, k, "clamped");
  EquilibriumSolution ref = solve_equilibrium(spec, params, cfg);
  if (!ref.report.converged) {
    throw Error(ErrorCode::ClampedModelSingular, "reference equilibrium did not converge");
  }
  const double lambda = ref.x_star[k];
  SscmSpec clamped = clamp_node(spec, k, lambda);
  ParamValues p = params;
  p.theta = concat_vectors(params.theta, Vector::Constant(1, lambda));
  try {
    EquilibriumSolution sol = solve_equilibrium(clamped, p, cfg);
    if (!sol.report.converged) {
      throw Error(ErrorCode::ClampedModelSingular, "clamped model did not converge");
    }
    const int d = spec.dim();
    const double cond = condition_number(Matrix::Identity(d, d) -
                                         map_jacobian_x(clamped, p, sol.x_star));
    if (!(cond <= cond_max)) {
      throw Error(ErrorCode::ClampedModelSingular,
                  "clamped Jacobian condition number " + std::to_string(cond));
    }
    Vector e = Vector::Zero(d);
    e[j] = 1.0;
    ImplicitGradient g = implicit_vjp(clamped, p, sol.x_star, e, cfg);
    if (!g.adjoint_report.converged) {
      throw Error(ErrorCode::ClampedModelSingular, "clamped adjoint did not converge");
    }
    return g.grad_theta[clamped.num_theta() - 1];
  } catch (const Error& err) {
    if (err.code() == ErrorCode::ClampedModelSingular) throw;
    throw Error(ErrorCode::ClampedModelSingular, err.what());
  }
}

InvarianceReport check_invariance_conditions(const SscmSpec& spec, int i, int j, int k,
                                             const ParamValues& params, double cond_max,
                                             std::vector<int> free_theta,
                                             const SolverConfig& cfg) {
  check_node(spec, i, "intervened");
  check_node(spec, j, "invariant");
  check_node(spec, k, "auxiliary");
  InvarianceReport r;
  r.triple_valid = i != j && i != k;
  if (free_theta.empty()) free_theta = iota(0, spec.num_theta());

  EquilibriumSolution sol = solve_equilibrium(spec, params, cfg);
  const Vector& x = sol.x_star;
  DiffeomorphismReport diffeo = check_local_diffeomorphism(spec, x, params, cond_max, cfg.tol);
  r.diffeomorphic = diffeo.is_solution && diffeo.jacobian_invertible;
  r.reference_condition = diffeo.condition_number;

  const int d = spec.dim();
  const Matrix full = Matrix::Identity(d, d) - map_jacobian_x(spec, params, x);
  std::vector<int> keep;
  for (int n = 0; n < d; ++n) {
    if (n != j) keep.push_back(n);
  }
  Matrix reduced(keep.size(), keep.size());
  for (std::size_t a = 0; a < keep.size(); ++a)
    for (std::size_t b = 0; b < keep.size(); ++b) reduced(a, b) = full(keep[a], keep[b]);
  r.reduced_condition = condition_number(reduced);
  r.reduced_jacobian_invertible = r.reduced_condition <= cond_max;

  const auto& pa = spec.assignments[k].parents;
  r.pa_rows = static_cast<int>(pa.size());
  r.free_cols = static_cast<int>(free_theta.size());
  if (r.diffeomorphic && sol.report.converged && !pa.empty() && !free_theta.empty()) {
    const Matrix jt = jacobian_wrt_params(spec, params, x, cfg, ParamBlock::Theta);
    Matrix sub(pa.size(), free_theta.size());
    for (std::size_t a = 0; a < pa.size(); ++a)
      for (std::size_t b = 0; b < free_theta.size(); ++b) sub(a, b) = jt(pa[a], free_theta[b]);
    Eigen::JacobiSVD<Matrix> svd(sub);
    r.sigma_min = svd.singularValues().minCoeff();
    r.full_column_rank = r.pa_rows >= r.free_cols && r.sigma_min > kRankThreshold;
  }

  try {
    r.derivative = hard_intervention_derivative(spec, j, k, params, cfg, cond_max);
    r.nonzero_derivative = std::abs(r.derivative) > kDerivativeThreshold;
  } catch (const Error&) {
    r.nonzero_derivative = false;
  }
  return r;
}

PolicySpec mlp_policy(const SscmSpec& lie_spec, int k, const std::vector<int>& u_index,
                      LieGroup group, const MlpSpec& mlp_in, double shift) {
  check_node(lie_spec, k, "auxiliary");
  const Assignment& fk = lie_spec.assignments[k];
  if (!fk.w_index.empty()) {
    throw Error(ErrorCode::InvalidArgument, "auxiliary assignment already reads policy weights");
  }
  // positions of f_k's own u entries inside the main intervention
  std::vector<int> fk_u;
  for (int idx : fk.u_index) {
    auto it = std::find(u_index.begin(), u_index.end(), idx);
    if (it == u_index.end()) {
      throw Error(ErrorCode::InvalidArgument,
                  "auxiliary assignment reads intervention entry " + std::to_string(idx) +
                      " outside the main intervention");
    }
    fk_u.push_back(static_cast<int>(it - u_index.begin()));
  }
  const int np = static_cast<int>(fk.parents.size());
  const int nu = static_cast<int>(u_index.size());
  MlpSpec mlp = mlp_in;
  mlp.input_dim = np + nu;
  mlp.output_dim = 1;

  PolicySpec out;
  out.mlp = mlp;
  out.has_mlp = true;
  out.shift = shift;
  out.theta_index = fk.theta_index;
  out.w = mlp_init(mlp);

  AssignmentBuilder b(fk.parents, fk.theta_index, u_index, iota(0, mlp.param_count()));
  GraphBuilder& g = b.graph();
  NodeId parents = b.parents();
  NodeId u = b.u();
  const std::array<NodeId, 4> slots{parents, b.theta(), g.gather(u, fk_u), b.w()};
  // f_k reads no weights; its w slot is empty, fed with an empty gather
  std::array<NodeId, 4> fk_slots = slots;
  fk_slots[kPolicySlot] = g.gather(b.w(), {});
  NodeId f = g.inline_graph(fk.graph, fk_slots);
  NodeId u_feature = group == LieGroup::Multiplicative ? g.log(u) : u;
  std::vector<NodeId> features;
  if (np > 0) features.push_back(parents);
  if (nu > 0) features.push_back(u_feature);
  if (features.empty()) throw Error(ErrorCode::InvalidArgument, "policy has no inputs");
  NodeId net = emit_mlp(g, mlp, b.w(), 0, g.concat(features));
  NodeId out_node;
  if (shift == 0.0) {
    out_node = g.mul(f, g.exp(net));
  } else {
    out_node = g.sub(g.mul(g.add(f, g.scalar(shift)), g.exp(net)), g.scalar(shift));
  }
  out.graph = std::move(b).finish(out_node).graph;
  return out;
}

ParamValues TwinModel::unintervened_params(const Vector& theta) const {
  ParamValues p{theta, unintervened.u, unintervened.w};
  return p;
}

ParamValues TwinModel::intervened_params(const Vector& theta, const Vector& u,
                                         const Vector& policy_w, double x_j_ref) const {
  ParamValues p{concat_vectors(theta, Vector::Constant(1, x_j_ref)), intervened.u, intervened.w};
  for (std::size_t a = 0; a < plan.u_index.size(); ++a) p.u[plan.u_index[a]] = u[a];
  for (std::size_t a = 0; a < policy_w_index.size(); ++a) p.w[policy_w_index[a]] = policy_w[a];
  return p;
}

ParamValues TwinModel::deployed_params(const Vector& theta, const Vector& u,
                                       const Vector& policy_w) const {
  ParamValues p{theta, deployed.u, deployed.w};
  for (std::size_t a = 0; a < plan.u_index.size(); ++a) p.u[plan.u_index[a]] = u[a];
  for (std::size_t a = 0; a < policy_w_index.size(); ++a) p.w[policy_w_index[a]] = policy_w[a];
  return p;
}

SscmSpec deploy_policies(const SscmSpec& lie_spec,
                         const std::vector<InvariantInterventionSpec>& plans) {
  require_valid(lie_spec);
  SscmSpec out = lie_spec;
  std::set<int> replaced;
  for (const auto& plan : plans) {
    check_triple(lie_spec, plan);
    if (!replaced.insert(plan.auxiliary).second) {
      throw Error(ErrorCode::InvalidArgument, "two policies for node " +
                                                  std::to_string(plan.auxiliary));
    }
    const int base = static_cast<int>(out.w.size());
    out.assignments[plan.auxiliary] =
        policy_assignment(lie_spec, plan, iota(base, static_cast<int>(plan.policy.w.size())));
    out.w = concat_vectors(out.w, plan.policy.w);
  }
  require_valid(out);
  return out;
}

TwinModel build_invariant_model(const SscmSpec& lie_spec, const InvariantInterventionSpec& plan) {
  require_valid(lie_spec);
  check_triple(lie_spec, plan);
  TwinModel twin;
  twin.plan = plan;

  twin.unintervened = lie_spec;
  for (int idx : plan.u_index) twin.unintervened.u[idx] = group_identity_value(plan.group);

  twin.deployed = deploy_policies(lie_spec, {plan});
  twin.policy_w_index = iota(static_cast<int>(lie_spec.w.size()),
                             static_cast<int>(plan.policy.w.size()));

  EquilibriumSolution ref = solve_equilibrium(twin.unintervened, twin.unintervened.theta_ref,
                                              SolverConfig{});
  if (!ref.report.converged) {
    throw Error(ErrorCode::InvalidSpec, "unintervened model does not converge at theta_ref");
  }
  twin.intervened = twin.deployed;
  twin.reroute_index = append_theta(twin.intervened, ref.x_star[plan.invariant],
                                    "ref_" + std::to_string(plan.invariant));
  reroute_children(twin.intervened, plan.invariant, twin.reroute_index);
  require_valid(twin.intervened);
  return twin;
}

void validate_partition(const SscmSpec& spec, const CompartmentPlan& plan) {
  const int d = spec.dim();
  std::vector<int> owner(d, -1);
  for (std::size_t m = 0; m < plan.partition.size(); ++m) {
    for (int n : plan.partition[m]) {
      if (n < 0 || n >= d) {
        throw Error(ErrorCode::InvalidPartition, "node " + std::to_string(n) + " out of range");
      }
      if (owner[n] != -1) {
        throw Error(ErrorCode::InvalidPartition, "node " + std::to_string(n) +
                                                     " belongs to two compartments");
      }
      owner[n] = static_cast<int>(m);
    }
  }
  for (int n = 0; n < d; ++n) {
    if (owner[n] == -1) {
      throw Error(ErrorCode::InvalidPartition, "node " + std::to_string(n) + " is in no compartment");
    }
  }
  if (plan.interventions.size() != plan.partition.size()) {
    throw Error(ErrorCode::InvalidPartition, "one invariant intervention per compartment required");
  }
  for (std::size_t m = 0; m < plan.interventions.size(); ++m) {
    const auto& iv = plan.interventions[m];
    for (int n : {iv.intervened, iv.invariant, iv.auxiliary}) {
      if (n < 0 || n >= d || owner[n] != static_cast<int>(m)) {
        throw Error(ErrorCode::InvalidPartition, "compartment " + std::to_string(m) +
                                                     " triple leaves its compartment");
      }
    }
  }
}

CompartmentReport check_compartmentalization(const SscmSpec& deployed, const CompartmentPlan& plan,
                                             const CompartmentSamples& samples,
                                             const SolverConfig& cfg) {
  validate_partition(deployed, plan);
  const int nc = static_cast<int>(plan.partition.size());
  if (static_cast<int>(samples.grids.size()) != nc) {
    throw Error(ErrorCode::InvalidArgument, "one intervention grid per compartment required");
  }
  CompartmentReport r;
  std::vector<int> owner(deployed.dim());
  for (int m = 0; m < nc; ++m)
    for (int n : plan.partition[m]) owner[n] = m;
  for (int m = 0; m < nc; ++m) {
    const int inv = plan.interventions[m].invariant;
    for (int c = 0; c < deployed.dim(); ++c) {
      for (int p : deployed.assignments[c].parents) {
        if (owner[p] == m && owner[c] != m && p != inv) {
          r.structural_violations.push_back("node " + std::to_string(p) + " of compartment " +
                                            std::to_string(m) + " feeds node " +
                                            std::to_string(c) + " but is not its invariant node");
        }
      }
    }
  }
  r.structural_ok = r.structural_violations.empty();
  r.cross_deviation.assign(nc, 0.0);
  r.own_variation.assign(nc, std::numeric_limits<double>::infinity());

  auto solve_with = [&](const Vector& theta, const std::vector<Vector>& choice) -> std::optional<Vector> {
    ParamValues p = reference_params(deployed);
    p.theta = theta;
    for (int m = 0; m < nc; ++m) {
      const auto& idx = plan.interventions[m].u_index;
      for (std::size_t a = 0; a < idx.size(); ++a) p.u[idx[a]] = choice[m][a];
    }
    try {
      EquilibriumSolution s = solve_equilibrium(deployed, p, cfg);
      if (s.report.converged) return s.x_star;
    } catch (const Error&) {
    }
    ++r.failed_solves;
    return std::nullopt;
  };

  for (const Vector& theta : samples.thetas) {
    for (int m = 0; m < nc; ++m) {
      for (const Vector& own : samples.grids[m]) {
        // every combination of the other compartments' values
        Vector mins = Vector::Constant(deployed.dim(), std::numeric_limits<double>::infinity());
        Vector maxs = -mins;
        std::vector<Vector> choice(nc);
        std::function<void(int)> sweep = [&](int c) {
          if (c == nc) {
            if (auto x = solve_with(theta, choice)) {
              mins = mins.cwiseMin(*x);
              maxs = maxs.cwiseMax(*x);
            }
            return;
          }
          if (c == m) {
            choice[c] = own;
            sweep(c + 1);
            return;
          }
          for (const Vector& v : samples.grids[c]) {
            choice[c] = v;
            sweep(c + 1);
          }
        };
        sweep(0);
        for (int n : plan.partition[m]) {
          if (!std::isfinite(mins[n])) continue;
          const double scale = std::max(std::abs(0.5 * (mins[n] + maxs[n])), 1e-12);
          r.cross_deviation[m] = std::max(r.cross_deviation[m], (maxs[n] - mins[n]) / scale);
        }
      }

      // own response with the other compartments at identity
      const int target = plan.interventions[m].intervened;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      std::vector<Vector> choice(nc);
      for (int c = 0; c < nc; ++c) {
        choice[c] = Vector::Constant(static_cast<Eigen::Index>(plan.interventions[c].u_index.size()),
                                     group_identity_value(plan.interventions[c].group));
      }
      for (const Vector& own : samples.grids[m]) {
        choice[m] = own;
        if (auto x = solve_with(theta, choice)) {
          lo = std::min(lo, (*x)[target]);
          hi = std::max(hi, (*x)[target]);
        }
      }
      if (std::isfinite(lo)) {
        const double scale = std::max(std::abs(0.5 * (lo + hi)), 1e-12);
        r.own_variation[m] = std::min(r.own_variation[m], (hi - lo) / scale);
      }
    }
  }
  for (double c : r.cross_deviation) r.max_cross_deviation = std::max(r.max_cross_deviation, c);
  return r;
}

}  // namespace eqcausal
