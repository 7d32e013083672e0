#include "modelzoo.hpp"

#include <algorithm>
#include <optional>
#include <cmath>
#include <map>
#include <random>
#include <string>

#include "error.hpp"

namespace eqcausal {

void IoTable::validate() const {
  const int d = dim();
  if (A.cols() != d) throw Error(ErrorCode::DimensionMismatch, "A must be square");
  if (y.size() != d) {
    throw Error(ErrorCode::DimensionMismatch, "y has " + std::to_string(y.size()) +
                                                  " entries for " + std::to_string(d) + " sectors");
  }
  if (R.size() > 0 && R.cols() != d) {
    throw Error(ErrorCode::DimensionMismatch, "R has " + std::to_string(R.cols()) +
                                                  " columns for " + std::to_string(d) + " sectors");
  }
  if (!sectors.empty() && static_cast<int>(sectors.size()) != d) {
    throw Error(ErrorCode::DimensionMismatch, "sector names do not match A");
  }
  if (!impacts.empty() && static_cast<Eigen::Index>(impacts.size()) != R.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "impact names do not match R");
  }
  auto nonneg = [](const Matrix& m, const char* name) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        if (!(m(r, c) >= 0.0)) {
          throw Error(ErrorCode::NegativeEntry, std::string(name) + "[" + std::to_string(r) + "," +
                                                    std::to_string(c) + "] = " +
                                                    std::to_string(m(r, c)));
        }
  };
  nonneg(A, "A");
  nonneg(R, "R");
  nonneg(y, "y");
}

int IoTable::impact_row(const std::string& name) const {
  auto it = std::find(impacts.begin(), impacts.end(), name);
  return it == impacts.end() ? -1 : static_cast<int>(it - impacts.begin());
}

Vector leontief_closed_form(const Matrix& A, const Vector& y) {
  if (A.rows() != A.cols() || A.rows() != y.size()) {
    throw Error(ErrorCode::DimensionMismatch, "A and y disagree in size");
  }
  const Matrix m = Matrix::Identity(A.rows(), A.cols()) - A;
  Eigen::FullPivLU<Matrix> lu(m);
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularMatrix, "I - A is singular");
  return lu.solve(y);
}

Vector impacts(const Matrix& R, const Vector& x) {
  if (R.cols() != x.size()) {
    throw Error(ErrorCode::DimensionMismatch, "R has " + std::to_string(R.cols()) +
                                                  " columns, x has " + std::to_string(x.size()));
  }
  return R * x;
}

Vector employment_distribution(const Matrix& R, int row, const Vector& x) {
  if (row < 0 || row >= R.rows()) throw Error(ErrorCode::DimensionMismatch, "no such impact row");
  if (R.cols() != x.size()) throw Error(ErrorCode::DimensionMismatch, "R and x disagree");
  return R.row(row).transpose().cwiseProduct(x);
}

Vector leading_principal_minors(const Matrix& A) {
  const Eigen::Index n = A.rows();
  Matrix m = Matrix::Identity(n, n) - A;
  Vector minors(n);
  double det = 1.0;
  // Doolittle elimination without pivoting; the k-th pivot is minor_k / minor_{k-1}.
  for (Eigen::Index k = 0; k < n; ++k) {
    const double pivot = m(k, k);
    det *= pivot;
    minors[k] = det;
    if (pivot == 0.0) {
      for (Eigen::Index r = k + 1; r < n; ++r) minors[r] = 0.0;
      break;
    }
    for (Eigen::Index r = k + 1; r < n; ++r) {
      const double f = m(r, k) / pivot;
      m.row(r).tail(n - k) -= f * m.row(k).tail(n - k);
    }
  }
  return minors;
}

bool hawkins_simon_check(const Matrix& A) {
  if (A.rows() != A.cols()) return false;
  const Vector minors = leading_principal_minors(A);
  return (minors.array() > 0.0).all();
}

namespace {

// One linear term: coef * x_parent, coef constant, from theta, and optionally
// multiplied by an intervention entry.
struct Term {
  int parent = -1;
  double coef = 0.0;
  int theta = -1;
  int u = -1;
  double shift = 0.0;  // added to the parent value before weighting
};

// scale * (sum terms + additive) + output_shift, where additive is a parent
// node, a theta entry or a constant.
struct LinearRow {
  std::vector<Term> terms;
  int additive_parent = -1;
  int additive_theta = -1;
  double constant = 0.0;
  double scale = 1.0;
  double output_shift = 0.0;
};

Assignment build_linear(const LinearRow& row) {
  std::vector<int> parents;
  std::vector<int> theta;
  std::vector<int> u;
  auto slot_of = [](std::vector<int>& list, int idx) {
    auto it = std::find(list.begin(), list.end(), idx);
    if (it != list.end()) return static_cast<int>(it - list.begin());
    list.push_back(idx);
    return static_cast<int>(list.size() - 1);
  };
  for (const Term& t : row.terms) {
    parents.push_back(t.parent);
    if (t.theta >= 0) slot_of(theta, t.theta);
    if (t.u >= 0) slot_of(u, t.u);
  }
  if (row.additive_parent >= 0) parents.push_back(row.additive_parent);
  if (row.additive_theta >= 0) slot_of(theta, row.additive_theta);

  AssignmentBuilder b(parents, theta, u);
  GraphBuilder& g = b.graph();
  const int nt = static_cast<int>(row.terms.size());
  NodeId all_parents = b.parents();
  std::optional<NodeId> sum;
  auto add_to = [&](NodeId v) { sum = sum ? g.add(*sum, v) : v; };

  if (nt > 0) {
    bool all_constant = true;
    for (const Term& t : row.terms) all_constant &= t.theta < 0 && t.u < 0;
    NodeId coefs;
    if (all_constant) {
      Vector c(nt);
      for (int i = 0; i < nt; ++i) c[i] = row.terms[i].coef;
      coefs = g.constant(c);
    } else {
      std::vector<NodeId> pieces;
      for (const Term& t : row.terms) {
        NodeId c = t.theta >= 0 ? b.theta(slot_of(theta, t.theta)) : g.scalar(t.coef);
        if (t.u >= 0) c = g.mul(c, b.u(slot_of(u, t.u)));
        pieces.push_back(c);
      }
      coefs = g.concat(pieces);
    }
    NodeId xs = row.additive_parent >= 0 ? g.slice(all_parents, 0, nt) : all_parents;
    Vector shift(nt);
    for (int i = 0; i < nt; ++i) shift[i] = row.terms[i].shift;
    if (!shift.isZero(0.0)) xs = g.add(xs, g.constant(shift));
    add_to(g.dot(coefs, xs));
  }
  if (row.additive_parent >= 0) add_to(b.parent(nt));
  if (row.additive_theta >= 0) add_to(b.theta(slot_of(theta, row.additive_theta)));
  if (row.constant != 0.0 || !sum) add_to(g.scalar(row.constant));
  NodeId out = row.scale == 1.0 ? *sum : g.mul(*sum, g.scalar(row.scale));
  if (row.output_shift != 0.0) out = g.add(out, g.scalar(row.output_shift));
  return std::move(b).finish(out);
}

double fold_scale(double diag) {
  if (diag == 0.0) return 1.0;
  if (!(diag < 1.0)) {
    throw Error(ErrorCode::InvalidSpec, "diagonal coefficient " + std::to_string(diag) +
                                            " >= 1 cannot be folded");
  }
  return 1.0 / (1.0 - diag);
}

std::string sector_name(const IoTable& t, int k) {
  return t.sectors.empty() ? "s" + std::to_string(k) : t.sectors[k];
}

std::map<std::pair<int, int>, int> free_map(const std::vector<std::pair<int, int>>& free, int base,
                                            int d) {
  std::map<std::pair<int, int>, int> out;
  for (std::size_t i = 0; i < free.size(); ++i) {
    const auto [r, c] = free[i];
    if (r < 0 || r >= d || c < 0 || c >= d) {
      throw Error(ErrorCode::InvalidArgument, "free coefficient out of range");
    }
    if (r == c) throw Error(ErrorCode::InvalidArgument, "diagonal coefficients cannot be free");
    if (!out.emplace(free[i], base + static_cast<int>(i)).second) {
      throw Error(ErrorCode::InvalidArgument, "free coefficient listed twice");
    }
  }
  return out;
}

}  // namespace

SscmSpec leontief_model(const IoTable& table, const LeontiefOptions& options,
                        std::vector<std::string>* warnings) {
  table.validate();
  const int d = table.dim();
  if (warnings && !hawkins_simon_check(table.A)) {
    warnings->push_back("Hawkins-Simon condition fails; equilibrium may not exist");
  }
  const auto free = free_map(options.free_coefficients, d, d);

  SscmSpec spec;
  const int nf = static_cast<int>(free.size());
  spec.theta_ref.resize(d + nf);
  for (int k = 0; k < d; ++k) {
    spec.names.push_back("x_" + sector_name(table, k));
    spec.theta_names.push_back("y_" + sector_name(table, k));
    spec.theta_ref[k] = table.y[k];
    spec.theta_box.push_back({table.y[k] * (1.0 - options.demand_box),
                              table.y[k] * (1.0 + options.demand_box)});
  }
  for (const auto& [rc, idx] : free) {
    const double a = table.A(rc.first, rc.second);
    spec.theta_ref[idx] = a;
    spec.theta_box.push_back({a * (1.0 - options.demand_box), a * (1.0 + options.demand_box)});
    spec.theta_names.push_back("A_" + std::to_string(rc.first) + "_" + std::to_string(rc.second));
  }
  // map iteration order differs from index order; sort boxes and names by index
  {
    std::vector<std::pair<int, std::pair<Interval, std::string>>> extra;
    int i = 0;
    for (const auto& [rc, idx] : free) {
      extra.push_back({idx, {spec.theta_box[d + i], spec.theta_names[d + i]}});
      ++i;
    }
    std::sort(extra.begin(), extra.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t e = 0; e < extra.size(); ++e) {
      spec.theta_box[d + e] = extra[e].second.first;
      spec.theta_names[d + e] = extra[e].second.second;
    }
  }

  for (int k = 0; k < d; ++k) {
    LinearRow row;
    for (int j = 0; j < d; ++j) {
      if (j == k) continue;
      auto it = free.find({k, j});
      if (it != free.end()) {
        row.terms.push_back({j, 0.0, it->second, -1});
      } else if (table.A(k, j) != 0.0) {
        row.terms.push_back({j, table.A(k, j), -1, -1});
      }
    }
    row.additive_theta = k;
    row.scale = fold_scale(table.A(k, k));
    spec.assignments.push_back(build_linear(row));
  }
  require_valid(spec);
  return spec;
}

Vector reference_prices(const Matrix& A, int energy, double beta_e) {
  const Eigen::Index d = A.rows();
  if (energy < 0 || energy >= d) throw Error(ErrorCode::InvalidArgument, "energy sector out of range");
  Vector rhs = Vector::Zero(d);
  rhs[energy] = beta_e;
  return leontief_closed_form(A.transpose(), rhs);
}

SscmSpec price_rebound_model(const IoTable& table, const PriceReboundOptions& o) {
  table.validate();
  const int d = table.dim();
  const int e = o.energy;
  const int j = o.efficiency_target;
  if (e < 0 || e >= d || j < 0 || j >= d || e == j) {
    throw Error(ErrorCode::InvalidArgument, "energy and target sectors must be distinct sectors");
  }
  if (!(o.beta_e > 0.0)) {
    throw Error(ErrorCode::DomainError, "energy price coefficient must be > 0, got " +
                                            std::to_string(o.beta_e));
  }
  const DemandCurve& dc = o.curves;
  if (dc.y0.size() != d || dc.epsilon.size() != d) {
    throw Error(ErrorCode::DimensionMismatch, "demand curves need y0 and elasticity per sector");
  }
  const Vector p0 = dc.p0.size() == d ? dc.p0 : reference_prices(table.A, e, o.beta_e);
  for (int k = 0; k < d; ++k) {
    if (!(p0[k] > 0.0)) {
      throw Error(ErrorCode::DomainError, "reference price of sector " + std::to_string(k) +
                                              " is not positive");
    }
    if (!(dc.y0[k] >= 0.0) || !(dc.epsilon[k] >= 0.0)) {
      throw Error(ErrorCode::DomainError, "demand curves need y0 >= 0 and elasticity >= 0");
    }
  }
  const auto free = free_map(o.free_coefficients, 0, d);

  SscmSpec spec;
  spec.theta_ref.resize(static_cast<Eigen::Index>(free.size()));
  spec.theta_box.resize(free.size());
  spec.theta_names.resize(free.size());
  for (const auto& [rc, idx] : free) {
    const double a = table.A(rc.first, rc.second);
    spec.theta_ref[idx] = a;
    spec.theta_box[idx] = {a * (1.0 - o.coefficient_box), a * (1.0 + o.coefficient_box)};
    spec.theta_names[idx] = "A_" + std::to_string(rc.first) + "_" + std::to_string(rc.second);
  }
  spec.u = Vector::Ones(1);

  auto coefficient = [&](int r, int c, int parent, double shift, LinearRow& row) {
    auto it = free.find({r, c});
    const int u = (r == e && c == j) ? 0 : -1;
    if (it != free.end()) {
      row.terms.push_back({parent, 0.0, it->second, u, shift});
    } else if (table.A(r, c) != 0.0) {
      row.terms.push_back({parent, table.A(r, c), -1, u, shift});
    }
  };

  for (int k = 0; k < d; ++k) spec.names.push_back("x_" + sector_name(table, k));
  for (int k = 0; k < d; ++k) spec.names.push_back("dp_" + sector_name(table, k));
  for (int k = 0; k < d; ++k) spec.names.push_back("y_" + sector_name(table, k));

  for (int k = 0; k < d; ++k) {
    LinearRow row;
    for (int c = 0; c < d; ++c) {
      if (c != k) coefficient(k, c, rebound_x(d, c), 0.0, row);
    }
    row.additive_parent = rebound_y(d, k);
    row.scale = fold_scale(table.A(k, k));
    spec.assignments.push_back(build_linear(row));
  }
  for (int k = 0; k < d; ++k) {
    LinearRow row;
    for (int r = 0; r < d; ++r) {
      if (r != k) coefficient(r, k, rebound_p(d, r), p0[r], row);
    }
    row.constant = k == e ? o.beta_e : 0.0;
    row.scale = fold_scale(table.A(k, k));
    row.output_shift = -p0[k];
    spec.assignments.push_back(build_linear(row));
  }
  for (int k = 0; k < d; ++k) {
    AssignmentBuilder b({rebound_p(d, k)});
    GraphBuilder& g = b.graph();
    NodeId ratio = g.add(g.mul(b.parents(), g.scalar(1.0 / p0[k])), g.scalar(1.0));
    NodeId demand = g.mul(g.scalar(dc.y0[k]), g.pow(ratio, -dc.epsilon[k]));
    spec.assignments.push_back(std::move(b).finish(demand));
  }
  require_valid(spec);
  return spec;
}

double rebound_energy_demand(const Vector& x, int d, int energy) {
  if (x.size() != 3 * d || energy < 0 || energy >= d) {
    throw Error(ErrorCode::DimensionMismatch, "not a rebound-model state");
  }
  return x[rebound_x(d, energy)] - x[rebound_y(d, energy)];
}

Vector rebound_prices(const Vector& x, const Vector& p0) {
  const Eigen::Index d = p0.size();
  if (x.size() != 3 * d) throw Error(ErrorCode::DimensionMismatch, "not a rebound-model state");
  return x.segment(d, d) + p0;
}

ReboundInstance rebound_3sector(double target_elasticity) {
  ReboundInstance inst;
  IoTable& t = inst.table;
  t.A.resize(3, 3);
  t.A << 0.00, 0.30, 0.10,
         0.05, 0.00, 0.10,
         0.10, 0.10, 0.00;
  t.y = Vector::Ones(3);
  t.R = Matrix::Identity(3, 3);
  t.sectors = {"energy", "target", "other"};
  t.impacts = {"energy_use", "target_use", "other_use"};
  PriceReboundOptions& o = inst.options;
  o.energy = 0;
  o.beta_e = 1.0;
  o.efficiency_target = 1;
  o.curves.y0 = Vector::Ones(3);
  o.curves.p0 = reference_prices(t.A, o.energy, o.beta_e);
  o.curves.epsilon.resize(3);
  o.curves.epsilon << 0.2, target_elasticity, 0.5;
  o.free_coefficients = {{0, 2}};
  inst.spec = price_rebound_model(t, o);
  inst.intervened = rebound_x(3, 0);
  inst.invariant = rebound_y(3, 1);
  inst.auxiliary = rebound_p(3, 1);
  return inst;
}

SscmSpec motivating_example(double tau, double alpha, double beta, double gamma, bool builtin_u) {
  if (std::abs(1.0 - beta * gamma) < 1e-12) {
    throw Error(ErrorCode::SingularParameterization, "beta * gamma = 1 has no unique equilibrium");
  }
  SscmSpec spec;
  spec.names = {"x", "y", "z"};
  spec.theta_names = {"tau", "alpha", "beta", "gamma"};
  spec.theta_ref.resize(4);
  spec.theta_ref << tau, alpha, beta, gamma;
  const Interval box[] = {{0.5, 1.5}, {0.3, 0.7}, {0.1, 0.5}, {0.2, 0.6}};
  for (int i = 0; i < 4; ++i) {
    spec.theta_box.push_back({std::min(box[i].lo, spec.theta_ref[i]),
                              std::max(box[i].hi, spec.theta_ref[i])});
  }
  if (builtin_u) spec.u = Vector::Ones(2);

  {
    AssignmentBuilder b({}, {0});
    spec.assignments.push_back(std::move(b).finish(b.theta()));
  }
  {
    AssignmentBuilder b({0, 2}, {1, 2}, builtin_u ? std::vector<int>{0} : std::vector<int>{});
    GraphBuilder& g = b.graph();
    NodeId f = g.dot(b.theta(), b.parents());
    if (builtin_u) f = g.mul(b.u(0), f);
    spec.assignments.push_back(std::move(b).finish(f));
  }
  {
    AssignmentBuilder b({1}, {3}, builtin_u ? std::vector<int>{1} : std::vector<int>{});
    GraphBuilder& g = b.graph();
    NodeId f = g.mul(b.theta(), b.parents());
    if (builtin_u) f = g.mul(b.u(0), f);
    spec.assignments.push_back(std::move(b).finish(f));
  }
  require_valid(spec);
  return spec;
}

Vector motivating_closed_form(const Vector& theta, double u_y, double u_z) {
  if (theta.size() != 4) throw Error(ErrorCode::DimensionMismatch, "theta = (tau, alpha, beta, gamma)");
  const double tau = theta[0], alpha = theta[1], beta = theta[2], gamma = theta[3];
  const double denom = 1.0 - u_y * u_z * beta * gamma;
  if (std::abs(denom) < 1e-12) {
    throw Error(ErrorCode::SingularParameterization, "u_y u_z beta gamma = 1");
  }
  Vector x(3);
  x << tau, u_y * alpha * tau / denom, u_y * u_z * gamma * alpha * tau / denom;
  return x;
}

PolicySpec motivating_invariant_policy() {
  AssignmentBuilder b({1}, {3}, {0});
  GraphBuilder& g = b.graph();
  NodeId out = g.mul(g.mul(b.theta(), b.parents()), g.reciprocal(b.u()));
  PolicySpec p;
  p.theta_index = {3};
  p.graph = std::move(b).finish(out).graph;
  return p;
}

MotivatingTwin motivating_mlp_twin(const MlpSpec& mlp) {
  MotivatingTwin t;
  const SscmSpec base = motivating_example();
  const LieElement g = identity(LieGroup::Multiplicative, {1});
  t.plan.intervened = 1;
  t.plan.invariant = 2;
  t.plan.auxiliary = 2;
  t.plan.group = LieGroup::Multiplicative;
  t.plan.u_index = appended_u_index(base, g);
  t.lie = apply(base, g);
  t.plan.policy = mlp_policy(t.lie, t.plan.auxiliary, t.plan.u_index, t.plan.group, mlp);
  t.twin = build_invariant_model(t.lie, t.plan);
  return t;
}

InvariantInterventionSpec rebound_invariant_plan(const ReboundInstance& inst, const MlpSpec& mlp) {
  InvariantInterventionSpec plan;
  plan.intervened = inst.intervened;
  plan.invariant = inst.invariant;
  plan.auxiliary = inst.auxiliary;
  plan.group = LieGroup::Multiplicative;
  plan.u_index = {0};
  const int target = inst.options.efficiency_target;
  plan.policy = mlp_policy(inst.spec, plan.auxiliary, plan.u_index, plan.group, mlp,
                           inst.options.curves.p0[target]);
  return plan;
}

TwoCompartmentParams TwoCompartmentParams::frozen() {
  TwoCompartmentParams p;
  p.W = Matrix::Zero(6, 6);
  // compartment 1
  p.W(0, 1) = 0.2;  p.W(0, 2) = 0.1;
  p.W(1, 0) = 0.3;  p.W(1, 2) = 0.2;
  p.W(2, 0) = 0.25; p.W(2, 1) = 0.3;
  // compartment 2
  p.W(3, 4) = 0.2;  p.W(3, 5) = 0.1;
  p.W(4, 3) = 0.3;  p.W(4, 5) = 0.2;
  p.W(5, 3) = 0.25; p.W(5, 4) = 0.3;
  // bridges, each leaving from an invariant node
  p.W(0, 5) = 0.15;
  p.W(3, 2) = 0.15;
  p.c = Vector::Zero(6);
  p.c << 0.0, 0.5, 0.4, 0.0, 0.5, 0.4;
  p.theta_ref = Vector::Ones(2);
  return p;
}

TwoCompartmentInstance two_compartment_model(const TwoCompartmentParams& params) {
  const int d = static_cast<int>(params.W.rows());
  if (params.W.cols() != d || params.c.size() != d) {
    throw Error(ErrorCode::DimensionMismatch, "coupling matrix and constants disagree");
  }
  if (params.theta_nodes.size() != static_cast<std::size_t>(params.theta_ref.size())) {
    throw Error(ErrorCode::DimensionMismatch, "one theta entry per theta node");
  }
  const std::size_t nc = params.partition.size();
  if (params.intervened.size() != nc || params.invariant.size() != nc) {
    throw Error(ErrorCode::DimensionMismatch, "one intervened and invariant node per compartment");
  }
  std::vector<int> owner(d, -1);
  for (std::size_t m = 0; m < nc; ++m)
    for (int n : params.partition[m]) {
      if (n < 0 || n >= d || owner[n] != -1) {
        throw Error(ErrorCode::InvalidPartition, "partition must split the nodes");
      }
      owner[n] = static_cast<int>(m);
    }
  if (std::find(owner.begin(), owner.end(), -1) != owner.end()) {
    throw Error(ErrorCode::InvalidPartition, "partition must cover every node");
  }
  for (std::size_t m = 0; m < nc; ++m) {
    int outgoing = 0;
    for (int c = 0; c < d; ++c) {
      for (int p = 0; p < d; ++p) {
        if (params.W(c, p) == 0.0 || owner[p] != static_cast<int>(m) ||
            owner[c] == static_cast<int>(m)) {
          continue;
        }
        ++outgoing;
        if (p != params.invariant[m]) {
          throw Error(ErrorCode::TopologyViolation,
                      "cross edge " + std::to_string(p) + " -> " + std::to_string(c) +
                          " does not leave from the invariant node");
        }
      }
    }
    if (outgoing != 1) {
      throw Error(ErrorCode::TopologyViolation, "compartment " + std::to_string(m) + " has " +
                                                    std::to_string(outgoing) +
                                                    " outgoing cross edges, expected 1");
    }
  }

  TwoCompartmentInstance inst;
  SscmSpec& s = inst.base;
  s.theta_ref = params.theta_ref;
  for (std::size_t t = 0; t < params.theta_nodes.size(); ++t) {
    const double v = params.theta_ref[static_cast<Eigen::Index>(t)];
    s.theta_box.push_back({0.5 * v, 1.5 * v});
    s.theta_names.push_back("theta" + std::to_string(t + 1));
  }
  for (int k = 0; k < d; ++k) {
    s.names.push_back("x" + std::to_string(k));
    LinearRow row;
    for (int j = 0; j < d; ++j) {
      if (j != k && params.W(k, j) != 0.0) row.terms.push_back({j, params.W(k, j), -1, -1});
    }
    auto it = std::find(params.theta_nodes.begin(), params.theta_nodes.end(), k);
    if (it != params.theta_nodes.end()) {
      row.additive_theta = static_cast<int>(it - params.theta_nodes.begin());
    }
    row.constant = params.c[k];
    s.assignments.push_back(build_linear(row));
  }
  require_valid(s);

  inst.lie = s;
  for (std::size_t m = 0; m < nc; ++m) {
    LieElement g = identity(LieGroup::Multiplicative, {params.intervened[m]});
    InvariantInterventionSpec iv;
    iv.intervened = params.intervened[m];
    iv.invariant = params.invariant[m];
    iv.auxiliary = params.invariant[m];
    iv.group = LieGroup::Multiplicative;
    iv.u_index = appended_u_index(inst.lie, g);
    inst.lie = apply(inst.lie, g);
    inst.plan.interventions.push_back(iv);
  }
  inst.plan.partition = params.partition;
  return inst;
}

Matrix random_contraction(int d, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Matrix m(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) m(r, c) = dist(rng);
  const double rho = m.eigenvalues().cwiseAbs().maxCoeff();
  return m * (radius / rho);
}

IoTable synthetic_iotable(int d, double radius, std::uint64_t seed,
                          std::vector<std::string> impact_names) {
  if (d < 1) throw Error(ErrorCode::InvalidArgument, "need at least one sector");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  IoTable t;
  t.A = Matrix::Zero(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c)
      if (r != c) t.A(r, c) = unit(rng);
  if (d > 1) {
    const double rho = t.A.eigenvalues().cwiseAbs().maxCoeff();
    t.A *= radius / rho;
  }
  t.y.resize(d);
  for (int k = 0; k < d; ++k) t.y[k] = 0.5 + unit(rng);
  t.R.resize(static_cast<Eigen::Index>(impact_names.size()), d);
  for (Eigen::Index r = 0; r < t.R.rows(); ++r)
    for (int c = 0; c < d; ++c) t.R(r, c) = unit(rng);
  for (int k = 0; k < d; ++k) t.sectors.push_back("s" + std::to_string(k));
  t.impacts = std::move(impact_names);
  return t;
}

}  // namespace eqcausal
