#pragma once

#include <optional>
#include <string>
#include <vector>

#include "expr_graph.hpp"
#include "fixed_point.hpp"
#include "types.hpp"

namespace eqcausal {

/// Input slots of every assignment graph, in order.
enum AssignmentSlot : int {
  kParentSlot = 0,
  kThetaSlot = 1,
  kInterventionSlot = 2,
  kPolicySlot = 3,
  kNumAssignmentSlots = 4,
};

/// The three global parameter vectors an assignment may read from.
enum class ParamBlock { Theta, Intervention, Policy };

/// Structural assignment x_j := f_j(x_{Pa_j}, theta, u, w).
///
/// The graph's slots hold gathered values: slot 0 the parents in listed order,
/// slot 1 theta[theta_index], slot 2 u[u_index], slot 3 w[w_index]. Indices may
/// repeat across nodes, which is how shared coefficients are expressed.
struct Assignment {
  std::vector<int> parents;
  std::vector<int> theta_index;
  std::vector<int> u_index;
  std::vector<int> w_index;
  ExprGraph graph;

  const std::vector<int>& index(ParamBlock block) const;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct SscmSpec {
  std::vector<std::string> names;
  std::vector<Assignment> assignments;
  std::vector<std::string> theta_names;  // optional; empty or one per entry
  Vector theta_ref;
  std::vector<Interval> theta_box;
  Vector u;  // current intervention parameters (empty when unintervened)
  Vector w;  // policy weights (empty without a learned policy)
  std::optional<Vector> x_ref;

  int dim() const { return static_cast<int>(assignments.size()); }
  int num_theta() const { return static_cast<int>(theta_ref.size()); }
};

struct ParamValues {
  Vector theta;
  Vector u;
  Vector w;

  const Vector& block(ParamBlock b) const;
  Vector& block(ParamBlock b);
};

/// theta_ref with the model's current u and w.
ParamValues reference_params(const SscmSpec& spec);
/// `theta` with the model's current u and w.
ParamValues params_with_theta(const SscmSpec& spec, const Vector& theta);

/// Wraps a GraphBuilder with the slot sizes implied by the index lists.
class AssignmentBuilder {
 public:
  AssignmentBuilder(std::vector<int> parents, std::vector<int> theta_index = {},
                    std::vector<int> u_index = {}, std::vector<int> w_index = {});

  GraphBuilder& graph() { return builder_; }
  NodeId parents() { return builder_.input(kParentSlot); }
  NodeId theta() { return builder_.input(kThetaSlot); }
  NodeId u() { return builder_.input(kInterventionSlot); }
  NodeId w() { return builder_.input(kPolicySlot); }
  /// Scalar views of single entries.
  NodeId parent(int k);
  NodeId theta(int k);
  NodeId u(int k);

  Assignment finish(NodeId output) &&;

 private:
  NodeId entry(AssignmentSlot slot, int k);

  Assignment a_;
  GraphBuilder builder_;
};

/// Structural problems; empty means well formed.
std::vector<std::string> validate(const SscmSpec& spec);
/// Throws InvalidSpec listing every diagnostic.
void require_valid(const SscmSpec& spec);

/// Throws DimensionMismatch unless the blocks have the model's sizes.
void check_params(const SscmSpec& spec, const ParamValues& params);

/// f(x) = (f_1(x_{Pa_1}, ...), ..., f_d(...)).
Vector evaluate_map(const SscmSpec& spec, const ParamValues& params, const Vector& x);

/// The stacked structural map at fixed parameters. Holds a reference to
/// `spec`, which must outlive the returned function.
VectorMap assemble_map(const SscmSpec& spec, const ParamValues& params);
VectorMap assemble_map(const SscmSpec& spec, const Vector& theta);

struct MapVjp {
  Vector x;
  Vector theta;
  Vector u;
  Vector w;

  const Vector& block(ParamBlock b) const;
};

/// v^T df/dx, v^T df/dtheta, v^T df/du, v^T df/dw at (x, params).
MapVjp map_vjp(const SscmSpec& spec, const ParamValues& params, const Vector& x,
               const Vector& cotangent);

/// d x d matrix df/dx.
Matrix map_jacobian_x(const SscmSpec& spec, const ParamValues& params, const Vector& x);
/// d x |block| matrix of partial derivatives.
Matrix map_jacobian_params(const SscmSpec& spec, const ParamValues& params, const Vector& x,
                           ParamBlock block);

struct EquilibriumSolution {
  Vector x_star;
  SolveReport report;
  Vector theta;
};

/// Solves x = f(x) from x0 = 0. Non-convergence is reported, not thrown.
EquilibriumSolution solve_equilibrium(const SscmSpec& spec, const ParamValues& params,
                                      const SolverConfig& cfg);
EquilibriumSolution solve_equilibrium(const SscmSpec& spec, const Vector& theta,
                                      const SolverConfig& cfg);

struct DiffeomorphismReport {
  bool is_solution = false;
  bool jacobian_invertible = false;
  double condition_number = 0.0;
  double relative_residual = 0.0;
};

/// Conditions of the local solvability result at (x, params): x is a fixed
/// point within tol and I - df/dx has condition number <= cond_max.
DiffeomorphismReport check_local_diffeomorphism(const SscmSpec& spec, const Vector& x,
                                                const ParamValues& params,
                                                double cond_max = 1e8, double tol = 1e-4);
DiffeomorphismReport check_local_diffeomorphism(const SscmSpec& spec, const Vector& x,
                                                const Vector& theta, double cond_max = 1e8,
                                                double tol = 1e-4);

/// 2-norm condition number via singular values; +inf when singular.
double condition_number(const Matrix& m);

/// Gathers src[idx[0]], src[idx[1]], ...
Vector gather(const Vector& src, const std::vector<int>& idx);

}  // namespace eqcausal
