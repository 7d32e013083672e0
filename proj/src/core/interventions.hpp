#pragma once

#include <string>
#include <vector>

#include "deq.hpp"
#include "mlp.hpp"
#include "sscm.hpp"

namespace eqcausal {

enum class LieGroup { Multiplicative, Additive };

std::string_view to_string(LieGroup group);
LieGroup lie_group_from_string(std::string_view name);
double group_identity_value(LieGroup group);

/// Element of (R*_+)^|I| or (R, +)^|I| acting on the assignments of `targets`.
struct LieElement {
  LieGroup group = LieGroup::Multiplicative;
  std::vector<int> targets;
  Vector values;

  /// Throws InvalidArgument on size mismatch, DomainError on a nonpositive
  /// multiplicative value.
  void validate() const;
  bool is_identity() const;
};

LieElement identity(LieGroup group, std::vector<int> targets);
/// Componentwise product (multiplicative) or sum (additive). Throws
/// MismatchedTargets unless group and targets agree.
LieElement compose(const LieElement& g1, const LieElement& g2);
LieElement inverse(const LieElement& g);

/// Wraps every targeted assignment as u * f_k or f_k + u, reading u from new
/// entries appended to spec.u (initialized to g.values). Parents are unchanged.
SscmSpec apply(const SscmSpec& spec, const LieElement& g);
/// Positions of the entries apply(spec, g) appends to u.
std::vector<int> appended_u_index(const SscmSpec& spec, const LieElement& g);

/// Model with node k's assignment replaced by a new theta entry lambda.
/// Returns the clamped model; lambda sits at index spec.num_theta().
SscmSpec clamp_node(const SscmSpec& spec, int k, double lambda);

/// d x*_j / d lambda for the hard intervention x_k := lambda at
/// lambda = x*_k(params). Throws ClampedModelSingular if the clamped model is
/// not solvable there.
double hard_intervention_derivative(const SscmSpec& spec, int j, int k, const ParamValues& params,
                                    const SolverConfig& cfg = {}, double cond_max = 1e8);

struct InvarianceReport {
  bool triple_valid = false;  // i != j and i != k
  bool diffeomorphic = false;
  double reference_condition = 0.0;
  bool reduced_jacobian_invertible = false;  // (a)
  double reduced_condition = 0.0;
  bool full_column_rank = false;  // (b)
  double sigma_min = 0.0;
  int pa_rows = 0;
  int free_cols = 0;
  bool nonzero_derivative = false;  // (c)
  double derivative = 0.0;

  bool all_pass() const {
    return triple_valid && reduced_jacobian_invertible && full_column_rank && nonzero_derivative;
  }
};

inline constexpr double kRankThreshold = 1e-6;
inline constexpr double kDerivativeThreshold = 1e-6;

/// Sufficient conditions for an invariant soft intervention on (i, j, k).
/// `free_theta` selects the parameter columns; empty means all of theta.
InvarianceReport check_invariance_conditions(const SscmSpec& spec, int i, int j, int k,
                                             const ParamValues& params, double cond_max = 1e8,
                                             std::vector<int> free_theta = {},
                                             const SolverConfig& cfg = {});

/// Soft assignment for the auxiliary node. Slots follow the assignment layout:
/// parents of k, theta[theta_index], the main intervention's u, w.
struct PolicySpec {
  ExprGraph graph;
  std::vector<int> theta_index;
  Vector w;
  MlpSpec mlp;        // meaningful when the policy contains a network
  bool has_mlp = false;
  double shift = 0.0;
};

struct InvariantInterventionSpec {
  int intervened = -1;
  int invariant = -1;
  int auxiliary = -1;
  LieGroup group = LieGroup::Multiplicative;
  std::vector<int> u_index;  // main intervention entries of spec.u
  PolicySpec policy;
};

/// (f_k(Pa_k, theta_k, u) + shift) * exp(MLP(Pa_k, log u)) - shift for
/// multiplicative groups (raw u for additive ones). `shift` lets the policy
/// scale x_k + shift when the node is stored relative to a reference level.
/// The output layer starts at zero so the policy begins as the plain
/// Lie-intervened assignment.
PolicySpec mlp_policy(const SscmSpec& lie_spec, int k, const std::vector<int>& u_index,
                      LieGroup group, const MlpSpec& mlp, double shift = 0.0);

/// The model pair used to learn an invariant intervention.
struct TwinModel {
  SscmSpec unintervened;  // lie_spec with the main intervention at identity
  SscmSpec intervened;    // policy at k, arrows out of j read theta[reroute_index]
  SscmSpec deployed;      // policy at k, no rerouting
  InvariantInterventionSpec plan;
  int reroute_index = -1;
  std::vector<int> policy_w_index;  // where the policy weights sit in w

  /// Unintervened parameters for theta.
  ParamValues unintervened_params(const Vector& theta) const;
  /// Intervened parameters; x_j_ref is the unintervened equilibrium value of j.
  ParamValues intervened_params(const Vector& theta, const Vector& u, const Vector& policy_w,
                                double x_j_ref) const;
  ParamValues deployed_params(const Vector& theta, const Vector& u, const Vector& policy_w) const;
};

/// `lie_spec` already carries the main intervention in u (see apply). Throws
/// PolicyArityMismatch when the policy slots disagree with Pa_k or the
/// intervention size, InvalidArgument on an invalid triple.
TwinModel build_invariant_model(const SscmSpec& lie_spec, const InvariantInterventionSpec& plan);

/// lie_spec with each plan's auxiliary assignment replaced by its policy.
/// Policy weights are appended to w in plan order.
SscmSpec deploy_policies(const SscmSpec& lie_spec,
                         const std::vector<InvariantInterventionSpec>& plans);

struct CompartmentPlan {
  std::vector<std::vector<int>> partition;
  std::vector<InvariantInterventionSpec> interventions;  // one per compartment
};

/// Throws InvalidPartition unless the sets are disjoint, cover every node and
/// each triple lies inside its compartment.
void validate_partition(const SscmSpec& spec, const CompartmentPlan& plan);

struct CompartmentSamples {
  std::vector<Vector> thetas;
  /// Per compartment, the intervention values to sweep.
  std::vector<std::vector<Vector>> grids;
};

struct CompartmentReport {
  bool structural_ok = false;
  std::vector<std::string> structural_violations;
  /// Per compartment: max over theta, own value and nodes of the spread caused
  /// by the other compartments' interventions, relative to node magnitude.
  std::vector<double> cross_deviation;
  /// Per compartment: relative spread of the intervened node across its own grid.
  std::vector<double> own_variation;
  double max_cross_deviation = 0.0;
  int failed_solves = 0;
};

/// Monte-Carlo check that each compartment is unaffected by the others'
/// interventions. `deployed` is deploy_policies(lie_spec, plan.interventions).
CompartmentReport check_compartmentalization(const SscmSpec& deployed, const CompartmentPlan& plan,
                                             const CompartmentSamples& samples,
                                             const SolverConfig& cfg = {});

}  // namespace eqcausal
