#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "interventions.hpp"
#include "sscm.hpp"

namespace eqcausal {

/// Input-output table: x = A x + y, impacts s = R x.
struct IoTable {
  Matrix A;
  Matrix R;
  Vector y;
  std::vector<std::string> sectors;
  std::vector<std::string> impacts;

  int dim() const { return static_cast<int>(A.rows()); }
  /// Throws DimensionMismatch or NegativeEntry.
  void validate() const;
  int impact_row(const std::string& name) const;  // -1 when absent
};

/// x* = (I - A)^-1 y. Throws SingularMatrix.
Vector leontief_closed_form(const Matrix& A, const Vector& y);
/// s = R x. Throws DimensionMismatch.
Vector impacts(const Matrix& R, const Vector& x);
/// Entrywise product of row `row` of R with x.
Vector employment_distribution(const Matrix& R, int row, const Vector& x);

/// Leading principal minors of I - A, from an unpivoted LU.
Vector leading_principal_minors(const Matrix& A);
/// True iff every leading principal minor of I - A is positive.
bool hawkins_simon_check(const Matrix& A);

struct LeontiefOptions {
  /// Entries (r, c) of A exposed as theta after y. Must be off-diagonal.
  std::vector<std::pair<int, int>> free_coefficients;
  double demand_box = 0.5;  // theta box is y * [1 - demand_box, 1 + demand_box]
};

/// x_k := sum_j A_kj x_j + y_k with theta = (y, free coefficients). A nonzero
/// diagonal entry is folded into the assignment as division by 1 - A_kk.
/// Hawkins-Simon failures are reported through `warnings`.
SscmSpec leontief_model(const IoTable& table, const LeontiefOptions& options = {},
                        std::vector<std::string>* warnings = nullptr);

/// y_i = y0_i (p_i / p0_i)^(-eps_i).
struct DemandCurve {
  Vector y0;
  Vector p0;
  Vector epsilon;
};

/// Solves p = A^T p + beta_e delta_e.
Vector reference_prices(const Matrix& A, int energy, double beta_e);

struct PriceReboundOptions {
  int energy = 0;
  double beta_e = 1.0;
  int efficiency_target = 1;  // j of the efficiency coefficient A_ej
  DemandCurve curves;         // p0 empty: use reference_prices
  std::vector<std::pair<int, int>> free_coefficients;
  double coefficient_box = 0.5;  // relative half-width of free coefficient boxes
};

/// Stacked variables (x, q, y) with q = p - p0: x := A x + y,
/// p := A^T p + beta_e delta_e, y_i := d_i(p_i). Prices are held relative to
/// p0 so the zero starting point sits at positive prices. u[0] multiplies A_ej
/// inside x_e's and p_j's assignments. Throws DomainError unless beta_e > 0;
/// demand raises DomainError if a price reaches zero while solving.
SscmSpec price_rebound_model(const IoTable& table, const PriceReboundOptions& options);

/// Node indices of the stacked rebound model.
inline int rebound_x(int d, int k) { (void)d; return k; }
inline int rebound_p(int d, int k) { return d + k; }
inline int rebound_y(int d, int k) { return 2 * d + k; }
/// Intermediate energy demand delta_e^T A x at an equilibrium, i.e. x_e - y_e.
double rebound_energy_demand(const Vector& x, int d, int energy);
/// Absolute prices p0 + q from a rebound-model state.
Vector rebound_prices(const Vector& x, const Vector& p0);

struct ReboundInstance {
  IoTable table;
  PriceReboundOptions options;
  SscmSpec spec;
  int intervened = -1;
  int invariant = -1;
  int auxiliary = -1;
};

/// Frozen energy / target / other economy used for the rebound experiment.
ReboundInstance rebound_3sector(double target_elasticity = 2.0);

/// Invariance plan for the rebound instance: u on the efficiency coefficient,
/// an MLP tax on the target sector's price keeping its final demand fixed.
InvariantInterventionSpec rebound_invariant_plan(const ReboundInstance& inst, const MlpSpec& mlp);

/// x := tau; y := u_y (alpha x + beta z); z := u_z gamma y.
/// With builtin_u the model carries u = (u_y, u_z) = (1, 1); otherwise no u.
/// Throws SingularParameterization when beta * gamma = 1.
SscmSpec motivating_example(double tau = 1.0, double alpha = 0.5, double beta = 0.3,
                            double gamma = 0.4, bool builtin_u = false);
/// (tau, u_y a t / (1 - u_y u_z b g), u_y u_z g a t / (1 - u_y u_z b g)).
Vector motivating_closed_form(const Vector& theta, double u_y = 1.0, double u_z = 1.0);
/// z := gamma y / u_y for apply(motivating_example(), multiplicative on y).
PolicySpec motivating_invariant_policy();

struct MotivatingTwin {
  SscmSpec lie;  // multiplicative u on y
  InvariantInterventionSpec plan;
  TwinModel twin;
};

/// Twin model of the motivating example with an MLP policy at z keeping z fixed
/// under the intervention on y.
MotivatingTwin motivating_mlp_twin(const MlpSpec& mlp);

struct TwoCompartmentParams {
  Matrix W;       // 6 x 6 zero-diagonal coupling
  Vector c;       // constants
  std::vector<int> theta_nodes = {0, 3};
  Vector theta_ref;
  std::vector<std::vector<int>> partition = {{0, 1, 2}, {3, 4, 5}};
  std::vector<int> intervened = {0, 3};
  std::vector<int> invariant = {2, 5};

  static TwoCompartmentParams frozen();
};

struct TwoCompartmentInstance {
  SscmSpec base;
  SscmSpec lie;  // multiplicative u on each compartment's intervened node
  CompartmentPlan plan;  // policies unset
};

/// Throws TopologyViolation unless each compartment has exactly one outgoing
/// cross edge and it leaves from the compartment's invariant node.
TwoCompartmentInstance two_compartment_model(const TwoCompartmentParams& params =
                                                 TwoCompartmentParams::frozen());

/// Nonnegative zero-diagonal A scaled to spectral radius `radius`, y in
/// [0.5, 1.5], impact rows in [0, 1].
IoTable synthetic_iotable(int d, double radius, std::uint64_t seed,
                          std::vector<std::string> impact_names = {"ghg", "employment"});

/// Nonnegative dense matrix scaled to the given spectral radius.
Matrix random_contraction(int d, double radius, std::uint64_t seed);

}  // namespace eqcausal
