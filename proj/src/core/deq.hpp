#pragma once

#include "expr_graph.hpp"
#include "fixed_point.hpp"
#include "sscm.hpp"

namespace eqcausal {

/// Largest model for which the adjoint system is factorized directly.
inline constexpr int kDirectAdjointMaxDim = 64;

enum class AdjointMode { Auto, Direct, Iterative };

struct ImplicitGradient {
  Vector grad_theta;
  Vector grad_u;
  Vector grad_w;
  Vector adjoint;  // a = (I - df/dx)^-T cotangent
  SolveReport adjoint_report;

  const Vector& block(ParamBlock b) const;
};

/// Reusable adjoint solver at one equilibrium.
///
/// Throws ForwardNotConverged when x_star does not satisfy the fixed point
/// within cfg.tol. In the direct mode I - df/dx is factorized once; otherwise
/// a = (df/dx)^T a + c is solved with the configured fixed-point method from 0.
class AdjointSolver {
 public:
  AdjointSolver(const SscmSpec& spec, ParamValues params, Vector x_star, SolverConfig cfg,
                AdjointMode mode = AdjointMode::Auto);

  /// Adjoint for one cotangent. Non-convergence is reported, not thrown.
  SolveReport solve(const Vector& cotangent) const;
  ImplicitGradient gradient(const Vector& cotangent) const;

  bool direct() const { return direct_; }

 private:
  const SscmSpec& spec_;
  ParamValues params_;
  Vector x_star_;
  SolverConfig cfg_;
  bool direct_ = false;
  Matrix jac_x_;
  Eigen::PartialPivLU<Matrix> lu_;
};

/// dL/dtheta, dL/du, dL/dw for L with dL/dx* = cotangent.
ImplicitGradient implicit_vjp(const SscmSpec& spec, const ParamValues& params,
                              const Vector& x_star, const Vector& cotangent,
                              const SolverConfig& cfg, AdjointMode mode = AdjointMode::Auto);

/// dx*/d(block) = (I - df/dx)^-1 df/d(block), one adjoint solve per row.
/// Throws AdjointNotConverged if any row's adjoint solve fails.
Matrix jacobian_wrt_params(const SscmSpec& spec, const ParamValues& params,
                           const Vector& x_star, const SolverConfig& cfg,
                           ParamBlock block = ParamBlock::Theta,
                           AdjointMode mode = AdjointMode::Auto);
Matrix jacobian_wrt_theta(const SscmSpec& spec, const Vector& theta, const Vector& x_star,
                          const SolverConfig& cfg);

/// Central differences of the equilibrium map w.r.t. one parameter block.
/// Throws ForwardNotConverged if a perturbed solve fails.
Matrix finite_difference_equilibrium_jacobian(const SscmSpec& spec, const ParamValues& params,
                                              const SolverConfig& cfg, double h,
                                              ParamBlock block = ParamBlock::Theta);

/// Column-wise relative deviation: max over columns of
/// ||a_c - b_c||_inf / ||b_c||_inf (columns where b_c = 0 use the absolute gap).
double max_relative_deviation(const Matrix& a, const Matrix& b);

struct GradCheckReport {
  Vector implicit_gradient;
  Vector finite_difference_gradient;
  double max_relative_deviation = 0.0;
  double solver_tol = 0.0;  // looser solves degrade the finite differences
  double step = 0.0;
  bool forward_converged = false;
};

/// Compares d/dtheta loss(x*(theta)) from implicit differentiation with
/// central finite differences. `loss` is a one-slot graph of x with scalar output.
GradCheckReport grad_check(const SscmSpec& spec, const Vector& theta, const ExprGraph& loss,
                           const SolverConfig& cfg, double h);

}  // namespace eqcausal
