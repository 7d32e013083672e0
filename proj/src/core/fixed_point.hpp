#pragma once

#include <functional>
#include <string_view>

#include "types.hpp"

namespace eqcausal {

enum class SolverMethod { Forward, Anderson };

std::string_view to_string(SolverMethod method);
SolverMethod solver_method_from_string(std::string_view name);

struct SolverConfig {
  SolverMethod method = SolverMethod::Anderson;
  int history = 5;          // Anderson window (number of stored iterates)
  double relaxation = 2.0;  // Anderson mixing parameter; > 1 extrapolates
  double tol = 1e-4;        // on the relative residual ||f(x) - x|| / ||x||
  int max_iter = 5000;
  double ridge = 1e-8;      // relative Tikhonov term of the least-squares step

  /// Throws InvalidArgument on out-of-range fields.
  void validate() const;
};

struct SolveReport {
  Vector solution;
  double residual_norm = 0.0;
  double relative_error = 0.0;
  int iterations = 0;
  bool converged = false;
};

using VectorMap = std::function<Vector(const Vector&)>;

/// Plain iteration x <- f(x).
SolveReport forward_iterate(const VectorMap& f, const Vector& x0, const SolverConfig& cfg);

/// Anderson acceleration in the Walker-Ni mixing form.
SolveReport anderson_solve(const VectorMap& f, const Vector& x0, const SolverConfig& cfg);

/// Dispatches on cfg.method.
SolveReport solve_fixed_point(const VectorMap& f, const Vector& x0, const SolverConfig& cfg);

/// ||x - f(x)|| / ||x||. Throws ZeroNorm when ||x|| == 0.
double relative_error(const VectorMap& f, const Vector& x);

/// Convergence metric used by the solvers: relative residual, or the absolute
/// residual norm when ||x|| == 0.
double convergence_metric(const Vector& x, const Vector& residual);

}  // namespace eqcausal
