#include "deq.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "error.hpp"

namespace eqcausal {

const Vector& ImplicitGradient::block(ParamBlock b) const {
  return b == ParamBlock::Theta ? grad_theta : b == ParamBlock::Intervention ? grad_u : grad_w;
}

AdjointSolver::AdjointSolver(const SscmSpec& spec, ParamValues params, Vector x_star,
                             SolverConfig cfg, AdjointMode mode)
    : spec_(spec), params_(std::move(params)), x_star_(std::move(x_star)), cfg_(cfg) {
  require_valid(spec_);
  check_params(spec_, params_);
  cfg_.validate();
  const Vector fx = evaluate_map(spec_, params_, x_star_);
  const double metric = convergence_metric(x_star_, fx - x_star_);
  if (!(metric <= cfg_.tol)) {
    throw Error(ErrorCode::ForwardNotConverged,
                "equilibrium residual " + std::to_string(metric) + " exceeds tol " +
                    std::to_string(cfg_.tol) + "; refusing to differentiate");
  }
  direct_ = mode == AdjointMode::Direct ||
            (mode == AdjointMode::Auto && spec_.dim() <= kDirectAdjointMaxDim);
  if (direct_) {
    jac_x_ = map_jacobian_x(spec_, params_, x_star_);
    const int d = spec_.dim();
    lu_.compute((Matrix::Identity(d, d) - jac_x_).transpose());
  }
}

SolveReport AdjointSolver::solve(const Vector& cotangent) const {
  if (cotangent.size() != spec_.dim()) {
    throw Error(ErrorCode::ShapeMismatch, "cotangent has " + std::to_string(cotangent.size()) +
                                              " entries for " + std::to_string(spec_.dim()) +
                                              " nodes");
  }
  if (direct_) {
    SolveReport r;
    r.solution = lu_.solve(cotangent);
    // residual of the fixed-point form a = J^T a + c
    const Vector g = jac_x_.transpose() * r.solution + cotangent - r.solution;
    r.residual_norm = g.norm();
    r.relative_error = convergence_metric(r.solution, g);
    r.iterations = 0;
    r.converged = r.solution.allFinite() && r.relative_error <= cfg_.tol;
    return r;
  }
  auto adjoint_map = [&](const Vector& a) {
    return Vector(map_vjp(spec_, params_, x_star_, a).x + cotangent);
  };
  return solve_fixed_point(adjoint_map, Vector::Zero(spec_.dim()), cfg_);
}

ImplicitGradient AdjointSolver::gradient(const Vector& cotangent) const {
  ImplicitGradient out;
  out.adjoint_report = solve(cotangent);
  out.adjoint = out.adjoint_report.solution;
  MapVjp v = map_vjp(spec_, params_, x_star_, out.adjoint);
  out.grad_theta = std::move(v.theta);
  out.grad_u = std::move(v.u);
  out.grad_w = std::move(v.w);
  return out;
}

ImplicitGradient implicit_vjp(const SscmSpec& spec, const ParamValues& params,
                              const Vector& x_star, const Vector& cotangent,
                              const SolverConfig& cfg, AdjointMode mode) {
  return AdjointSolver(spec, params, x_star, cfg, mode).gradient(cotangent);
}

Matrix jacobian_wrt_params(const SscmSpec& spec, const ParamValues& params,
                           const Vector& x_star, const SolverConfig& cfg, ParamBlock block,
                           AdjointMode mode) {
  AdjointSolver solver(spec, params, x_star, cfg, mode);
  const int d = spec.dim();
  Matrix jac(d, params.block(block).size());
  for (int i = 0; i < d; ++i) {
    Vector e = Vector::Zero(d);
    e[i] = 1.0;
    ImplicitGradient g = solver.gradient(e);
    if (!g.adjoint_report.converged) {
      throw Error(ErrorCode::AdjointNotConverged,
                  "adjoint solve for row " + std::to_string(i) + " stopped at relative error " +
                      std::to_string(g.adjoint_report.relative_error));
    }
    jac.row(i) = g.block(block).transpose();
  }
  return jac;
}

Matrix jacobian_wrt_theta(const SscmSpec& spec, const Vector& theta, const Vector& x_star,
                          const SolverConfig& cfg) {
  return jacobian_wrt_params(spec, params_with_theta(spec, theta), x_star, cfg);
}

Matrix finite_difference_equilibrium_jacobian(const SscmSpec& spec, const ParamValues& params,
                                              const SolverConfig& cfg, double h,
                                              ParamBlock block) {
  auto solve_at = [&](const Vector& value) {
    ParamValues p = params;
    p.block(block) = value;
    EquilibriumSolution s = solve_equilibrium(spec, p, cfg);
    if (!s.report.converged) {
      throw Error(ErrorCode::ForwardNotConverged, "perturbed solve did not converge");
    }
    return s.x_star;
  };
  return finite_difference_jacobian(solve_at, params.block(block), h);
}

double max_relative_deviation(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "compared matrices differ in shape");
  }
  double worst = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double gap = (a.col(c) - b.col(c)).cwiseAbs().maxCoeff();
    const double scale = b.col(c).cwiseAbs().maxCoeff();
    worst = std::max(worst, scale > 0.0 ? gap / scale : gap);
  }
  return worst;
}

GradCheckReport grad_check(const SscmSpec& spec, const Vector& theta, const ExprGraph& loss,
                           const SolverConfig& cfg, double h) {
  GradCheckReport r;
  r.solver_tol = cfg.tol;
  r.step = h;
  const ParamValues params = params_with_theta(spec, theta);
  EquilibriumSolution base = solve_equilibrium(spec, params, cfg);
  r.forward_converged = base.report.converged;
  if (!base.report.converged) {
    r.max_relative_deviation = std::numeric_limits<double>::infinity();
    return r;
  }
  std::array<Vector, 1> binds{base.x_star};
  const Vector dl_dx = reverse_vjp(loss, binds, Vector::Ones(1)).slots[0];
  r.implicit_gradient = implicit_vjp(spec, params, base.x_star, dl_dx, cfg).grad_theta;

  auto loss_at = [&](const Vector& th) {
    EquilibriumSolution s = solve_equilibrium(spec, params_with_theta(spec, th), cfg);
    std::array<Vector, 1> b{s.x_star};
    return forward_eval(loss, b);
  };
  r.finite_difference_gradient = finite_difference_jacobian(loss_at, theta, h).row(0).transpose();
  const double scale = r.finite_difference_gradient.cwiseAbs().maxCoeff();
  const double gap =
      (r.implicit_gradient - r.finite_difference_gradient).cwiseAbs().maxCoeff();
  r.max_relative_deviation = scale > 0.0 ? gap / scale : gap;
  return r;
}

}  // namespace eqcausal
