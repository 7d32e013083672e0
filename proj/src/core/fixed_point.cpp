#include "fixed_point.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "error.hpp"

namespace eqcausal {

std::string_view to_string(SolverMethod method) {
  return method == SolverMethod::Forward ? "forward" : "anderson";
}

SolverMethod solver_method_from_string(std::string_view name) {
  if (name == "forward") return SolverMethod::Forward;
  if (name == "anderson") return SolverMethod::Anderson;
  throw Error(ErrorCode::InvalidArgument, "unknown solver method '" + std::string(name) + "'");
}

void SolverConfig::validate() const {
  if (history < 1) throw Error(ErrorCode::InvalidArgument, "history must be >= 1");
  if (!(relaxation > 0.0)) throw Error(ErrorCode::InvalidArgument, "relaxation must be > 0");
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be > 0");
  if (max_iter < 1) throw Error(ErrorCode::InvalidArgument, "max_iter must be >= 1");
  if (!(ridge >= 0.0)) throw Error(ErrorCode::InvalidArgument, "ridge must be >= 0");
}

double convergence_metric(const Vector& x, const Vector& residual) {
  const double xn = x.stableNorm();
  const double rn = residual.stableNorm();
  // a norm past the double range is divergence, not a vanishing ratio
  if (!std::isfinite(xn) || !std::isfinite(rn)) return std::numeric_limits<double>::infinity();
  return xn > 0.0 ? rn / xn : rn;
}

double relative_error(const VectorMap& f, const Vector& x) {
  const double xn = x.stableNorm();
  if (xn == 0.0) throw Error(ErrorCode::ZeroNorm, "relative error undefined at x = 0");
  return (x - f(x)).stableNorm() / xn;
}

namespace {

Vector checked_eval(const VectorMap& f, const Vector& x, int iteration) {
  if (!x.allFinite()) {
    throw Error(ErrorCode::NonFiniteIterate,
                "non-finite iterate at iteration " + std::to_string(iteration));
  }
  Vector fx = f(x);
  if (fx.size() != x.size()) {
    throw Error(ErrorCode::DimensionMismatch, "map returned " + std::to_string(fx.size()) +
                                                  " values for a " + std::to_string(x.size()) +
                                                  "-vector");
  }
  if (!fx.allFinite()) {
    throw Error(ErrorCode::NonFiniteIterate,
                "non-finite value at iteration " + std::to_string(iteration));
  }
  return fx;
}

SolveReport make_report(const Vector& x, const Vector& residual, int iterations, double tol) {
  SolveReport r;
  r.solution = x;
  r.residual_norm = residual.stableNorm();
  r.relative_error = convergence_metric(x, residual);
  r.iterations = iterations;
  r.converged = r.relative_error <= tol;
  return r;
}

}  // namespace

SolveReport forward_iterate(const VectorMap& f, const Vector& x0, const SolverConfig& cfg) {
  cfg.validate();
  if (!x0.allFinite()) throw Error(ErrorCode::NonFiniteIterate, "non-finite initial point");
  Vector x = x0;
  Vector fx = checked_eval(f, x, 0);
  int k = 0;
  while (convergence_metric(x, fx - x) > cfg.tol && k < cfg.max_iter) {
    x = fx;
    ++k;
    fx = checked_eval(f, x, k);
  }
  return make_report(x, fx - x, k, cfg.tol);
}

SolveReport anderson_solve(const VectorMap& f, const Vector& x0, const SolverConfig& cfg) {
  cfg.validate();
  if (!x0.allFinite()) throw Error(ErrorCode::NonFiniteIterate, "non-finite initial point");
  const Eigen::Index n = x0.size();
  const double beta = cfg.relaxation;

  // Window of the last `history` iterates and their residuals g = f(x) - x.
  std::deque<Vector> xs;
  std::deque<Vector> gs;

  Vector x = x0;
  Vector g = checked_eval(f, x, 0) - x;
  int k = 0;
  while (convergence_metric(x, g) > cfg.tol && k < cfg.max_iter) {
    xs.push_back(x);
    gs.push_back(g);
    if (static_cast<int>(xs.size()) > cfg.history) {
      xs.pop_front();
      gs.pop_front();
    }

    // Sum-to-one weights alpha over the window, written as x_k - dX gamma with
    // gamma minimizing ||g_k - dG gamma||^2 + ridge * scale * ||gamma||^2.
    const int cols = static_cast<int>(xs.size()) - 1;
    Vector next = x + beta * g;
    if (cols > 0) {
      Matrix dX(n, cols);
      Matrix dG(n, cols);
      for (int c = 0; c < cols; ++c) {
        dX.col(c) = xs[c + 1] - xs[c];
        dG.col(c) = gs[c + 1] - gs[c];
      }
      Matrix gram = dG.transpose() * dG;
      const double trace = gram.trace();
      const double lambda = cfg.ridge * (trace > 0.0 ? trace / cols : 1.0);
      gram.diagonal().array() += lambda;
      Eigen::LDLT<Matrix> ldlt(gram);
      if (cfg.ridge == 0.0 && (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
                               ldlt.vectorD().minCoeff() <= 0.0)) {
        throw Error(ErrorCode::SingularLeastSquares,
                    "singular Anderson Gram system at iteration " + std::to_string(k));
      }
      Vector gamma = ldlt.solve(dG.transpose() * g);
      if (!gamma.allFinite()) {
        throw Error(ErrorCode::SingularLeastSquares,
                    "non-finite Anderson weights at iteration " + std::to_string(k));
      }
      next -= (dX + beta * dG) * gamma;
    }

    x = next;
    ++k;
    g = checked_eval(f, x, k) - x;
  }
  return make_report(x, g, k, cfg.tol);
}

SolveReport solve_fixed_point(const VectorMap& f, const Vector& x0, const SolverConfig& cfg) {
  return cfg.method == SolverMethod::Forward ? forward_iterate(f, x0, cfg)
                                             : anderson_solve(f, x0, cfg);
}

}  // namespace eqcausal
