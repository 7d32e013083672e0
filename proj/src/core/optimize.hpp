#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "deq.hpp"
#include "interventions.hpp"
#include "sscm.hpp"

namespace eqcausal {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int iterations = 10000;
  std::uint64_t seed = 0;
  /// Stop when the loss changes by less than plateau_tol (relative) over
  /// plateau_window steps. plateau_window = 0 disables the check.
  int plateau_window = 200;
  double plateau_tol = 1e-9;

  /// Throws InvalidArgument.
  void validate() const;
};

struct AdamState {
  Vector params;
  Vector m;
  Vector v;
  int t = 0;

  AdamState() = default;
  explicit AdamState(Vector initial);
};

/// One bias-corrected Adam update at cfg.lr. Throws NonFiniteGradient or
/// DimensionMismatch.
AdamState adam_step(AdamState state, const Vector& grad, const AdamConfig& cfg);

inline constexpr double kL1Smoothing = 1e-8;

/// sum sqrt(d^2 + eps) - sqrt(eps).
double smoothed_l1(const Vector& d, double eps = kL1Smoothing);

/// c^T x + lambda ||e_u - e_star||_1, smoothed unless `exact`. Throws
/// DimensionMismatch or InvalidArgument for a negative lambda.
double ghg_employment_loss(const Vector& x_u, const Vector& c, const Vector& e_u,
                           const Vector& e_star, double lambda, bool exact = false);

/// The same loss as a graph of x with e = r_emp .* x (smoothed L1).
ExprGraph ghg_employment_loss_graph(const Vector& c, const Vector& r_emp, const Vector& e_star,
                                    double lambda);
/// ||x - x_ref||^2.
ExprGraph squared_deviation_loss(const Vector& x_ref);
/// w^T x.
ExprGraph linear_loss(const Vector& w);

/// Box on the group values, applied after every step.
struct InterventionBounds {
  Vector lo;
  Vector hi;
};

struct TrajectoryPoint {
  int step = 0;
  Vector values;  // group element before the step
  double loss = 0.0;
  double lr = 0.0;
};

struct OptimizationResult {
  std::vector<TrajectoryPoint> trajectory;
  LieElement optimum;
  double final_loss = 0.0;
  bool aborted = false;  // SolveFailedDuringOptimization after five halvings
  std::string failure;
  int failed_solves = 0;
  bool early_stopped = false;
};

/// Adam on u = exp(w) (multiplicative) or u = w (additive), gradients from the
/// implicit adjoint of the intervened equilibrium. A failed solve reverts the
/// step and halves the learning rate, at most five times in a row.
OptimizationResult optimize_lie_intervention(const SscmSpec& spec, const LieElement& g0,
                                             const ExprGraph& loss, const AdamConfig& adam,
                                             const SolverConfig& solver,
                                             const std::optional<InterventionBounds>& bounds = {});

struct SamplingConfig {
  Vector theta_mean;    // empty: theta_ref
  Vector theta_stddev;  // empty: 0.05 |theta_ref| + 0.01
  double u_lo = 0.5;
  double u_hi = 2.0;
  int batch = 16;

  /// Fills defaults from `spec` and validates. Throws InvalidArgument.
  SamplingConfig resolved(const SscmSpec& spec, LieGroup group) const;
};

/// Factorized Gaussian truncated to theta_box by rejection.
Vector sample_theta(const SscmSpec& spec, const SamplingConfig& cfg, std::mt19937_64& rng);
/// Log-uniform (multiplicative) or uniform (additive) on [u_lo, u_hi].
Vector sample_u(int size, LieGroup group, const SamplingConfig& cfg, std::mt19937_64& rng);

struct TrainingResult {
  Vector weights;
  double final_loss = 0.0;
  std::vector<double> losses;
  int steps = 0;
  bool aborted = false;
  std::string failure;
  int failed_solves = 0;
  bool early_stopped = false;
};

/// Learns the policy weights of `twin` by minimizing the batch mean of
/// (x_j^(u) - x_j*)^2 over sampled (theta, u).
TrainingResult train_invariant_mlp(const TwinModel& twin, const Vector& initial_weights,
                                   const SamplingConfig& sampling, const AdamConfig& adam,
                                   const SolverConfig& solver);

struct InvarianceEvaluation {
  double max_relative_deviation = 0.0;
  double mean_relative_deviation = 0.0;
  int samples = 0;
  int failed_solves = 0;
};

/// Held-out check on the deployed model: |x_j^(u) - x_j*| / |x_j*|.
InvarianceEvaluation evaluate_invariance(const TwinModel& twin, const Vector& weights,
                                         const std::vector<Vector>& thetas,
                                         const std::vector<Vector>& us,
                                         const SolverConfig& solver);

struct TradeoffPoint {
  double lambda = 0.0;
  double ghg_total = 0.0;
  double employment_l1_deviation = 0.0;
  Vector values;
  Vector employment_deltas;
  /// max - min of ghg_total and employment_l1_deviation over the last
  /// jitter_window trajectory points: the optimizer's own noise floor.
  double ghg_jitter = 0.0;
  double employment_jitter = 0.0;
  double loss = 0.0;
  bool failed = false;
  std::string failure;
};

struct ParetoProblem {
  SscmSpec spec;  // Leontief model
  Vector c;       // GHG intensities
  Vector r_emp;   // employment intensities
  std::vector<int> targets;  // default: every node
  InterventionBounds bounds;
  int jitter_window = 200;
};

/// True when ghg_total is nondecreasing and employment_l1_deviation
/// nonincreasing along the sweep, each up to the jitter of the two points
/// compared. Failed points are skipped.
bool pareto_monotone(const std::vector<TradeoffPoint>& points);

/// One optimization per lambda in ascending order, each warm-started at the
/// previous optimum. Points come back sorted by lambda.
std::vector<TradeoffPoint> pareto_sweep(const ParetoProblem& problem, std::vector<double> lambdas,
                                        const AdamConfig& adam, const SolverConfig& solver);

}  // namespace eqcausal
