#include "optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "error.hpp"

namespace eqcausal {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "adam lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "adam beta1 must lie in [0, 1)");
  }
  if (!(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "adam beta2 must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "adam eps must be > 0");
  if (iterations < 0) throw Error(ErrorCode::InvalidArgument, "adam iterations must be >= 0");
  if (plateau_window < 0) throw Error(ErrorCode::InvalidArgument, "plateau_window must be >= 0");
  if (!(plateau_tol >= 0.0)) throw Error(ErrorCode::InvalidArgument, "plateau_tol must be >= 0");
}

AdamState::AdamState(Vector initial)
    : params(std::move(initial)),
      m(Vector::Zero(params.size())),
      v(Vector::Zero(params.size())) {}

AdamState adam_step(AdamState state, const Vector& grad, const AdamConfig& cfg) {
  if (grad.size() != state.params.size() || state.m.size() != state.params.size() ||
      state.v.size() != state.params.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "gradient has " + std::to_string(grad.size()) + " entries for " +
                    std::to_string(state.params.size()) + " parameters");
  }
  if (!grad.allFinite()) throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient");
  state.t += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, state.t);
  const double c2 = 1.0 - std::pow(cfg.beta2, state.t);
  const Vector m_hat = state.m / c1;
  const Vector v_hat = state.v / c2;
  state.params.array() -= cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
  return state;
}

double smoothed_l1(const Vector& d, double eps) {
  return ((d.array().square() + eps).sqrt() - std::sqrt(eps)).sum();
}

double ghg_employment_loss(const Vector& x_u, const Vector& c, const Vector& e_u,
                           const Vector& e_star, double lambda, bool exact) {
  if (x_u.size() != c.size() || e_u.size() != e_star.size()) {
    throw Error(ErrorCode::DimensionMismatch, "loss operands have inconsistent sizes");
  }
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  const Vector delta = e_u - e_star;
  const double reg = exact ? delta.lpNorm<1>() : smoothed_l1(delta);
  return c.dot(x_u) + lambda * reg;
}

ExprGraph ghg_employment_loss_graph(const Vector& c, const Vector& r_emp, const Vector& e_star,
                                    double lambda) {
  const int d = static_cast<int>(c.size());
  if (r_emp.size() != d || e_star.size() != d) {
    throw Error(ErrorCode::DimensionMismatch, "loss operands have inconsistent sizes");
  }
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  GraphBuilder g({d});
  const NodeId x = g.input(0);
  NodeId out = g.dot(g.constant(c), x);
  if (lambda > 0.0) {
    const NodeId delta = g.sub(g.mul(g.constant(r_emp), x), g.constant(e_star));
    const NodeId smooth =
        g.pow(g.add(g.mul(delta, delta), g.constant(Vector::Constant(d, kL1Smoothing))), 0.5);
    const NodeId reg = g.sub(g.sum(smooth), g.scalar(d * std::sqrt(kL1Smoothing)));
    out = g.add(out, g.mul(g.scalar(lambda), reg));
  }
  return std::move(g).build(out);
}

ExprGraph squared_deviation_loss(const Vector& x_ref) {
  GraphBuilder g({static_cast<int>(x_ref.size())});
  const NodeId delta = g.sub(g.input(0), g.constant(x_ref));
  return std::move(g).build(g.dot(delta, delta));
}

ExprGraph linear_loss(const Vector& w) {
  GraphBuilder g({static_cast<int>(w.size())});
  return std::move(g).build(g.dot(g.constant(w), g.input(0)));
}

namespace {

constexpr int kMaxHalvings = 5;

bool plateaued(const std::vector<double>& losses, const AdamConfig& cfg) {
  const int n = static_cast<int>(losses.size());
  if (cfg.plateau_window <= 0 || n <= cfg.plateau_window) return false;
  const double now = losses[n - 1];
  const double then = losses[n - 1 - cfg.plateau_window];
  const double scale = std::max({std::abs(now), std::abs(then), 1e-300});
  return std::abs(now - then) <= cfg.plateau_tol * scale;
}

struct Evaluation {
  bool ok = false;
  std::string failure;
  double loss = 0.0;
  Vector grad_u;  // w.r.t. the intervention values
};

Evaluation evaluate_intervention(const SscmSpec& spec, const std::vector<int>& u_index,
                                 const Vector& values, const ExprGraph& loss,
                                 const SolverConfig& solver) {
  Evaluation ev;
  ParamValues p = reference_params(spec);
  for (std::size_t a = 0; a < u_index.size(); ++a) p.u[u_index[a]] = values[a];
  try {
    const EquilibriumSolution sol = solve_equilibrium(spec, p, solver);
    if (!sol.report.converged) {
      ev.failure = "equilibrium solve did not converge (relative error " +
                   std::to_string(sol.report.relative_error) + ")";
      return ev;
    }
    const Vector xs[] = {sol.x_star};
    const Vector l = forward_eval(loss, xs);
    const Gradient gx = reverse_vjp(loss, xs, Vector::Ones(1));
    const ImplicitGradient ig = implicit_vjp(spec, p, sol.x_star, gx.slots[0], solver);
    if (!ig.adjoint_report.converged) {
      ev.failure = "adjoint solve did not converge";
      return ev;
    }
    ev.loss = l[0];
    ev.grad_u = gather(ig.grad_u, u_index);
    if (!std::isfinite(ev.loss) || !ev.grad_u.allFinite()) {
      ev.failure = "non-finite loss or gradient";
      return ev;
    }
    ev.ok = true;
  } catch (const Error& e) {
    ev.failure = e.what();
  }
  return ev;
}

template <class Clamp>
AdamState clamp_state(const AdamState& from, const Vector& grad, const AdamConfig& cfg,
                      const Clamp& clamp) {
  AdamState next = adam_step(from, grad, cfg);
  next.params = clamp(next.params);
  return next;
}

}  // namespace

OptimizationResult optimize_lie_intervention(const SscmSpec& spec, const LieElement& g0,
                                             const ExprGraph& loss, const AdamConfig& adam,
                                             const SolverConfig& solver,
                                             const std::optional<InterventionBounds>& bounds) {
  adam.validate();
  solver.validate();
  g0.validate();
  if (loss.num_slots() != 1 || loss.slot_sizes()[0] != spec.dim() || loss.output_size() != 1) {
    throw Error(ErrorCode::DimensionMismatch, "loss must map the " + std::to_string(spec.dim()) +
                                                  " node values to a scalar");
  }
  const bool mult = g0.group == LieGroup::Multiplicative;
  const int n = static_cast<int>(g0.values.size());

  Vector lo = Vector::Constant(n, -std::numeric_limits<double>::infinity());
  Vector hi = Vector::Constant(n, std::numeric_limits<double>::infinity());
  if (bounds) {
    if (bounds->lo.size() != n || bounds->hi.size() != n) {
      throw Error(ErrorCode::DimensionMismatch, "bounds must have one entry per target");
    }
    if ((bounds->lo.array() > bounds->hi.array()).any()) {
      throw Error(ErrorCode::InvalidArgument, "bounds have lo > hi");
    }
    if (mult && (bounds->lo.array() <= 0.0).any()) {
      throw Error(ErrorCode::DomainError, "multiplicative bounds must be positive");
    }
    lo = mult ? Vector(bounds->lo.array().log()) : bounds->lo;
    hi = mult ? Vector(bounds->hi.array().log()) : bounds->hi;
  }
  auto to_values = [&](const Vector& w) -> Vector { return mult ? Vector(w.array().exp()) : w; };
  auto clamp = [&](Vector w) {
    for (int a = 0; a < n; ++a) w[a] = std::clamp(w[a], lo[a], hi[a]);
    return w;
  };

  const SscmSpec lie_spec = apply(spec, g0);
  const std::vector<int> u_index = appended_u_index(spec, g0);

  OptimizationResult res;
  res.optimum = g0;
  AdamConfig cfg = adam;
  AdamState state(clamp(mult ? Vector(g0.values.array().log()) : g0.values));
  AdamState accepted = state;
  Vector accepted_grad;
  std::vector<double> losses;
  int halvings = 0;

  for (int step = 0; step <= adam.iterations; ++step) {
    const Vector values = to_values(state.params);
    Evaluation ev = evaluate_intervention(lie_spec, u_index, values, loss, solver);
    if (!ev.ok) {
      ++res.failed_solves;
      if (step == 0 || halvings >= kMaxHalvings) {
        res.aborted = true;
        res.failure = "SolveFailedDuringOptimization at step " + std::to_string(step) + ": " +
                      ev.failure;
        break;
      }
      ++halvings;
      cfg.lr *= 0.5;
      state = clamp_state(accepted, accepted_grad, cfg, clamp);
      --step;
      continue;
    }
    halvings = 0;
    res.trajectory.push_back({step, values, ev.loss, cfg.lr});
    losses.push_back(ev.loss);
    res.optimum.values = values;
    res.final_loss = ev.loss;
    if (step == adam.iterations) break;
    if (plateaued(losses, adam)) {
      res.early_stopped = true;
      break;
    }
    accepted = state;
    accepted_grad = mult ? Vector(ev.grad_u.cwiseProduct(values)) : ev.grad_u;
    state = clamp_state(accepted, accepted_grad, cfg, clamp);
  }
  return res;
}

SamplingConfig SamplingConfig::resolved(const SscmSpec& spec, LieGroup group) const {
  SamplingConfig out = *this;
  const int nt = spec.num_theta();
  if (out.theta_mean.size() == 0) out.theta_mean = spec.theta_ref;
  if (out.theta_stddev.size() == 0) {
    out.theta_stddev = (0.05 * spec.theta_ref.array().abs() + 0.01).matrix();
  }
  if (out.theta_mean.size() != nt || out.theta_stddev.size() != nt) {
    throw Error(ErrorCode::InvalidArgument, "theta sampling needs " + std::to_string(nt) +
                                                " means and standard deviations");
  }
  if (!(out.theta_stddev.array() > 0.0).all()) {
    throw Error(ErrorCode::InvalidArgument, "theta standard deviations must be > 0");
  }
  if (group == LieGroup::Multiplicative && !(out.u_lo > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "u_lo must be > 0 for multiplicative interventions");
  }
  if (!(out.u_lo <= out.u_hi)) throw Error(ErrorCode::InvalidArgument, "u_lo must be <= u_hi");
  if (out.batch < 1) throw Error(ErrorCode::InvalidArgument, "batch must be >= 1");
  return out;
}

Vector sample_theta(const SscmSpec& spec, const SamplingConfig& cfg, std::mt19937_64& rng) {
  const int nt = spec.num_theta();
  Vector theta(nt);
  for (int i = 0; i < nt; ++i) {
    const Interval box = spec.theta_box[i];
    std::normal_distribution<double> dist(cfg.theta_mean[i], cfg.theta_stddev[i]);
    int tries = 0;
    double v = dist(rng);
    while (v < box.lo || v > box.hi) {
      if (++tries > 10000) {
        throw Error(ErrorCode::InvalidArgument,
                    "theta sampler rejects everything for entry " + std::to_string(i));
      }
      v = dist(rng);
    }
    theta[i] = v;
  }
  return theta;
}

Vector sample_u(int size, LieGroup group, const SamplingConfig& cfg, std::mt19937_64& rng) {
  Vector u(size);
  if (group == LieGroup::Multiplicative) {
    std::uniform_real_distribution<double> dist(std::log(cfg.u_lo), std::log(cfg.u_hi));
    for (int a = 0; a < size; ++a) u[a] = std::exp(dist(rng));
  } else {
    std::uniform_real_distribution<double> dist(cfg.u_lo, cfg.u_hi);
    for (int a = 0; a < size; ++a) u[a] = dist(rng);
  }
  return u;
}

namespace {

struct BatchResult {
  double loss = 0.0;
  Vector grad;
  int used = 0;
  int failed = 0;
  std::string failure;
};

// Mean squared invariant-node deviation over a batch and its gradient in the
// policy weights. Samples whose solves fail are dropped and counted.
BatchResult invariance_batch(const TwinModel& twin, const Vector& weights,
                             const std::vector<Vector>& thetas, const std::vector<Vector>& us,
                             const SolverConfig& solver) {
  const int j = twin.plan.invariant;
  BatchResult br;
  br.grad = Vector::Zero(weights.size());
  std::vector<std::pair<ParamValues, Vector>> ok;
  std::vector<double> devs;
  for (std::size_t s = 0; s < thetas.size(); ++s) {
    try {
      const EquilibriumSolution ref =
          solve_equilibrium(twin.unintervened, twin.unintervened_params(thetas[s]), solver);
      if (!ref.report.converged) throw Error(ErrorCode::ForwardNotConverged, "unintervened solve");
      ParamValues p = twin.intervened_params(thetas[s], us[s], weights, ref.x_star[j]);
      const EquilibriumSolution sol = solve_equilibrium(twin.intervened, p, solver);
      if (!sol.report.converged) throw Error(ErrorCode::ForwardNotConverged, "intervened solve");
      devs.push_back(sol.x_star[j] - ref.x_star[j]);
      ok.emplace_back(std::move(p), sol.x_star);
    } catch (const Error& e) {
      ++br.failed;
      br.failure = e.what();
    }
  }
  br.used = static_cast<int>(ok.size());
  if (br.used == 0) return br;
  for (std::size_t s = 0; s < ok.size(); ++s) {
    br.loss += devs[s] * devs[s] / br.used;
    Vector cot = Vector::Zero(twin.intervened.dim());
    cot[j] = 2.0 * devs[s] / br.used;
    const ImplicitGradient ig = implicit_vjp(twin.intervened, ok[s].first, ok[s].second, cot, solver);
    if (!ig.adjoint_report.converged) {
      br.used = 0;
      br.failure = "adjoint solve did not converge";
      return br;
    }
    br.grad += gather(ig.grad_w, twin.policy_w_index);
  }
  return br;
}

}  // namespace

TrainingResult train_invariant_mlp(const TwinModel& twin, const Vector& initial_weights,
                                   const SamplingConfig& sampling, const AdamConfig& adam,
                                   const SolverConfig& solver) {
  adam.validate();
  solver.validate();
  if (initial_weights.size() != static_cast<Eigen::Index>(twin.policy_w_index.size())) {
    throw Error(ErrorCode::DimensionMismatch,
                "policy has " + std::to_string(twin.policy_w_index.size()) + " weights, got " +
                    std::to_string(initial_weights.size()));
  }
  const SamplingConfig cfg_s = sampling.resolved(twin.unintervened, twin.plan.group);
  const int nu = static_cast<int>(twin.plan.u_index.size());
  std::mt19937_64 rng(adam.seed);

  TrainingResult res;
  AdamConfig cfg = adam;
  AdamState state(initial_weights);
  AdamState previous = state;
  int halvings = 0;
  for (int step = 0; step < adam.iterations; ++step) {
    std::vector<Vector> thetas;
    std::vector<Vector> us;
    for (int b = 0; b < cfg_s.batch; ++b) {
      thetas.push_back(sample_theta(twin.unintervened, cfg_s, rng));
      us.push_back(sample_u(nu, twin.plan.group, cfg_s, rng));
    }
    const BatchResult br = invariance_batch(twin, state.params, thetas, us, solver);
    res.failed_solves += br.failed;
    if (br.used == 0 || !std::isfinite(br.loss) || !br.grad.allFinite()) {
      if (step == 0 || halvings >= kMaxHalvings) {
        res.aborted = true;
        res.failure = "SolveFailedDuringOptimization at step " + std::to_string(step) + ": " +
                      br.failure;
        break;
      }
      // the weights that produced this batch came from the last step; undo it
      ++halvings;
      cfg.lr *= 0.5;
      state = previous;
      continue;
    }
    halvings = 0;
    res.losses.push_back(br.loss);
    res.final_loss = br.loss;
    res.steps = step + 1;
    if (plateaued(res.losses, adam)) {
      res.early_stopped = true;
      break;
    }
    previous = state;
    state = adam_step(state, br.grad, cfg);
  }
  res.weights = state.params;
  return res;
}

InvarianceEvaluation evaluate_invariance(const TwinModel& twin, const Vector& weights,
                                         const std::vector<Vector>& thetas,
                                         const std::vector<Vector>& us,
                                         const SolverConfig& solver) {
  if (thetas.size() != us.size()) {
    throw Error(ErrorCode::DimensionMismatch, "need one u per theta sample");
  }
  const int j = twin.plan.invariant;
  InvarianceEvaluation out;
  double total = 0.0;
  for (std::size_t s = 0; s < thetas.size(); ++s) {
    const EquilibriumSolution ref =
        solve_equilibrium(twin.unintervened, twin.unintervened_params(thetas[s]), solver);
    const EquilibriumSolution sol =
        solve_equilibrium(twin.deployed, twin.deployed_params(thetas[s], us[s], weights), solver);
    if (!ref.report.converged || !sol.report.converged) {
      ++out.failed_solves;
      continue;
    }
    const double scale = std::max(std::abs(ref.x_star[j]), 1e-12);
    const double dev = std::abs(sol.x_star[j] - ref.x_star[j]) / scale;
    out.max_relative_deviation = std::max(out.max_relative_deviation, dev);
    total += dev;
    ++out.samples;
  }
  if (out.samples > 0) out.mean_relative_deviation = total / out.samples;
  return out;
}

std::vector<TradeoffPoint> pareto_sweep(const ParetoProblem& problem, std::vector<double> lambdas,
                                        const AdamConfig& adam, const SolverConfig& solver) {
  const SscmSpec& spec = problem.spec;
  const int d = spec.dim();
  if (lambdas.empty()) throw Error(ErrorCode::InvalidArgument, "lambda list is empty");
  for (double l : lambdas) {
    if (!(l >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda values must be >= 0");
  }
  if (problem.c.size() != d || problem.r_emp.size() != d) {
    throw Error(ErrorCode::DimensionMismatch, "impact rows must have one entry per node");
  }
  std::vector<int> targets = problem.targets;
  if (targets.empty()) {
    for (int k = 0; k < d; ++k) targets.push_back(k);
  }
  const EquilibriumSolution ref = solve_equilibrium(spec, reference_params(spec), solver);
  if (!ref.report.converged) {
    throw Error(ErrorCode::ForwardNotConverged, "reference equilibrium did not converge");
  }
  const Vector e_star = problem.r_emp.cwiseProduct(ref.x_star);

  std::sort(lambdas.begin(), lambdas.end());
  // a repeated lambda reuses its first result instead of restarting warm
  std::map<double, TradeoffPoint> done;
  LieElement warm = identity(LieGroup::Multiplicative, targets);
  std::vector<TradeoffPoint> out;
  for (double lambda : lambdas) {
    if (auto it = done.find(lambda); it != done.end()) {
      out.push_back(it->second);
      continue;
    }
    TradeoffPoint pt;
    pt.lambda = lambda;
    const ExprGraph loss = ghg_employment_loss_graph(problem.c, problem.r_emp, e_star, lambda);
    const OptimizationResult r =
        optimize_lie_intervention(spec, warm, loss, adam, solver, problem.bounds);
    if (r.trajectory.empty()) {
      pt.failed = true;
      pt.failure = r.failure;
      pt.values = warm.values;
    } else {
      if (r.aborted) {
        pt.failed = true;
        pt.failure = r.failure;
      }
      warm = r.optimum;
      pt.values = r.optimum.values;
      pt.loss = r.final_loss;
      const SscmSpec lie = apply(spec, r.optimum);
      const EquilibriumSolution sol = solve_equilibrium(lie, reference_params(lie), solver);
      pt.ghg_total = problem.c.dot(sol.x_star);
      pt.employment_deltas = problem.r_emp.cwiseProduct(sol.x_star) - e_star;
      pt.employment_l1_deviation = pt.employment_deltas.lpNorm<1>();

      const int n = static_cast<int>(r.trajectory.size());
      double g_lo = pt.ghg_total, g_hi = pt.ghg_total;
      double e_lo = pt.employment_l1_deviation, e_hi = pt.employment_l1_deviation;
      ParamValues p = reference_params(lie);
      const std::vector<int> u_index = appended_u_index(spec, r.optimum);
      for (int s = std::max(0, n - problem.jitter_window); s < n; ++s) {
        for (std::size_t a = 0; a < u_index.size(); ++a) {
          p.u[u_index[a]] = r.trajectory[s].values[a];
        }
        const EquilibriumSolution si = solve_equilibrium(lie, p, solver);
        if (!si.report.converged) continue;
        const double gh = problem.c.dot(si.x_star);
        const double em = (problem.r_emp.cwiseProduct(si.x_star) - e_star).lpNorm<1>();
        g_lo = std::min(g_lo, gh);
        g_hi = std::max(g_hi, gh);
        e_lo = std::min(e_lo, em);
        e_hi = std::max(e_hi, em);
      }
      pt.ghg_jitter = g_hi - g_lo;
      pt.employment_jitter = e_hi - e_lo;
    }
    done.emplace(lambda, pt);
    out.push_back(pt);
  }
  return out;
}

bool pareto_monotone(const std::vector<TradeoffPoint>& points) {
  const TradeoffPoint* prev = nullptr;
  for (const TradeoffPoint& pt : points) {
    if (pt.failed) continue;
    if (prev) {
      const double g_tol = prev->ghg_jitter + pt.ghg_jitter;
      const double e_tol = prev->employment_jitter + pt.employment_jitter;
      if (pt.ghg_total < prev->ghg_total - g_tol) return false;
      if (pt.employment_l1_deviation > prev->employment_l1_deviation + e_tol) return false;
    }
    prev = &pt;
  }
  return true;
}

}  // namespace eqcausal
