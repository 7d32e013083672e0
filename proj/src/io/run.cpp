#include "run.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

#include "error.hpp"

namespace eqcausal {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "SHA-256 digest failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) {
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return out.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

json mlp_to_json(const MlpSpec& spec, const Vector& weights) {
  if (weights.size() != spec.param_count()) {
    throw Error(ErrorCode::DimensionMismatch, "MLP has " + std::to_string(spec.param_count()) +
                                                  " weights, got " +
                                                  std::to_string(weights.size()));
  }
  json layers = json::array();
  const auto w = spec.widths();
  int pos = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const int in = w[l];
    const int out = w[l + 1];
    std::vector<double> m(weights.data() + pos, weights.data() + pos + out * in);
    std::vector<double> b(weights.data() + pos + out * in, weights.data() + pos + out * in + out);
    pos += out * in + out;
    layers.push_back({{"rows", out},
                      {"cols", in},
                      {"activation", l + 2 == w.size() ? "linear" : "relu"},
                      {"weights", m},
                      {"bias", b}});
  }
  return {{"input_dim", spec.input_dim},
          {"hidden", spec.hidden},
          {"output_dim", spec.output_dim},
          {"layers", layers}};
}

std::pair<MlpSpec, Vector> mlp_from_json(const json& doc) {
  try {
    MlpSpec spec;
    spec.input_dim = doc.at("input_dim").get<int>();
    spec.hidden = doc.at("hidden").get<std::vector<int>>();
    spec.output_dim = doc.at("output_dim").get<int>();
    spec.validate();
    const auto w = spec.widths();
    const json& layers = doc.at("layers");
    if (layers.size() + 1 != w.size()) {
      throw Error(ErrorCode::DimensionMismatch, "layer count does not match the widths");
    }
    Vector weights(spec.param_count());
    int pos = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto m = layers[l].at("weights").get<std::vector<double>>();
      const auto b = layers[l].at("bias").get<std::vector<double>>();
      if (layers[l].at("rows").get<int>() != w[l + 1] || layers[l].at("cols").get<int>() != w[l] ||
          m.size() != static_cast<std::size_t>(w[l + 1] * w[l]) ||
          b.size() != static_cast<std::size_t>(w[l + 1])) {
        throw Error(ErrorCode::DimensionMismatch, "layer " + std::to_string(l) + " has the wrong shape");
      }
      for (double v : m) weights[pos++] = v;
      for (double v : b) weights[pos++] = v;
    }
    return {spec, weights};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("MLP document: ") + e.what());
  }
}

bool RunManifest::ok() const {
  return std::all_of(stages.begin(), stages.end(), [](const StageReport& s) { return s.ok; });
}

json RunManifest::to_json() const {
  json st = json::array();
  for (const StageReport& s : stages) {
    st.push_back({{"name", s.name},
                  {"ok", s.ok},
                  {"message", s.message},
                  {"seconds", s.seconds},
                  {"metrics", s.metrics}});
  }
  auto files = [](const std::vector<OutputFile>& v) {
    json a = json::array();
    for (const OutputFile& f : v) a.push_back({{"file", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    return a;
  };
  return {{"command", command},
          {"config_hash", config_hash},
          {"library_version", library_version},
          {"seed", seed},
          {"started_at", started_at},
          {"wall_clock_seconds", wall_clock_seconds},
          {"exit_code", exit_code()},
          {"stages", st},
          {"inputs", files(inputs)},
          {"outputs", files(outputs)},
          {"warnings", warnings}};
}

int thread_budget() {
  const char* env = std::getenv("EQCAUSAL_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return std::max(1, n);
}

namespace {

using Clock = std::chrono::steady_clock;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string num(double v) { return format_double(v); }

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

class Run {
 public:
  Run(const ExperimentConfig& cfg, RunManifest& m) : cfg_(cfg), m_(m) {}

  void write(const std::string& name, const std::string& text) {
    const fs::path path = cfg_.output / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    out.close();
    m_.outputs.push_back({name, sha256_hex(text), text.size()});
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  // Runs fn as a named stage unless an earlier stage failed.
  bool stage(const std::string& name, const std::function<void(StageReport&)>& fn) {
    if (!m_.ok()) return false;
    StageReport rep;
    rep.name = name;
    const auto t0 = Clock::now();
    try {
      fn(rep);
    } catch (const std::exception& e) {
      rep.ok = false;
      rep.message = e.what();
    }
    rep.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    m_.stages.push_back(rep);
    return rep.ok;
  }

  void warn(const std::string& w) { m_.warnings.push_back(w); }

  const ExperimentConfig& cfg() const { return cfg_; }

 private:
  const ExperimentConfig& cfg_;
  RunManifest& m_;
};

struct LoadedModel {
  SscmSpec spec;
  std::optional<IoTable> table;
};

IoTable load_table(const ExperimentConfig& cfg, Run& run) {
  if (cfg.model.csv) {
    std::vector<std::string> w;
    IoTable t = load_iotable_csv(*cfg.model.csv, &w);
    for (const auto& s : w) run.warn(s);
    return t;
  }
  return synthetic_iotable(cfg.model.synthetic_dim(), 0.9, cfg.seed);
}

LoadedModel load_model(const ExperimentConfig& cfg, Run& run) {
  LoadedModel lm;
  if (cfg.model.has_table()) {
    lm.table = load_table(cfg, run);
    std::vector<std::string> w;
    lm.spec = leontief_model(*lm.table, {}, &w);
    for (const auto& s : w) run.warn(s);
  } else if (cfg.model.zoo == "motivating-example") {
    lm.spec = motivating_example();
  } else if (cfg.model.zoo == "rebound-3sector") {
    lm.spec = rebound_3sector(cfg.invariant.target_elasticity).spec;
  } else if (cfg.model.zoo == "two-compartment") {
    lm.spec = two_compartment_model().base;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown model '" + cfg.model.zoo + "'");
  }
  return lm;
}

Vector impact_row(const IoTable& t, const std::string& name) {
  const int r = t.impact_row(name);
  if (r < 0) throw Error(ErrorCode::InvalidArgument, "R has no row '" + name + "'");
  return t.R.row(r).transpose();
}

Vector broadcast(const std::vector<double>& v, int n, double def) {
  if (v.empty()) return Vector::Constant(n, def);
  if (v.size() == 1) return Vector::Constant(n, v[0]);
  return Eigen::Map<const Vector>(v.data(), n);
}

std::vector<int> targets_of(const ExperimentConfig& cfg, int d) {
  if (!cfg.intervention.targets.empty()) return cfg.intervention.targets;
  std::vector<int> t(d);
  for (int k = 0; k < d; ++k) t[k] = k;
  return t;
}

std::optional<InterventionBounds> bounds_of(const ExperimentConfig& cfg, int n) {
  const InterventionDecl& iv = cfg.intervention;
  const double inf = std::numeric_limits<double>::infinity();
  if (iv.group == LieGroup::Multiplicative) {
    return InterventionBounds{broadcast(iv.lo, n, 0.5), broadcast(iv.hi, n, 1.5)};
  }
  if (iv.lo.empty() && iv.hi.empty()) return std::nullopt;
  return InterventionBounds{broadcast(iv.lo, n, -inf), broadcast(iv.hi, n, inf)};
}

SamplingConfig sampling_for(const ExperimentConfig& cfg, double lo, double hi) {
  SamplingConfig s = cfg.sampling;
  if (!cfg.u_range_given) {
    s.u_lo = lo;
    s.u_hi = hi;
  }
  return s;
}

std::string node_name(const SscmSpec& s, int k) {
  return k < static_cast<int>(s.names.size()) ? s.names[k] : std::to_string(k);
}

// ---------------------------------------------------------------- commands

void run_solve(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  LoadedModel lm;
  if (!run.stage("load-model", [&](StageReport& r) {
        lm = load_model(cfg, run);
        r.metrics = {{"nodes", lm.spec.dim()}, {"theta", lm.spec.num_theta()}};
      })) {
    return;
  }
  run.stage("solve", [&](StageReport& r) {
    const EquilibriumSolution sol = solve_equilibrium(lm.spec, lm.spec.theta_ref, cfg.solver);
    std::optional<Vector> oracle;
    if (lm.table) oracle = leontief_closed_form(lm.table->A, lm.table->y);
    if (cfg.model.zoo == "motivating-example") oracle = motivating_closed_form(lm.spec.theta_ref);

    std::vector<std::string> header = {"node", "name", "value"};
    if (oracle) header.push_back("closed_form");
    CsvWriter w(header);
    for (int k = 0; k < lm.spec.dim(); ++k) {
      std::vector<std::string> row = {std::to_string(k), node_name(lm.spec, k), num(sol.x_star[k])};
      if (oracle) row.push_back(num((*oracle)[k]));
      w.row(row);
    }
    run.write("equilibrium.csv", w.str());

    r.metrics = {{"converged", sol.report.converged},
                 {"iterations", sol.report.iterations},
                 {"relative_error", sol.report.relative_error},
                 {"residual_norm", sol.report.residual_norm}};
    if (oracle) {
      r.metrics["closed_form_relative_error"] =
          (sol.x_star - *oracle).norm() / std::max(oracle->norm(), 1e-300);
    }
    if (sol.report.converged) {
      const DiffeomorphismReport d =
          check_local_diffeomorphism(lm.spec, sol.x_star, lm.spec.theta_ref, 1e8, cfg.solver.tol);
      r.metrics["jacobian_invertible"] = d.jacobian_invertible;
      r.metrics["condition_number"] = d.condition_number;
    }
    run.write_json("solve.json", r.metrics);
    if (!sol.report.converged) {
      r.ok = false;
      r.message = "solver did not converge";
    }
  });
}

void run_grad_check(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  LoadedModel lm;
  if (!run.stage("load-model", [&](StageReport&) { lm = load_model(cfg, run); })) return;
  run.stage("grad-check", [&](StageReport& r) {
    const Vector w = lm.table ? impact_row(*lm.table, cfg.loss.objective)
                              : Vector(Vector::Ones(lm.spec.dim()));
    const GradCheckReport g =
        grad_check(lm.spec, lm.spec.theta_ref, linear_loss(w), cfg.solver, cfg.grad_check.step);
    CsvWriter out({"theta", "name", "implicit", "finite_difference"});
    for (int i = 0; i < lm.spec.num_theta(); ++i) {
      const std::string name =
          i < static_cast<int>(lm.spec.theta_names.size()) ? lm.spec.theta_names[i] : "";
      out.row({std::to_string(i), name, num(g.implicit_gradient[i]),
               num(g.finite_difference_gradient[i])});
    }
    run.write("grad_check.csv", out.str());
    r.metrics = {{"max_relative_deviation", g.max_relative_deviation},
                 {"tolerance", cfg.grad_check.tolerance},
                 {"solver_tol", g.solver_tol},
                 {"step", g.step},
                 {"forward_converged", g.forward_converged}};
    run.write_json("grad_check.json", r.metrics);
    if (!g.forward_converged || !(g.max_relative_deviation < cfg.grad_check.tolerance)) {
      r.ok = false;
      r.message = "implicit and finite-difference gradients disagree";
    }
  });
}

void run_optimize(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  IoTable table;
  SscmSpec spec;
  if (!run.stage("load-model", [&](StageReport&) {
        table = load_table(cfg, run);
        spec = leontief_model(table);
      })) {
    return;
  }
  run.stage("optimize", [&](StageReport& r) {
    const std::vector<int> targets = targets_of(cfg, spec.dim());
    const int n = static_cast<int>(targets.size());
    LieElement g0 = identity(cfg.intervention.group, targets);
    if (!cfg.intervention.initial.empty()) {
      g0.values = broadcast(cfg.intervention.initial, n, 0.0);
    }
    const EquilibriumSolution ref = solve_equilibrium(spec, spec.theta_ref, cfg.solver);
    if (!ref.report.converged) throw Error(ErrorCode::ForwardNotConverged, "reference solve");
    const Vector c = impact_row(table, cfg.loss.objective);
    const Vector rr = impact_row(table, cfg.loss.regularizer);
    const Vector e_star = rr.cwiseProduct(ref.x_star);
    const ExprGraph loss = ghg_employment_loss_graph(c, rr, e_star, cfg.loss.lambda);
    const OptimizationResult res =
        optimize_lie_intervention(spec, g0, loss, cfg.adam, cfg.solver, bounds_of(cfg, n));

    std::vector<std::string> header = {"step", "loss", "lr"};
    for (int k : targets) header.push_back("u_" + table.sectors[k]);
    CsvWriter w(header);
    for (const TrajectoryPoint& p : res.trajectory) {
      std::vector<std::string> row = {std::to_string(p.step), num(p.loss), num(p.lr)};
      for (int a = 0; a < n; ++a) row.push_back(num(p.values[a]));
      w.row(row);
    }
    run.write("trajectory.csv", w.str());

    r.metrics = {{"final_loss", res.final_loss},
                 {"steps", res.trajectory.size()},
                 {"aborted", res.aborted},
                 {"failed_solves", res.failed_solves},
                 {"early_stopped", res.early_stopped},
                 {"optimum", vec_json(res.optimum.values)},
                 {"targets", targets},
                 {"group", std::string(to_string(res.optimum.group))}};
    if (!res.trajectory.empty()) {
      const SscmSpec lie = apply(spec, res.optimum);
      const EquilibriumSolution sol = solve_equilibrium(lie, reference_params(lie), cfg.solver);
      r.metrics["ghg_total"] = c.dot(sol.x_star);
      r.metrics["ghg_reference"] = c.dot(ref.x_star);
      r.metrics["employment_l1_deviation"] = (rr.cwiseProduct(sol.x_star) - e_star).lpNorm<1>();
    }
    if (res.early_stopped) r.metrics["note"] = "plateau early stop";
    run.write_json("optimum.json", r.metrics);
    if (res.aborted) {
      r.ok = false;
      r.message = res.failure;
    }
  });
}

void run_pareto(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  IoTable table;
  ParetoProblem pp;
  if (!run.stage("load-model", [&](StageReport&) {
        table = load_table(cfg, run);
        pp.spec = leontief_model(table);
      })) {
    return;
  }
  run.stage("pareto", [&](StageReport& r) {
    if (cfg.intervention.group != LieGroup::Multiplicative) {
      throw Error(ErrorCode::InvalidArgument, "the Pareto sweep uses multiplicative interventions");
    }
    pp.c = impact_row(table, cfg.loss.objective);
    pp.r_emp = impact_row(table, cfg.loss.regularizer);
    pp.targets = targets_of(cfg, pp.spec.dim());
    const int n = static_cast<int>(pp.targets.size());
    pp.bounds = *bounds_of(cfg, n);
    const std::vector<TradeoffPoint> pts = pareto_sweep(pp, cfg.loss.lambdas, cfg.adam, cfg.solver);

    std::vector<std::string> header = {"lambda",    "ghg_total",         "employment_l1_deviation",
                                       "ghg_jitter", "employment_jitter", "loss",
                                       "failed"};
    for (int k : pp.targets) header.push_back("alpha_" + table.sectors[k]);
    CsvWriter w(header);
    CsvWriter deltas({"lambda", "rank", "sector", "employment_delta"});
    int failed = 0;
    for (const TradeoffPoint& p : pts) {
      failed += p.failed;
      std::vector<std::string> row = {num(p.lambda),     num(p.ghg_total),
                                      num(p.employment_l1_deviation),
                                      num(p.ghg_jitter), num(p.employment_jitter),
                                      num(p.loss),       p.failed ? "1" : "0"};
      for (int a = 0; a < n; ++a) row.push_back(a < p.values.size() ? num(p.values[a]) : "");
      w.row(row);
      // largest employment reduction first
      std::vector<int> order(p.employment_deltas.size());
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return p.employment_deltas[a] < p.employment_deltas[b];
      });
      for (std::size_t i = 0; i < order.size(); ++i) {
        deltas.row({num(p.lambda), std::to_string(i + 1), table.sectors[order[i]],
                    num(p.employment_deltas[order[i]])});
      }
    }
    run.write("tradeoff.csv", w.str());
    run.write("employment_deltas.csv", deltas.str());
    r.metrics = {{"points", pts.size()}, {"failed_points", failed}, {"monotone", pareto_monotone(pts)}};
    run.write_json("pareto.json", r.metrics);
    if (failed) {
      r.ok = false;
      r.message = std::to_string(failed) + " lambda values failed";
    }
  });
}

struct TrainedTwin {
  TwinModel twin;
  MlpSpec mlp;
  Vector w0;
  SamplingConfig sampling;
  std::optional<ReboundInstance> rebound;
};

void run_invariant(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  TrainedTwin tt;
  if (!run.stage("build-twin", [&](StageReport& r) {
        MlpSpec mlp;
        mlp.hidden = cfg.invariant.hidden;
        mlp.seed = cfg.seed;
        if (cfg.model.zoo == "motivating-example") {
          const MotivatingTwin t = motivating_mlp_twin(mlp);
          tt.twin = t.twin;
          tt.mlp = t.plan.policy.mlp;
          tt.w0 = t.plan.policy.w;
          tt.sampling = sampling_for(cfg, 0.5, 2.0);
        } else {
          tt.rebound = rebound_3sector(cfg.invariant.target_elasticity);
          const InvariantInterventionSpec plan = rebound_invariant_plan(*tt.rebound, mlp);
          tt.twin = build_invariant_model(tt.rebound->spec, plan);
          tt.mlp = plan.policy.mlp;
          tt.w0 = plan.policy.w;
          tt.sampling = sampling_for(cfg, 0.6, 1.0);
        }
        r.metrics = {{"intervened", node_name(tt.twin.deployed, tt.twin.plan.intervened)},
                     {"invariant", node_name(tt.twin.deployed, tt.twin.plan.invariant)},
                     {"auxiliary", node_name(tt.twin.deployed, tt.twin.plan.auxiliary)},
                     {"policy_weights", tt.w0.size()}};
      })) {
    return;
  }
  TrainingResult tr;
  if (!run.stage("train", [&](StageReport& r) {
        tr = train_invariant_mlp(tt.twin, tt.w0, tt.sampling, cfg.adam, cfg.solver);
        CsvWriter w({"step", "loss"});
        for (std::size_t i = 0; i < tr.losses.size(); ++i) w.row({std::to_string(i), num(tr.losses[i])});
        run.write("training_loss.csv", w.str());
        run.write_json("policy.json", mlp_to_json(tt.mlp, tr.weights));
        r.metrics = {{"final_loss", tr.final_loss},
                     {"steps", tr.steps},
                     {"failed_solves", tr.failed_solves},
                     {"early_stopped", tr.early_stopped}};
        if (tr.aborted) {
          r.ok = false;
          r.message = tr.failure;
        }
      })) {
    return;
  }
  run.stage("evaluate", [&](StageReport& r) {
    const SamplingConfig sc = tt.sampling.resolved(tt.twin.unintervened, tt.twin.plan.group);
    std::mt19937_64 rng(cfg.seed + 1);
    std::vector<Vector> thetas, us;
    for (int i = 0; i < cfg.invariant.eval_samples; ++i) {
      thetas.push_back(sample_theta(tt.twin.unintervened, sc, rng));
      us.push_back(sample_u(static_cast<int>(tt.twin.plan.u_index.size()), tt.twin.plan.group, sc, rng));
    }
    const InvarianceEvaluation ev = evaluate_invariance(tt.twin, tr.weights, thetas, us, cfg.solver);
    const InvarianceEvaluation ev0 = evaluate_invariance(tt.twin, tt.w0, thetas, us, cfg.solver);
    r.metrics = {{"heldout_samples", ev.samples},
                 {"failed_solves", ev.failed_solves},
                 {"max_relative_deviation", ev.max_relative_deviation},
                 {"mean_relative_deviation", ev.mean_relative_deviation},
                 {"untrained_max_relative_deviation", ev0.max_relative_deviation},
                 {"tolerance", cfg.invariant.tolerance}};
    bool ok = ev.samples > 0 && ev.max_relative_deviation < cfg.invariant.tolerance;

    if (tt.rebound) {
      // reference / Lie-intervened / invariantly intervened energy demand
      const int d = tt.rebound->table.dim();
      const int e = tt.rebound->options.energy;
      CsvWriter w({"elasticity", "u", "reference", "lie", "invariant"});
      json backfire = json::array();
      bool below = true;
      for (double eps : cfg.invariant.elasticities) {
        const ReboundInstance inst = rebound_3sector(eps);
        const EquilibriumSolution ref = solve_equilibrium(inst.spec, inst.spec.theta_ref, cfg.solver);
        const double e_ref = rebound_energy_demand(ref.x_star, d, e);
        bool fires = false;
        for (double u : cfg.invariant.u_grid) {
          ParamValues p = reference_params(inst.spec);
          p.u[0] = u;
          const EquilibriumSolution lie = solve_equilibrium(inst.spec, p, cfg.solver);
          const double e_lie = rebound_energy_demand(lie.x_star, d, e);
          fires = fires || e_lie > e_ref;
          std::string inv;
          if (eps == cfg.invariant.target_elasticity) {
            const EquilibriumSolution s = solve_equilibrium(
                tt.twin.deployed,
                tt.twin.deployed_params(tt.twin.unintervened.theta_ref, Vector::Constant(1, u),
                                        tr.weights),
                cfg.solver);
            const double e_inv = rebound_energy_demand(s.x_star, d, e);
            below = below && e_inv < e_ref;
            inv = num(e_inv);
          }
          w.row({num(eps), num(u), num(e_ref), num(e_lie), inv});
        }
        if (fires) backfire.push_back(eps);
      }
      run.write("rebound_energy.csv", w.str());
      r.metrics["backfire_elasticities"] = backfire;
      r.metrics["invariant_below_reference"] = below;
      ok = ok && below;
    }
    run.write_json("invariance.json", r.metrics);
    if (!ok) {
      r.ok = false;
      r.message = "learned policy misses the invariance target";
    }
  });
}

void run_compartment(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  TwoCompartmentInstance inst;
  std::vector<InvariantInterventionSpec> plans;
  if (!run.stage("build-model", [&](StageReport& r) {
        inst = two_compartment_model();
        plans = inst.plan.interventions;
        r.metrics = {{"compartments", plans.size()}};
      })) {
    return;
  }
  std::vector<std::vector<double>> losses(plans.size());
  if (!run.stage("train", [&](StageReport& r) {
        json per = json::array();
        for (std::size_t m = 0; m < plans.size(); ++m) {
          MlpSpec mlp;
          mlp.hidden = cfg.compartment.hidden;
          mlp.seed = cfg.seed + m;
          plans[m].policy =
              mlp_policy(inst.lie, plans[m].auxiliary, plans[m].u_index, plans[m].group, mlp);
          const TwinModel twin = build_invariant_model(inst.lie, plans[m]);
          AdamConfig adam = cfg.adam;
          adam.seed = cfg.seed + m;
          const TrainingResult tr = train_invariant_mlp(
              twin, plans[m].policy.w, sampling_for(cfg, 0.5, 2.0), adam, cfg.solver);
          if (tr.aborted) throw Error(ErrorCode::SolveFailedDuringOptimization, tr.failure);
          plans[m].policy.w = tr.weights;
          losses[m] = tr.losses;
          per.push_back({{"final_loss", tr.final_loss}, {"steps", tr.steps}});
        }
        std::vector<std::string> header = {"step"};
        for (std::size_t m = 0; m < plans.size(); ++m) header.push_back("loss_c" + std::to_string(m));
        CsvWriter w(header);
        std::size_t steps = 0;
        for (const auto& l : losses) steps = std::max(steps, l.size());
        for (std::size_t i = 0; i < steps; ++i) {
          std::vector<std::string> row = {std::to_string(i)};
          for (const auto& l : losses) row.push_back(i < l.size() ? num(l[i]) : "");
          w.row(row);
        }
        run.write("compartment_training.csv", w.str());
        json pol = json::array();
        for (const auto& p : plans) pol.push_back(mlp_to_json(p.policy.mlp, p.policy.w));
        run.write_json("policies.json", pol);
        r.metrics = {{"compartments", per}};
      })) {
    return;
  }
  run.stage("check", [&](StageReport& r) {
    const SscmSpec deployed = deploy_policies(inst.lie, plans);
    CompartmentPlan plan{inst.plan.partition, plans};
    CompartmentSamples samples;
    const SamplingConfig sc =
        sampling_for(cfg, 0.5, 2.0).resolved(inst.lie, LieGroup::Multiplicative);
    std::mt19937_64 rng(cfg.seed + 1);
    for (int i = 0; i < cfg.compartment.theta_samples; ++i) {
      samples.thetas.push_back(sample_theta(inst.lie, sc, rng));
    }
    for (std::size_t m = 0; m < plans.size(); ++m) {
      std::vector<Vector> g;
      for (double u : cfg.compartment.grid) g.push_back(Vector::Constant(1, u));
      samples.grids.push_back(g);
    }
    const CompartmentReport rep = check_compartmentalization(deployed, plan, samples, cfg.solver);
    const double min_own = *std::min_element(rep.own_variation.begin(), rep.own_variation.end());
    r.metrics = {{"structural_ok", rep.structural_ok},
                 {"structural_violations", rep.structural_violations},
                 {"cross_deviation", rep.cross_deviation},
                 {"own_variation", rep.own_variation},
                 {"max_cross_deviation", rep.max_cross_deviation},
                 {"failed_solves", rep.failed_solves},
                 {"tolerance", cfg.compartment.tolerance},
                 {"min_own_variation", cfg.compartment.min_own_variation}};
    run.write_json("compartment.json", r.metrics);
    if (!rep.structural_ok || rep.failed_solves > 0 ||
        !(rep.max_cross_deviation < cfg.compartment.tolerance) ||
        !(min_own > cfg.compartment.min_own_variation)) {
      r.ok = false;
      r.message = "compartments are not isolated";
    }
  });
}

struct BenchCell {
  double relative_error = 0.0;
  double solution_error = 0.0;
  int iterations = 0;
  bool converged = false;
};

void run_bench(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  const BenchSettings& b = cfg.bench;
  run.stage("bench", [&](StageReport& r) {
    const int nd = static_cast<int>(b.dims.size());
    const int nm = static_cast<int>(b.methods.size());
    const int ns = b.seeds;
    std::vector<BenchCell> cells(static_cast<std::size_t>(nd) * nm * ns);
    std::vector<std::string> errors(static_cast<std::size_t>(nd) * ns);
    std::atomic<int> next{0};
    auto work = [&] {
      for (int job = next++; job < nd * ns; job = next++) {
        const int di = job / ns;
        const int s = job % ns;
        try {
          const IoTable t = synthetic_iotable(b.dims[di], b.radius, cfg.seed + s);
          const SscmSpec spec = leontief_model(t);
          const Vector truth = leontief_closed_form(t.A, t.y);
          for (int mi = 0; mi < nm; ++mi) {
            const EquilibriumSolution sol =
                solve_equilibrium(spec, spec.theta_ref, b.methods[mi].solver);
            BenchCell& c = cells[(static_cast<std::size_t>(di) * nm + mi) * ns + s];
            c.relative_error = sol.report.relative_error;
            c.solution_error = (sol.x_star - truth).norm() / truth.norm();
            c.iterations = sol.report.iterations;
            c.converged = sol.report.converged;
          }
        } catch (const std::exception& e) {
          errors[job] = e.what();
        }
      }
    };
    const int threads = std::min(thread_budget(), nd * ns);
    std::vector<std::thread> pool;
    for (int i = 1; i < threads; ++i) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (!e.empty()) throw Error(ErrorCode::InvalidArgument, e);
    }

    auto mean_std = [](const std::vector<double>& v) {
      double m = 0.0;
      for (double x : v) m += x;
      m /= v.size();
      double s = 0.0;
      for (double x : v) s += (x - m) * (x - m);
      return std::pair{m, std::sqrt(s / v.size())};
    };
    CsvWriter w({"dim", "method", "relaxation", "mean_relative_error", "std_relative_error",
                 "max_relative_error", "mean_solution_error", "mean_iterations", "std_iterations",
                 "converged_fraction"});
    json table = json::array();
    bool all_converged = true;
    for (int di = 0; di < nd; ++di) {
      for (int mi = 0; mi < nm; ++mi) {
        std::vector<double> err, sol_err, it;
        int conv = 0;
        for (int s = 0; s < ns; ++s) {
          const BenchCell& c = cells[(static_cast<std::size_t>(di) * nm + mi) * ns + s];
          err.push_back(c.relative_error);
          sol_err.push_back(c.solution_error);
          it.push_back(c.iterations);
          conv += c.converged;
        }
        const auto [em, es] = mean_std(err);
        const auto [im, is] = mean_std(it);
        const double emax = *std::max_element(err.begin(), err.end());
        const BenchMethod& m = b.methods[mi];
        const double relax = m.solver.method == SolverMethod::Anderson ? m.solver.relaxation : 1.0;
        w.row({std::to_string(b.dims[di]), m.label, num(relax), num(em), num(es), num(emax),
               num(mean_std(sol_err).first), num(im), num(is),
               num(static_cast<double>(conv) / ns)});
        table.push_back({{"dim", b.dims[di]},
                         {"method", m.label},
                         {"mean_relative_error", em},
                         {"max_relative_error", emax},
                         {"mean_iterations", im},
                         {"converged_fraction", static_cast<double>(conv) / ns}});
        all_converged = all_converged && conv == ns;
      }
    }
    run.write("bench.csv", w.str());
    r.metrics = {{"cells", table}, {"threads", threads}, {"all_converged", all_converged}};
    run.write_json("bench.json", r.metrics);
    if (!all_converged) {
      r.ok = false;
      r.message = "some solves did not converge";
    }
  });
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& cfg) {
  RunManifest m;
  m.command = std::string(to_string(cfg.command));
  m.seed = cfg.seed;
  m.started_at = utc_now();
  m.config_hash = sha256_hex(config_to_json(cfg).dump());
  const auto t0 = Clock::now();

  std::error_code ec;
  fs::create_directories(cfg.output, ec);
  if (ec || !fs::is_directory(cfg.output)) {
    throw Error(ErrorCode::IoError, "cannot create output directory " + cfg.output.string());
  }
  if (cfg.model.csv) {
    for (const fs::path& p : {cfg.model.csv->A, cfg.model.csv->R, cfg.model.csv->y}) {
      m.inputs.push_back({p.string(), sha256_file(p), fs::file_size(p)});
    }
  }

  Run run(cfg, m);
  switch (cfg.command) {
    case Command::Solve: run_solve(run); break;
    case Command::GradCheck: run_grad_check(run); break;
    case Command::Optimize: run_optimize(run); break;
    case Command::Pareto: run_pareto(run); break;
    case Command::Invariant: run_invariant(run); break;
    case Command::Compartment: run_compartment(run); break;
    case Command::Bench: run_bench(run); break;
  }
  m.wall_clock_seconds = std::chrono::duration<double>(Clock::now() - t0).count();

  const fs::path manifest = cfg.output / "manifest.json";
  std::ofstream out(manifest, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + manifest.string());
  out << m.to_json().dump(2) << "\n";
  return m;
}

}  // namespace eqcausal
