#include "eqcausal/eqcausal.h"

#include <cstring>
#include <fstream>
#include <sstream>

#include "config.hpp"
#include "deq.hpp"
#include "error.hpp"
#include "interventions.hpp"
#include "modelzoo.hpp"
#include "run.hpp"
#include "sscm_json.hpp"

struct eqc_model {
  eqcausal::SscmSpec spec;
};

namespace {

using namespace eqcausal;

thread_local std::string g_last_error;

eqc_status status_of(ErrorCode c) {
  switch (c) {
    case ErrorCode::ParseError: return EQC_ERR_PARSE;
    case ErrorCode::SchemaError: return EQC_ERR_SCHEMA;
    case ErrorCode::IoError: return EQC_ERR_IO;
    case ErrorCode::DimensionMismatch:
    case ErrorCode::ShapeMismatch: return EQC_ERR_DIMENSION;
    case ErrorCode::NegativeEntry: return EQC_ERR_NEGATIVE_ENTRY;
    case ErrorCode::ForwardNotConverged:
    case ErrorCode::AdjointNotConverged: return EQC_ERR_NOT_CONVERGED;
    case ErrorCode::SingularMatrix:
    case ErrorCode::SingularLeastSquares:
    case ErrorCode::ClampedModelSingular:
    case ErrorCode::SingularParameterization: return EQC_ERR_SINGULAR;
    case ErrorCode::InvalidSpec:
    case ErrorCode::TopologyViolation:
    case ErrorCode::InvalidPartition:
    case ErrorCode::PolicyArityMismatch:
    case ErrorCode::MismatchedTargets:
    case ErrorCode::UnboundSlot: return EQC_ERR_INVALID_MODEL;
    case ErrorCode::DomainError:
    case ErrorCode::NonFiniteIterate:
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::ZeroNorm: return EQC_ERR_DOMAIN;
    case ErrorCode::InvalidArgument: return EQC_ERR_INVALID_ARGUMENT;
    case ErrorCode::SolveFailedDuringOptimization: return EQC_ERR_NOT_CONVERGED;
  }
  return EQC_ERR_INTERNAL;
}

eqc_status fail(eqc_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class Fn>
eqc_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const Error& e) {
    return fail(status_of(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail(EQC_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(EQC_ERR_INTERNAL, "unknown exception");
  }
}

SolverConfig solver_of(const eqc_solver_options* o) {
  SolverConfig c;
  if (o) {
    if (o->method != EQC_FORWARD && o->method != EQC_ANDERSON) {
      throw Error(ErrorCode::InvalidArgument, "unknown solver method");
    }
    c.method = o->method == EQC_FORWARD ? SolverMethod::Forward : SolverMethod::Anderson;
    c.history = o->history;
    c.relaxation = o->relaxation;
    c.tol = o->tol;
    c.max_iter = o->max_iter;
    c.ridge = o->ridge;
  }
  c.validate();
  return c;
}

eqc_status emit(const EquilibriumSolution& sol, double* x, int x_len, eqc_solve_info* info) {
  if (x_len != sol.x_star.size()) {
    return fail(EQC_ERR_DIMENSION, "x has length " + std::to_string(x_len) + ", model has " +
                                       std::to_string(sol.x_star.size()) + " nodes");
  }
  std::copy(sol.x_star.data(), sol.x_star.data() + x_len, x);
  if (info) {
    info->converged = sol.report.converged;
    info->iterations = sol.report.iterations;
    info->relative_error = sol.report.relative_error;
    info->residual_norm = sol.report.residual_norm;
  }
  if (!sol.report.converged) {
    return fail(EQC_ERR_NOT_CONVERGED,
                "no convergence after " + std::to_string(sol.report.iterations) + " iterations");
  }
  return EQC_OK;
}

eqc_status make(SscmSpec spec, eqc_model** out) {
  require_valid(spec);
  *out = new eqc_model{std::move(spec)};
  return EQC_OK;
}

}  // namespace

extern "C" {

const char* eqc_version(void) { return kLibraryVersion; }

const char* eqc_last_error(void) { return g_last_error.c_str(); }

void eqc_solver_options_default(eqc_solver_options* opts) {
  if (!opts) return;
  const SolverConfig c;
  opts->method = EQC_ANDERSON;
  opts->history = c.history;
  opts->relaxation = c.relaxation;
  opts->tol = c.tol;
  opts->max_iter = c.max_iter;
  opts->ridge = c.ridge;
}

eqc_status eqc_model_from_zoo(const char* id, eqc_model** out) {
  return guarded([&] {
    if (!id || !out) return fail(EQC_ERR_INVALID_ARGUMENT, "null argument");
    const std::string s = id;
    ModelSource src{s, std::nullopt};
    if (src.synthetic_dim() > 0) {
      return make(leontief_model(synthetic_iotable(src.synthetic_dim(), 0.9, 0)), out);
    }
    if (s == "motivating-example") return make(motivating_example(), out);
    if (s == "rebound-3sector") return make(rebound_3sector(2.0).spec, out);
    if (s == "two-compartment") return make(two_compartment_model().base, out);
    return fail(EQC_ERR_INVALID_ARGUMENT, "unknown zoo id '" + s + "'");
  });
}

eqc_status eqc_model_from_json(const char* text, eqc_model** out) {
  return guarded([&] {
    if (!text || !out) return fail(EQC_ERR_INVALID_ARGUMENT, "null argument");
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      return fail(EQC_ERR_PARSE, e.what());
    }
    return make(spec_from_json(doc), out);
  });
}

eqc_status eqc_model_from_csv(const char* dir, eqc_model** out) {
  return guarded([&] {
    if (!dir || !out) return fail(EQC_ERR_INVALID_ARGUMENT, "null argument");
    return make(leontief_model(load_iotable_csv(IoTablePaths::in_directory(dir))), out);
  });
}

void eqc_model_free(eqc_model* model) { delete model; }

eqc_status eqc_model_dims(const eqc_model* model, int* nodes, int* theta) {
  return guarded([&] {
    if (!model) return fail(EQC_ERR_INVALID_ARGUMENT, "null model");
    if (nodes) *nodes = model->spec.dim();
    if (theta) *theta = model->spec.num_theta();
    return EQC_OK;
  });
}

eqc_status eqc_model_to_json(const eqc_model* model, char* buf, size_t* len) {
  return guarded([&] {
    if (!model || !len) return fail(EQC_ERR_INVALID_ARGUMENT, "null argument");
    const std::string s = spec_to_json(model->spec).dump();
    const size_t cap = *len;
    *len = s.size() + 1;
    if (!buf || cap < s.size() + 1) {
      return fail(EQC_ERR_DIMENSION, "buffer needs " + std::to_string(s.size() + 1) + " bytes");
    }
    std::memcpy(buf, s.c_str(), s.size() + 1);
    return EQC_OK;
  });
}

eqc_status eqc_solve(const eqc_model* model, const eqc_solver_options* opts, double* x, int x_len,
                     eqc_solve_info* info) {
  return guarded([&] {
    if (!model || !x) return fail(EQC_ERR_INVALID_ARGUMENT, "null argument");
    const SscmSpec& s = model->spec;
    return emit(solve_equilibrium(s, reference_params(s), solver_of(opts)), x, x_len, info);
  });
}

eqc_status eqc_equilibrium_jacobian(const eqc_model* model, const eqc_solver_options* opts,
                                    double* jac, size_t jac_len) {
  return guarded([&] {
    if (!model || !jac) return fail(EQC_ERR_INVALID_ARGUMENT, "null argument");
    const SscmSpec& s = model->spec;
    const size_t need = static_cast<size_t>(s.dim()) * s.num_theta();
    if (jac_len != need) {
      return fail(EQC_ERR_DIMENSION, "jacobian needs " + std::to_string(need) + " entries");
    }
    const SolverConfig cfg = solver_of(opts);
    const ParamValues p = reference_params(s);
    const EquilibriumSolution sol = solve_equilibrium(s, p, cfg);
    if (!sol.report.converged) return fail(EQC_ERR_NOT_CONVERGED, "forward solve did not converge");
    const Matrix j = jacobian_wrt_params(s, p, sol.x_star, cfg);
    for (Eigen::Index r = 0; r < j.rows(); ++r) {
      for (Eigen::Index c = 0; c < j.cols(); ++c) jac[r * j.cols() + c] = j(r, c);
    }
    return EQC_OK;
  });
}

eqc_status eqc_solve_intervened(const eqc_model* model, eqc_group group, const int* targets,
                                const double* values, int n, const eqc_solver_options* opts,
                                double* x, int x_len, eqc_solve_info* info) {
  return guarded([&] {
    if (!model || !x || n < 0 || (n > 0 && (!targets || !values))) {
      return fail(EQC_ERR_INVALID_ARGUMENT, "null argument");
    }
    if (group != EQC_MULTIPLICATIVE && group != EQC_ADDITIVE) {
      return fail(EQC_ERR_INVALID_ARGUMENT, "unknown group");
    }
    LieElement g = identity(group == EQC_MULTIPLICATIVE ? LieGroup::Multiplicative : LieGroup::Additive,
                            std::vector<int>(targets, targets + n));
    g.values = Eigen::Map<const Vector>(values, n);
    const SscmSpec lie = apply(model->spec, g);
    return emit(solve_equilibrium(lie, reference_params(lie), solver_of(opts)), x, x_len, info);
  });
}

eqc_status eqc_run_config(const char* config_path, const char* command, const char* out_dir,
                          const uint64_t* seed, int* exit_code) {
  int code = 2;
  const eqc_status st = guarded([&] {
    if (!config_path) return fail(EQC_ERR_INVALID_ARGUMENT, "null config path");
    const std::filesystem::path path(config_path);
    std::ifstream in(path);
    if (!in) return fail(EQC_ERR_IO, "cannot open " + path.string());
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      return fail(EQC_ERR_PARSE, path.string() + ": " + e.what());
    }
    if (command) {
      if (!doc.is_object()) return fail(EQC_ERR_SCHEMA, "/: expected an object");
      if (!doc.contains("command")) {
        doc["command"] = command;
      } else if (doc["command"] != command) {
        return fail(EQC_ERR_SCHEMA, "/command: config says " + doc["command"].dump() +
                                        ", command line says \"" + command + "\"");
      }
    }
    ExperimentConfig cfg = parse_config(doc, path.parent_path());
    if (out_dir) cfg.output = out_dir;
    if (seed) {
      cfg.seed = *seed;
      cfg.adam.seed = *seed;
    }
    const RunManifest m = run_experiment(cfg);
    code = m.exit_code();
    if (code != 0) {
      for (const StageReport& s : m.stages) {
        if (!s.ok) g_last_error = "stage " + s.name + " failed: " + s.message;
      }
    }
    return EQC_OK;
  });
  // an unusable output directory is a run failure, not a config error
  if (st == EQC_ERR_IO && code == 2 && g_last_error.find("output directory") != std::string::npos) {
    code = 1;
  }
  if (exit_code) *exit_code = code;
  return st;
}

}  // extern "C"
