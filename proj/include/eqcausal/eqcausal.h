#ifndef EQCAUSAL_EQCAUSAL_H
#define EQCAUSAL_EQCAUSAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(EQCAUSAL_BUILDING)
#define EQC_API __attribute__((visibility("default")))
#else
#define EQC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum eqc_status {
  EQC_OK = 0,
  EQC_ERR_INVALID_ARGUMENT = 1,
  EQC_ERR_PARSE = 2,
  EQC_ERR_SCHEMA = 3,
  EQC_ERR_IO = 4,
  EQC_ERR_DIMENSION = 5,
  EQC_ERR_NEGATIVE_ENTRY = 6,
  EQC_ERR_NOT_CONVERGED = 7,
  EQC_ERR_SINGULAR = 8,
  EQC_ERR_INVALID_MODEL = 9,
  EQC_ERR_DOMAIN = 10,
  EQC_ERR_INTERNAL = 99
} eqc_status;

typedef enum eqc_method { EQC_FORWARD = 0, EQC_ANDERSON = 1 } eqc_method;
typedef enum eqc_group { EQC_MULTIPLICATIVE = 0, EQC_ADDITIVE = 1 } eqc_group;

/* Opaque model handle. */
typedef struct eqc_model eqc_model;

typedef struct eqc_solver_options {
  eqc_method method;
  int history;
  double relaxation;
  double tol;
  int max_iter;
  double ridge;
} eqc_solver_options;

typedef struct eqc_solve_info {
  int converged;
  int iterations;
  double relative_error;
  double residual_norm;
} eqc_solve_info;

EQC_API const char* eqc_version(void);
/* Message of the last failed call on this thread; "" after a success. */
EQC_API const char* eqc_last_error(void);

/* Anderson, history 5, relaxation 2, tol 1e-4, 5000 iterations, ridge 1e-8. */
EQC_API void eqc_solver_options_default(eqc_solver_options* opts);

/* "motivating-example", "rebound-3sector", "two-compartment" or
   "leontief-synthetic-<d>" (seed 0, spectral radius 0.9). */
EQC_API eqc_status eqc_model_from_zoo(const char* id, eqc_model** out);
/* A serialized model document. */
EQC_API eqc_status eqc_model_from_json(const char* text, eqc_model** out);
/* A directory holding A.csv, R.csv and y.csv. */
EQC_API eqc_status eqc_model_from_csv(const char* dir, eqc_model** out);
EQC_API void eqc_model_free(eqc_model* model);

EQC_API eqc_status eqc_model_dims(const eqc_model* model, int* nodes, int* theta);
/* Copies the serialized model into buf when it fits; *len receives the size
   including the terminating zero. */
EQC_API eqc_status eqc_model_to_json(const eqc_model* model, char* buf, size_t* len);

/* Equilibrium at the reference parameters from a zero start. opts and info
   may be NULL. A solve that does not converge fills x and info and returns
   EQC_ERR_NOT_CONVERGED. */
EQC_API eqc_status eqc_solve(const eqc_model* model, const eqc_solver_options* opts, double* x,
                             int x_len, eqc_solve_info* info);

/* Jacobian of the equilibrium with respect to theta at the reference
   parameters, row-major, nodes x theta. */
EQC_API eqc_status eqc_equilibrium_jacobian(const eqc_model* model, const eqc_solver_options* opts,
                                            double* jac, size_t jac_len);

/* Equilibrium after the soft intervention u_k = values[i] on targets[i]. */
EQC_API eqc_status eqc_solve_intervened(const eqc_model* model, eqc_group group,
                                        const int* targets, const double* values, int n,
                                        const eqc_solver_options* opts, double* x, int x_len,
                                        eqc_solve_info* info);

/* Runs an experiment config. command, out_dir and seed override the document
   when non-NULL; a command that contradicts the document is a schema error.
   *exit_code receives 0 when every stage succeeded, 1 on a stage failure and
   2 on a config or parse error. */
EQC_API eqc_status eqc_run_config(const char* config_path, const char* command,
                                  const char* out_dir, const uint64_t* seed, int* exit_code);

#ifdef __cplusplus
}
#endif

#endif
