/* Exercises the public C API from a C translation unit. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "eqcausal/eqcausal.h"

static int failures = 0;

#define CHECK(cond)                                                  \
  do {                                                               \
    if (!(cond)) {                                                   \
      fprintf(stderr, "%s:%d: CHECK(%s) failed (last error: %s)\n", \
              __FILE__, __LINE__, #cond, eqc_last_error());         \
      ++failures;                                                    \
    }                                                                \
  } while (0)

static void test_motivating(void) {
  eqc_model* m = NULL;
  CHECK(eqc_model_from_zoo("motivating-example", &m) == EQC_OK);
  int nodes = 0, theta = 0;
  CHECK(eqc_model_dims(m, &nodes, &theta) == EQC_OK);
  CHECK(nodes == 3 && theta == 4);

  eqc_solver_options opts;
  eqc_solver_options_default(&opts);
  CHECK(opts.method == EQC_ANDERSON && opts.history == 5 && opts.relaxation == 2.0);
  opts.tol = 1e-10;

  /* tau = 1, alpha = 0.5, beta = 0.3, gamma = 0.4 */
  const double y = 0.5 / (1.0 - 0.12);
  double x[3];
  eqc_solve_info info;
  CHECK(eqc_solve(m, &opts, x, 3, &info) == EQC_OK);
  CHECK(info.converged);
  CHECK(fabs(x[0] - 1.0) < 1e-9 && fabs(x[1] - y) < 1e-9 && fabs(x[2] - 0.4 * y) < 1e-9);
  CHECK(eqc_solve(m, NULL, x, 2, NULL) == EQC_ERR_DIMENSION);
  CHECK(strlen(eqc_last_error()) > 0);

  /* dy/dalpha = tau / (1 - beta gamma) */
  double jac[12];
  CHECK(eqc_equilibrium_jacobian(m, &opts, jac, 12) == EQC_OK);
  CHECK(fabs(jac[1 * 4 + 1] - 1.0 / 0.88) < 1e-6);
  CHECK(eqc_equilibrium_jacobian(m, &opts, jac, 11) == EQC_ERR_DIMENSION);

  /* doubling y's assignment: y = 2 alpha / (1 - 2 beta gamma) */
  const int targets[1] = {1};
  const double values[1] = {2.0};
  CHECK(eqc_solve_intervened(m, EQC_MULTIPLICATIVE, targets, values, 1, &opts, x, 3, &info) ==
        EQC_OK);
  CHECK(fabs(x[1] - 1.0 / 0.76) < 1e-9);
  const double bad[1] = {-1.0};
  CHECK(eqc_solve_intervened(m, EQC_MULTIPLICATIVE, targets, bad, 1, &opts, x, 3, &info) ==
        EQC_ERR_DOMAIN);

  /* a serialized model loads back to the same equilibrium */
  size_t len = 0;
  CHECK(eqc_model_to_json(m, NULL, &len) == EQC_ERR_DIMENSION);
  char* buf = malloc(len);
  CHECK(eqc_model_to_json(m, buf, &len) == EQC_OK);
  eqc_model* back = NULL;
  CHECK(eqc_model_from_json(buf, &back) == EQC_OK);
  double x2[3];
  CHECK(eqc_solve(back, &opts, x2, 3, NULL) == EQC_OK);
  CHECK(fabs(x2[1] - y) < 1e-9);
  free(buf);
  eqc_model_free(back);
  eqc_model_free(m);
}

static void test_errors(void) {
  eqc_model* m = NULL;
  CHECK(eqc_model_from_zoo("no-such-model", &m) == EQC_ERR_INVALID_ARGUMENT);
  CHECK(m == NULL);
  CHECK(eqc_model_from_json("{", &m) == EQC_ERR_PARSE);
  CHECK(eqc_model_from_csv("/nonexistent/dir", &m) == EQC_ERR_IO);
  CHECK(eqc_model_from_zoo(NULL, &m) == EQC_ERR_INVALID_ARGUMENT);
  eqc_model_free(NULL);

  int code = -1;
  CHECK(eqc_run_config("/nonexistent/config.json", "solve", NULL, NULL, &code) == EQC_ERR_IO);
  CHECK(code == 2);
}

static void test_leontief(void) {
  eqc_model* m = NULL;
  CHECK(eqc_model_from_zoo("leontief-synthetic-8", &m) == EQC_OK);
  int nodes = 0;
  CHECK(eqc_model_dims(m, &nodes, NULL) == EQC_OK);
  CHECK(nodes == 8);
  double x[8];
  eqc_solver_options opts;
  eqc_solver_options_default(&opts);
  opts.method = EQC_FORWARD;
  opts.max_iter = 3;
  eqc_solve_info info;
  CHECK(eqc_solve(m, &opts, x, 8, &info) == EQC_ERR_NOT_CONVERGED);
  CHECK(!info.converged && info.iterations == 3);
  eqc_model_free(m);
}

int main(void) {
  CHECK(strcmp(eqc_version(), "0.1.0") == 0);
  test_motivating();
  test_errors();
  test_leontief();
  if (failures) fprintf(stderr, "%d check(s) failed\n", failures);
  return failures ? 1 : 0;
}
