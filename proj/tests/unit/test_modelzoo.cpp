#include <doctest.h>

#include <cmath>
#include <functional>

#include "error.hpp"
#include "../support/generators.hpp"
#include "modelzoo.hpp"

using namespace eqcausal;
using eqcausal::testing::Gen;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

SolverConfig tight() {
  SolverConfig cfg;
  cfg.tol = 1e-12;
  cfg.max_iter = 20000;
  return cfg;
}

}  // namespace

TEST_CASE("leontief_closed_form: two sectors and singular tables") {
  Matrix A(2, 2);
  A << 0.2, 0.3, 0.1, 0.4;
  Vector y(2);
  y << 1.0, 2.0;
  // det(I - A) = 0.8 * 0.6 - 0.03 = 0.45
  const Vector x = leontief_closed_form(A, y);
  CHECK(x[0] == doctest::Approx((0.6 * 1.0 + 0.3 * 2.0) / 0.45).epsilon(1e-14));
  CHECK(x[1] == doctest::Approx((0.1 * 1.0 + 0.8 * 2.0) / 0.45).epsilon(1e-14));
  Matrix S(2, 2);
  S << 0.5, 0.5, 0.5, 0.5;
  CHECK(code_of([&] { leontief_closed_form(S, y); }) == ErrorCode::SingularMatrix);
  CHECK(code_of([&] { leontief_closed_form(A, Vector::Ones(3)); }) ==
        ErrorCode::DimensionMismatch);
}

TEST_CASE("impacts and employment distribution") {
  Matrix R(2, 3);
  R << 1, 2, 3, 0.5, 0.5, 0.5;
  Vector x(3);
  x << 1, 1, 2;
  const Vector s = impacts(R, x);
  CHECK(s[0] == 9.0);
  CHECK(s[1] == 2.0);
  const Vector e = employment_distribution(R, 1, x);
  CHECK(e[2] == 1.0);
  CHECK(e.sum() == s[1]);
  CHECK(code_of([&] { impacts(R, Vector::Ones(2)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("hawkins_simon_check and leading minors") {
  Matrix A(2, 2);
  A << 0.2, 0.3, 0.1, 0.4;
  const Vector m = leading_principal_minors(A);
  CHECK(m[0] == doctest::Approx(0.8));
  CHECK(m[1] == doctest::Approx(0.45));
  CHECK(hawkins_simon_check(A));
  Matrix B(2, 2);
  B << 0.5, 0.9, 0.9, 0.5;
  CHECK_FALSE(hawkins_simon_check(B));
  std::vector<std::string> warnings;
  IoTable t;
  t.A = B;
  t.y = Vector::Ones(2);
  leontief_model(t, {}, &warnings);
  CHECK(warnings.size() == 1);
}

TEST_CASE("property: Hawkins-Simon holds exactly when the spectral radius is below 1") {
  Gen gen(61);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = gen.integer(1, 8);
    const double rho = gen.uniform(0.1, 1.6);
    if (std::abs(rho - 1.0) < 1e-3) continue;
    const Matrix A = gen.contraction(d, rho);
    CHECK(hawkins_simon_check(A) == (rho < 1.0));
  }
}

TEST_CASE("IoTable validation") {
  IoTable t;
  t.A = Matrix::Zero(2, 2);
  t.y = Vector::Ones(3);
  CHECK(code_of([&] { t.validate(); }) == ErrorCode::DimensionMismatch);
  t.y = Vector::Ones(2);
  t.A(0, 1) = -0.1;
  CHECK(code_of([&] { t.validate(); }) == ErrorCode::NegativeEntry);
}

TEST_CASE("property: Leontief spec equilibrium matches the closed form") {
  Gen gen(71);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = gen.integer(1, 15);
    IoTable t = synthetic_iotable(d, gen.uniform(0.1, 0.95), gen.engine()());
    if (trial % 3 == 0) t.A.diagonal() = gen.vector(d, 0.0, 0.05);  // folded self-loops
    if (!hawkins_simon_check(t.A)) continue;
    const SscmSpec s = leontief_model(t);
    const EquilibriumSolution sol = solve_equilibrium(s, s.theta_ref, tight());
    REQUIRE(sol.report.converged);
    const Vector oracle = leontief_closed_form(t.A, t.y);
    CHECK((sol.x_star - oracle).norm() <= 1e-9 * oracle.norm());
  }
}

TEST_CASE("leontief_model: free coefficients enter theta") {
  IoTable t = synthetic_iotable(3, 0.5, 2);
  LeontiefOptions opt;
  opt.free_coefficients = {{2, 0}, {0, 1}};
  const SscmSpec s = leontief_model(t, opt);
  CHECK(s.num_theta() == 5);
  CHECK(s.theta_ref[3] == t.A(2, 0));
  CHECK(s.theta_ref[4] == t.A(0, 1));
  CHECK(s.theta_names[3] == "A_2_0");
  Vector th = s.theta_ref;
  th[4] *= 1.2;
  Matrix A = t.A;
  A(0, 1) *= 1.2;
  const EquilibriumSolution sol = solve_equilibrium(s, th, tight());
  CHECK((sol.x_star - leontief_closed_form(A, t.y)).norm() < 1e-9);
  opt.free_coefficients = {{1, 1}};
  CHECK(code_of([&] { leontief_model(t, opt); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("price_rebound_model: reference equilibrium and closed forms") {
  const ReboundInstance inst = rebound_3sector();
  const IoTable& t = inst.table;
  const SscmSpec& s = inst.spec;
  CHECK(s.dim() == 9);
  const EquilibriumSolution sol = solve_equilibrium(s, s.theta_ref, tight());
  REQUIRE(sol.report.converged);
  // at the reference prices demand sits at y0 and output solves Leontief
  const Vector p = rebound_prices(sol.x_star, inst.options.curves.p0);
  CHECK(sol.x_star.segment(3, 3).isZero(1e-12));
  CHECK((p - reference_prices(t.A, 0, 1.0)).norm() < 1e-10);
  CHECK((sol.x_star.segment(6, 3) - Vector::Ones(3)).norm() < 1e-10);
  CHECK((sol.x_star.head(3) - leontief_closed_form(t.A, Vector::Ones(3))).norm() < 1e-10);

  // efficiency gain u < 1 on A_01: prices and quantities move per the closed form
  ParamValues pv = reference_params(s);
  pv.u[0] = 0.8;
  const EquilibriumSolution moved = solve_equilibrium(s, pv, tight());
  Matrix A = t.A;
  A(0, 1) *= 0.8;
  const Vector p_new = reference_prices(A, 0, 1.0);
  CHECK((rebound_prices(moved.x_star, inst.options.curves.p0) - p_new).norm() < 1e-10);
  Vector y(3);
  for (int k = 0; k < 3; ++k) {
    y[k] = std::pow(p_new[k] / inst.options.curves.p0[k], -inst.options.curves.epsilon[k]);
  }
  CHECK((moved.x_star.segment(6, 3) - y).norm() < 1e-10);
  CHECK((moved.x_star.head(3) - leontief_closed_form(A, y)).norm() < 1e-10);
}

TEST_CASE("price_rebound_model: the frozen instance backfires") {
  // a 20 percent efficiency gain on energy input to the target sector raises
  // total energy output at the frozen elasticities
  const ReboundInstance inst = rebound_3sector();
  ParamValues pv = reference_params(inst.spec);
  const double before =
      rebound_energy_demand(solve_equilibrium(inst.spec, pv, tight()).x_star, 3, 0);
  pv.u[0] = 0.8;
  const double after =
      rebound_energy_demand(solve_equilibrium(inst.spec, pv, tight()).x_star, 3, 0);
  CHECK(after > before);
  // without price response the same gain saves energy
  const ReboundInstance inelastic = rebound_3sector(0.0);
  ParamValues q = reference_params(inelastic.spec);
  const double b0 =
      rebound_energy_demand(solve_equilibrium(inelastic.spec, q, tight()).x_star, 3, 0);
  q.u[0] = 0.8;
  CHECK(rebound_energy_demand(solve_equilibrium(inelastic.spec, q, tight()).x_star, 3, 0) < b0);
}

TEST_CASE("property: energy demand after the efficiency gain grows with elasticity") {
  double prev = -1.0;
  double ref = 0.0;
  for (double eps = 0.0; eps <= 4.0; eps += 0.25) {
    const ReboundInstance inst = rebound_3sector(eps);
    ParamValues pv = reference_params(inst.spec);
    const Vector x0 = solve_equilibrium(inst.spec, pv, tight()).x_star;
    ref = rebound_energy_demand(x0, 3, 0);
    pv.u[0] = 0.8;
    const Vector x = solve_equilibrium(inst.spec, pv, tight()).x_star;
    const double after = rebound_energy_demand(x, 3, 0);
    CHECK(after >= prev);
    if (eps == 0.0) CHECK(after < ref);
    prev = after;
  }
  // the reference does not depend on elasticity; the largest one backfires
  CHECK(prev > ref);
}

TEST_CASE("price_rebound_model: errors") {
  ReboundInstance inst = rebound_3sector();
  PriceReboundOptions o = inst.options;
  o.beta_e = 0.0;
  CHECK(code_of([&] { price_rebound_model(inst.table, o); }) == ErrorCode::DomainError);
  o = inst.options;
  o.efficiency_target = 0;
  CHECK(code_of([&] { price_rebound_model(inst.table, o); }) == ErrorCode::InvalidArgument);
  o = inst.options;
  o.curves.epsilon = Vector::Ones(2);
  CHECK(code_of([&] { price_rebound_model(inst.table, o); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("motivating example: closed form and singular parameterization") {
  Vector th(4);
  th << 1.0, 0.5, 0.3, 0.4;
  const Vector x = motivating_closed_form(th);
  CHECK(x[1] == doctest::Approx(0.56818).epsilon(1e-5));
  CHECK(x[2] == doctest::Approx(0.22727).epsilon(1e-5));
  th[2] = 2.0;
  th[3] = 0.5;
  CHECK(code_of([&] { motivating_closed_form(th); }) == ErrorCode::SingularParameterization);
  CHECK(code_of([&] { motivating_example(1.0, 0.5, 2.0, 0.5); }) ==
        ErrorCode::SingularParameterization);
}

TEST_CASE("two_compartment_model: structure") {
  const TwoCompartmentInstance inst = two_compartment_model();
  CHECK(inst.base.dim() == 6);
  CHECK(inst.lie.u.size() == 2);
  REQUIRE(inst.plan.interventions.size() == 2);
  CHECK(inst.plan.interventions[0].u_index == std::vector<int>{0});
  CHECK(inst.plan.interventions[1].u_index == std::vector<int>{1});
  const TwoCompartmentParams p = TwoCompartmentParams::frozen();
  const EquilibriumSolution sol = solve_equilibrium(inst.base, inst.base.theta_ref, tight());
  Vector c = p.c;
  c[0] += 1.0;
  c[3] += 1.0;
  CHECK((sol.x_star - leontief_closed_form(p.W, c)).norm() < 1e-10);
}

TEST_CASE("synthetic_iotable: reproducible with the requested radius") {
  const IoTable a = synthetic_iotable(10, 0.9, 5);
  const IoTable b = synthetic_iotable(10, 0.9, 5);
  CHECK(a.A == b.A);
  CHECK(a.R == b.R);
  CHECK(a.A.eigenvalues().cwiseAbs().maxCoeff() == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(a.A.diagonal().isZero(0.0));
  CHECK(a.impact_row("employment") == 1);
  CHECK(a.impact_row("water") == -1);
}

TEST_CASE("leontief: worked examples") {
  Matrix A(2, 2);
  A << 0.1, 0.2, 0.3, 0.1;
  const Vector x = leontief_closed_form(A, Vector::Ones(2));
  CHECK(x[0] == doctest::Approx(1.1 / 0.75).epsilon(1e-14));
  CHECK(x[1] == doctest::Approx(1.6).epsilon(1e-14));
  const Vector m = leading_principal_minors(A);
  CHECK(m[0] == doctest::Approx(0.9));
  CHECK(m[1] == doctest::Approx(0.75));
  CHECK(hawkins_simon_check(Matrix::Zero(3, 3)));
  CHECK_FALSE(hawkins_simon_check(Matrix::Constant(1, 1, 1.2)));
  CHECK(impacts(Matrix::Identity(2, 2), x) == x);
}

TEST_CASE("leontief: radius above one warns and forward iteration fails") {
  IoTable t = synthetic_iotable(4, 1.3, 8);
  std::vector<std::string> warnings;
  const SscmSpec s = leontief_model(t, {}, &warnings);
  CHECK(warnings.size() == 1);
  SolverConfig cfg;
  cfg.method = SolverMethod::Forward;
  bool failed = false;
  try {
    failed = !solve_equilibrium(s, s.theta_ref, cfg).report.converged;
  } catch (const Error& e) {
    failed = e.code() == ErrorCode::NonFiniteIterate;
  }
  CHECK(failed);
}

TEST_CASE("property: Hawkins-Simon implies forward iteration converges from zero") {
  Gen gen(81);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int d = gen.integer(1, 12);
    const IoTable t = synthetic_iotable(d, gen.uniform(0.05, 1.4), gen.engine()());
    if (!hawkins_simon_check(t.A)) continue;
    ++checked;
    SolverConfig cfg;
    cfg.method = SolverMethod::Forward;
    cfg.max_iter = 100000;
    const EquilibriumSolution sol = solve_equilibrium(leontief_model(t), t.y, cfg);
    CHECK(sol.report.converged);
  }
  CHECK(checked > 20);
}

TEST_CASE("property: motivating example matches its oracle across the box") {
  Gen gen(91);
  const SscmSpec s = motivating_example();
  const SolverConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    Vector th(4);
    for (int i = 0; i < 4; ++i) th[i] = gen.uniform(s.theta_box[i].lo, s.theta_box[i].hi);
    const Vector oracle = motivating_closed_form(th);
    const EquilibriumSolution sol = solve_equilibrium(s, th, cfg);
    REQUIRE(sol.report.converged);
    CHECK((sol.x_star - oracle).norm() / oracle.norm() <= 10 * cfg.tol);
  }
}

TEST_CASE("motivating example: intervened closed form") {
  Vector th(4);
  th << 1.0, 0.5, 0.3, 0.4;
  CHECK(motivating_closed_form(th, 2.0, 1.0)[1] == doctest::Approx(1.0 / 0.76).epsilon(1e-14));
  CHECK(motivating_closed_form(th, 2.0, 1.0)[1] == doctest::Approx(1.31579).epsilon(1e-5));
  for (double uy : {0.5, 0.8, 1.3, 2.0}) {
    CHECK(motivating_closed_form(th, uy, 1.0 / uy)[2] ==
          doctest::Approx(motivating_closed_form(th)[2]).epsilon(1e-14));
  }
}

TEST_CASE("two_compartment_model: identity interventions equal the block solve") {
  const TwoCompartmentInstance inst = two_compartment_model();
  const EquilibriumSolution a = solve_equilibrium(inst.lie, inst.lie.theta_ref, tight());
  const EquilibriumSolution b = solve_equilibrium(inst.base, inst.base.theta_ref, tight());
  CHECK((a.x_star - b.x_star).norm() < 1e-12);
}
