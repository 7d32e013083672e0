#include <doctest.h>

#include <array>
#include <cstring>
#include <string>
#include <functional>

#include "error.hpp"
#include "expr_graph.hpp"
#include "../support/generators.hpp"

using namespace eqcausal;
using eqcausal::testing::Gen;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

ExprGraph square_graph() {
  GraphBuilder b({1});
  auto x = b.input(0);
  return std::move(b).build(b.mul(x, x));
}

ExprGraph affine_graph(const Matrix& a, const Vector& y) {
  const int n = static_cast<int>(y.size());
  GraphBuilder b({n});
  Vector flat(n * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) flat[r * n + c] = a(r, c);
  auto x = b.input(0);
  auto ax = b.matvec(b.constant(flat), x, n, n);
  return std::move(b).build(b.add(ax, b.constant(y)));
}

Vector eval1(const ExprGraph& g, const Vector& x) {
  std::array<Vector, 1> binds{x};
  return forward_eval(g, binds);
}

// One graph per operation kind, all reading a single 3-vector slot.
std::vector<std::pair<const char*, ExprGraph>> op_graphs() {
  std::vector<std::pair<const char*, ExprGraph>> out;
  auto make = [&](const char* name, auto&& body) {
    GraphBuilder b({3});
    auto x = b.input(0);
    out.emplace_back(name, std::move(b).build(body(b, x)));
  };
  make("add", [](GraphBuilder& b, NodeId x) { return b.add(x, b.constant(vec({1, 2, 3}))); });
  make("sub", [](GraphBuilder& b, NodeId x) { return b.sub(b.constant(vec({1, 2, 3})), x); });
  make("mul", [](GraphBuilder& b, NodeId x) { return b.mul(x, b.exp(x)); });
  make("recip", [](GraphBuilder& b, NodeId x) { return b.reciprocal(x); });
  make("neg", [](GraphBuilder& b, NodeId x) { return b.negate(b.mul(x, x)); });
  make("matvec", [](GraphBuilder& b, NodeId x) {
    auto m = b.concat(std::array<NodeId, 3>{x, x, b.constant(vec({0.5, -1, 2}))});
    return b.matvec(m, x, 3, 3);
  });
  make("dot", [](GraphBuilder& b, NodeId x) { return b.dot(x, b.log(x)); });
  make("pow", [](GraphBuilder& b, NodeId x) { return b.pow(x, -1.5); });
  make("pow-int", [](GraphBuilder& b, NodeId x) { return b.pow(x, 3.0); });
  make("exp", [](GraphBuilder& b, NodeId x) { return b.exp(x); });
  make("log", [](GraphBuilder& b, NodeId x) { return b.log(x); });
  make("relu", [](GraphBuilder& b, NodeId x) {
    return b.relu(b.sub(x, b.constant(vec({1.0, 1.5, 0.8}))));
  });
  make("concat", [](GraphBuilder& b, NodeId x) {
    return b.concat(std::array<NodeId, 2>{b.exp(x), b.mul(x, x)});
  });
  make("gather", [](GraphBuilder& b, NodeId x) { return b.gather(b.exp(x), {2, 0, 2, 1}); });
  make("broadcast", [](GraphBuilder& b, NodeId x) { return b.broadcast(b.sum(x), 4); });
  return out;
}

}  // namespace

TEST_CASE("forward_eval examples") {
  CHECK(eval1(square_graph(), vec({3}))[0] == doctest::Approx(9.0));

  Matrix a(2, 2);
  a << 0.1, 0.2, 0.3, 0.1;
  Vector out = eval1(affine_graph(a, vec({1, 1})), vec({1, 1}));
  CHECK(out[0] == doctest::Approx(1.3));
  CHECK(out[1] == doctest::Approx(1.4));

  GraphBuilder b({3});
  auto g = std::move(b).build(b.relu(b.input(0)));
  Vector r = eval1(g, vec({-1, 0, 2}));
  CHECK(r == vec({0, 0, 2}));
}

TEST_CASE("reverse_vjp examples") {
  std::array<Vector, 1> binds{vec({3})};
  CHECK(reverse_vjp(square_graph(), binds, vec({1})).slots[0][0] == doctest::Approx(6.0));

  Matrix a(2, 2);
  a << 0.1, 0.2, 0.3, 0.1;
  Vector v = vec({0.7, -1.3});
  std::array<Vector, 1> xb{vec({0.4, 2.0})};
  Vector g = reverse_vjp(affine_graph(a, Vector::Zero(2)), xb, v).slots[0];
  CHECK((g - a.transpose() * v).norm() < 1e-15);

  GraphBuilder b({1});
  auto relu = std::move(b).build(b.relu(b.input(0)));
  std::array<Vector, 1> zero{vec({0.0})};
  CHECK(reverse_vjp(relu, zero, vec({1})).slots[0][0] == 0.0);
}

TEST_CASE("jacobian examples") {
  Matrix a(2, 2);
  a << 0.1, 0.2, 0.3, 0.1;
  std::array<Vector, 1> xb{vec({5, -2})};
  CHECK(jacobian(affine_graph(a, vec({1, 1})), xb, 0) == a);

  GraphBuilder b({2});
  auto x = b.input(0);
  auto x1 = b.slice(x, 0, 1);
  auto x2 = b.slice(x, 1, 1);
  auto g = std::move(b).build(b.concat(std::array<NodeId, 2>{b.mul(x1, x2), b.mul(x1, x1)}));
  std::array<Vector, 1> p{vec({2, 3})};
  Matrix expected(2, 2);
  expected << 3, 2, 4, 0;
  CHECK((jacobian(g, p, 0) - expected).norm() < 1e-15);
}

TEST_CASE("finite_difference_jacobian examples") {
  auto sq = [](const Vector& x) { return Vector(x.cwiseAbs2()); };
  CHECK(std::abs(finite_difference_jacobian(sq, vec({3}), 1e-5)(0, 0) - 6.0) < 1e-6);

  Gen gen(7);
  Matrix a = gen.matrix(3, 3, -1, 1);
  auto lin = [&](const Vector& x) { return Vector(a * x); };
  CHECK((finite_difference_jacobian(lin, gen.vector(3, -1, 1), 1e-3) - a).cwiseAbs().maxCoeff() <
        1e-9);

  auto ex = [](const Vector& x) { return Vector(x.array().exp().matrix()); };
  CHECK(std::abs(finite_difference_jacobian(ex, vec({0}), 1e-5)(0, 0) - 1.0) < 1e-8);

  CHECK_THROWS_AS(finite_difference_jacobian(ex, vec({0}), 0.0), Error);
}

TEST_CASE("evaluation errors") {
  auto g = square_graph();
  CHECK_THROWS_WITH_AS(forward_eval(g, std::span<const Vector>{}), doctest::Contains("UnboundSlot"),
                       Error);
  std::array<Vector, 1> wrong{vec({1, 2})};
  CHECK_THROWS_WITH_AS(forward_eval(g, wrong), doctest::Contains("ShapeMismatch"), Error);
  std::array<Vector, 1> ok{vec({1})};
  CHECK_THROWS_WITH_AS(reverse_vjp(g, ok, vec({1, 1})), doctest::Contains("ShapeMismatch"), Error);

  GraphBuilder b({1});
  auto x = b.input(0);
  auto lg = std::move(b).build(b.log(x));
  std::array<Vector, 1> neg{vec({-1})};
  CHECK_THROWS_WITH_AS(forward_eval(lg, neg), doctest::Contains("DomainError"), Error);

  GraphBuilder b2({1});
  auto rc = std::move(b2).build(b2.reciprocal(b2.input(0)));
  std::array<Vector, 1> zero{vec({0})};
  CHECK_THROWS_WITH_AS(forward_eval(rc, zero), doctest::Contains("DomainError"), Error);

  GraphBuilder b3({1});
  auto pw = std::move(b3).build(b3.pow(b3.input(0), -2.0));
  CHECK_THROWS_WITH_AS(forward_eval(pw, zero), doctest::Contains("DomainError"), Error);

  GraphBuilder b4({2});
  CHECK_THROWS_AS(b4.add(b4.input(0), b4.scalar(1.0)), Error);
  CHECK_THROWS_AS(b4.gather(b4.input(0), {2}), Error);
}

TEST_CASE("property: VJP agrees with finite differences for every op kind") {
  Gen gen(20240611);
  for (auto& [name, graph] : op_graphs()) {
    CAPTURE(name);
    for (int trial = 0; trial < 25; ++trial) {
      // positive inputs keep log/pow/recip inside their domains; relu kinks are avoided
      Vector x = gen.vector(3, 0.2, 2.0);
      if (std::string(name) == "relu") {
        bool near_kink = false;
        Vector shift = vec({1.0, 1.5, 0.8});
        for (int i = 0; i < 3; ++i) near_kink |= std::abs(x[i] - shift[i]) < 1e-3;
        if (near_kink) continue;
      }
      Vector v = gen.vector(graph.output_size(), -1, 1);
      std::array<Vector, 1> binds{x};
      Vector ad = reverse_vjp(graph, binds, v).slots[0];
      Matrix fd = finite_difference_jacobian([&](const Vector& p) { return eval1(graph, p); }, x,
                                             1e-6);
      Vector fdv = fd.transpose() * v;
      for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(ad[i] - fdv[i]) / (1.0 + std::abs(fdv[i])) < 1e-4);
      }
    }
  }
}

TEST_CASE("property: VJP is linear in the cotangent") {
  Gen gen(99);
  for (auto& [name, graph] : op_graphs()) {
    CAPTURE(name);
    for (int trial = 0; trial < 10; ++trial) {
      std::array<Vector, 1> binds{gen.vector(3, 0.2, 2.0)};
      const int n = graph.output_size();
      Vector v1 = gen.vector(n, -1, 1);
      Vector v2 = gen.vector(n, -1, 1);
      const double a = gen.uniform(-2, 2);
      const double c = gen.uniform(-2, 2);
      Vector lhs = reverse_vjp(graph, binds, Vector(a * v1 + c * v2)).slots[0];
      Vector rhs = a * reverse_vjp(graph, binds, v1).slots[0] +
                   c * reverse_vjp(graph, binds, v2).slots[0];
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + rhs.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("property: Jacobian of a composition is the product of Jacobians") {
  Gen gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = gen.integer(1, 5);
    const int m = gen.integer(1, 5);
    Matrix w1 = gen.matrix(m, n, -1, 1);
    Matrix w2 = gen.matrix(n, m, -1, 1);
    auto layer = [](const Matrix& w) {
      GraphBuilder b({static_cast<int>(w.cols())});
      Vector flat(w.size());
      for (int r = 0; r < w.rows(); ++r)
        for (int c = 0; c < w.cols(); ++c) flat[r * w.cols() + c] = w(r, c);
      auto h = b.matvec(b.constant(flat), b.input(0), static_cast<int>(w.rows()),
                        static_cast<int>(w.cols()));
      return std::move(b).build(b.exp(h));
    };
    ExprGraph f = layer(w1);
    ExprGraph g = layer(w2);
    GraphBuilder b({n});
    std::array<NodeId, 1> in{b.input(0)};
    std::array<NodeId, 1> mid{b.inline_graph(f, in)};
    ExprGraph gf = std::move(b).build(b.inline_graph(g, mid));

    Vector x = gen.vector(n, -1, 1);
    std::array<Vector, 1> bx{x};
    std::array<Vector, 1> bf{forward_eval(f, bx)};
    Matrix expected = jacobian(g, bf, 0) * jacobian(f, bx, 0);
    CHECK((jacobian(gf, bx, 0) - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("property: evaluation is deterministic") {
  Gen gen(3);
  for (auto& [name, graph] : op_graphs()) {
    std::array<Vector, 1> binds{gen.vector(3, 0.2, 2.0)};
    Vector a = forward_eval(graph, binds);
    Vector b = forward_eval(graph, binds);
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
  }
}

TEST_CASE("op codes round trip through their names") {
  for (auto op : {OpKind::Input, OpKind::Constant, OpKind::Add, OpKind::Subtract,
                  OpKind::Multiply, OpKind::Reciprocal, OpKind::Negate, OpKind::MatVec,
                  OpKind::Dot, OpKind::Power, OpKind::Exp, OpKind::Log, OpKind::Relu,
                  OpKind::Concat, OpKind::Gather, OpKind::Broadcast}) {
    CHECK(op_from_string(to_string(op)) == op);
  }
  CHECK_THROWS_AS(op_from_string("tanh"), Error);
}
