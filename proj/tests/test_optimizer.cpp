#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "gpdrf/errors.hpp"
#include "gpdrf/optimizer.hpp"
#include "oracles.hpp"

using namespace gpdrf;
using diff::Matrix;
using diff::Tape;
using diff::Var;
using opt::AdamConfig;
using opt::AdamOptimizer;
using opt::ParamRef;

TEST_CASE("adam leaves parameters untouched when gradients are zero") {
  Matrix p = Matrix::Constant(2, 3, 1.5);
  const Matrix before = p;
  AdamOptimizer adam;
  for (int i = 0; i < 5; ++i) {
    adam.step({{"p", &p}}, {Matrix::Zero(2, 3)});
  }
  CHECK(p.isApprox(before));
  CHECK(adam.step_count() == 5);
}

TEST_CASE("first adam step moves each coordinate by the learning rate") {
  // After bias correction, step one reduces to lr * g / (|g| + eps).
  AdamConfig cfg;
  cfg.learning_rate = 1e-3;
  Matrix p(2, 1);
  p << 0.7, -0.2;
  Matrix g(2, 1);
  g << 2.0, -0.5;
  AdamOptimizer adam(cfg);
  adam.step({{"p", &p}}, {g});
  CHECK(p(0, 0) == doctest::Approx(0.7 - 1e-3).epsilon(1e-6));
  CHECK(p(1, 0) == doctest::Approx(-0.2 + 1e-3).epsilon(1e-6));
}

TEST_CASE("adam follows the hand-rolled reference recursion") {
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  AdamOptimizer adam(cfg);
  Matrix p = Matrix::Zero(1, 1);
  double rm = 0.0, rv = 0.0, rp = 0.0;
  oracles::TestRng r(3);
  for (int t = 1; t <= 50; ++t) {
    const double g = r.normal();
    rm = 0.9 * rm + 0.1 * g;
    rv = 0.999 * rv + 0.001 * g * g;
    const double mh = rm / (1.0 - std::pow(0.9, t));
    const double vh = rv / (1.0 - std::pow(0.999, t));
    rp -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    adam.step({{"p", &p}}, {Matrix::Constant(1, 1, g)});
    CHECK(p(0, 0) == doctest::Approx(rp).epsilon(1e-12));
  }
}

TEST_CASE("adam minimizes a quadratic") {
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  AdamOptimizer adam(cfg);
  Matrix p = Matrix::Constant(3, 1, 4.0);
  for (int t = 0; t < 2000; ++t) {
    adam.step({{"p", &p}}, {Matrix(2.0 * p)});
  }
  CHECK(p.norm() < 1e-3);
}

TEST_CASE("non-finite gradients raise a divergence error naming the parameter") {
  Matrix p = Matrix::Zero(2, 1);
  Matrix g = Matrix::Zero(2, 1);
  g(1, 0) = std::numeric_limits<double>::quiet_NaN();
  AdamOptimizer adam;
  CHECK_THROWS_WITH_AS(adam.step({{"gp.mu.0", &p}}, {g}),
                       doctest::Contains("gp.mu.0"), DivergenceError);

  g(1, 0) = std::numeric_limits<double>::infinity();
  AdamOptimizer adam2;
  CHECK_THROWS_AS(adam2.step({{"w", &p}}, {g}), DivergenceError);
}

TEST_CASE("adam rejects mismatched shapes and counts") {
  Matrix p = Matrix::Zero(2, 1);
  AdamOptimizer adam;
  CHECK_THROWS_AS(adam.step({{"p", &p}}, {Matrix::Zero(3, 1)}), ShapeError);
  CHECK_THROWS_AS(adam.step({{"p", &p}}, {}), InvalidArgumentError);
}

TEST_CASE("l2 penalty value and gradient") {
  Tape tape;
  Matrix a(1, 2);
  a << 1.0, 2.0;
  const Var va = tape.leaf(a);
  const Var vb = tape.leaf(Matrix::Zero(3, 1));

  SUBCASE("matches the direct sum of squares") {
    CHECK(opt::l2_penalty(tape, {va}, 0.5).scalar() == doctest::Approx(2.5));
    CHECK(opt::l2_penalty(tape, {vb}, 0.5).scalar() == doctest::Approx(0.0));
    CHECK(opt::l2_penalty(tape, {va, vb}, 2.0).scalar() == doctest::Approx(10.0));
  }

  SUBCASE("contributes 2*c*param to the gradient") {
    const Var pen = opt::l2_penalty(tape, {va, vb}, 0.25);
    tape.backward(pen);
    CHECK(tape.gradient(va).isApprox(Matrix(0.5 * a)));
    CHECK(tape.gradient(vb).isZero());
  }

  SUBCASE("rejects a negative coefficient") {
    CHECK_THROWS_AS(opt::l2_penalty(tape, {va}, -1e-9), ConfigError);
  }

  SUBCASE("zero coefficient records a constant zero") {
    const Var pen = opt::l2_penalty(tape, {va}, 0.0);
    CHECK(pen.scalar() == 0.0);
    tape.backward(pen);
    CHECK(tape.gradient(va).isZero());
  }
}
