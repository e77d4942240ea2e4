#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "gpdrf/errors.hpp"
#include "gpdrf/likelihoods.hpp"
#include "oracles.hpp"

using namespace gpdrf;
using diff::Tape;
using diff::Var;
using lik::Kind;
using lik::LikelihoodSpec;
using oracles::Matrix;

namespace {

LikelihoodSpec gaussian(double noise_var) {
  LikelihoodSpec s;
  s.kind = Kind::gaussian;
  s.log_noise_var = std::log(noise_var);
  return s;
}

LikelihoodSpec softmax(int k) {
  LikelihoodSpec s;
  s.kind = Kind::softmax;
  s.classes = k;
  return s;
}

}  // namespace

TEST_CASE("gaussian log-likelihood spot values") {
  Eigen::VectorXd g(1);
  g << 0.4;
  CHECK(lik::log_likelihood(0.4, g, gaussian(1.0)) ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)));
  // shrink sigma: density at the mean grows
  CHECK(lik::log_likelihood(0.4, g, gaussian(0.01)) >
        lik::log_likelihood(0.4, g, gaussian(1.0)));
  // direct formula
  CHECK(lik::log_likelihood(1.0, g, gaussian(0.5)) ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi * 0.5) -
                        0.5 * 0.36 / 0.5));
}

TEST_CASE("gaussian log-likelihood peaks at the prediction") {
  const LikelihoodSpec spec = gaussian(0.7);
  Eigen::VectorXd g(1);
  g << 1.3;
  const double at = lik::log_likelihood(1.3, g, spec);
  const double up = lik::log_likelihood(1.3 + 1e-4, g, spec);
  const double down = lik::log_likelihood(1.3 - 1e-4, g, spec);
  CHECK(at > up);
  CHECK(at > down);
  CHECK((up - down) / (2e-4) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("softmax log-likelihood values and invariances") {
  const LikelihoodSpec spec = softmax(10);
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(10, 3.77);
  CHECK(lik::log_likelihood(4.0, uniform, spec) == doctest::Approx(std::log(0.1)));

  oracles::TestRng r(81);
  const Eigen::VectorXd g = r.gaussian_matrix(10, 1, 2.0);

  SUBCASE("probabilities sum to one") {
    double total = 0.0;
    for (int k = 0; k < 10; ++k) {
      total += std::exp(lik::log_likelihood(k, g, spec));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("shift invariance") {
    const Eigen::VectorXd shifted = g.array() + 123.456;
    for (int k = 0; k < 10; ++k) {
      CHECK(lik::log_likelihood(k, g, spec) ==
            doctest::Approx(lik::log_likelihood(k, shifted, spec)).epsilon(1e-12));
    }
  }

  SUBCASE("extreme logits stay finite") {
    Eigen::VectorXd big = g;
    big(3) = 1000.0;
    CHECK(std::isfinite(lik::log_likelihood(3, big, spec)));
    CHECK(lik::log_likelihood(3, big, spec) == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("likelihood input validation") {
  CHECK_THROWS_AS(lik::validate(softmax(1)), ConfigError);
  CHECK_NOTHROW(lik::validate(softmax(2)));
  CHECK_NOTHROW(lik::validate(gaussian(1.0)));

  const LikelihoodSpec spec = softmax(3);
  const Eigen::VectorXd g = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(lik::log_likelihood(3.0, g, spec), InvalidArgumentError);
  CHECK_THROWS_AS(lik::log_likelihood(-1.0, g, spec), InvalidArgumentError);
  CHECK_THROWS_AS(lik::log_likelihood(0.5, g, spec), InvalidArgumentError);
  CHECK_THROWS_AS(lik::log_likelihood(0.0, Eigen::VectorXd::Zero(2), spec),
                  ShapeError);
}

TEST_CASE("target sampling follows the model") {
  SUBCASE("gaussian with tiny noise returns the mean") {
    Eigen::VectorXd g(1);
    g << 2.5;
    const double y = lik::sample_target(g, gaussian(1e-20), 5, {0});
    CHECK(y == doctest::Approx(2.5).epsilon(1e-8));
  }

  SUBCASE("gaussian moments over many draws") {
    Eigen::VectorXd g(1);
    g << -1.0;
    const LikelihoodSpec spec = gaussian(4.0);
    double sum = 0.0, sum_sq = 0.0;
    const int n = 100000;
    for (std::uint64_t t = 0; t < static_cast<std::uint64_t>(n); ++t) {
      const double y = lik::sample_target(g, spec, 11, {t});
      sum += y;
      sum_sq += y * y;
    }
    const double mean = sum / n;
    CHECK(mean == doctest::Approx(-1.0).epsilon(0.03));
    CHECK(sum_sq / n - mean * mean == doctest::Approx(4.0).epsilon(0.03));
  }

  SUBCASE("saturated softmax always picks the dominant class") {
    Eigen::VectorXd g(3);
    g << 0.0, 50.0, 0.0;
    const LikelihoodSpec spec = softmax(3);
    for (std::uint64_t t = 0; t < 10000; ++t) {
      CHECK(lik::sample_target(g, spec, 13, {t}) == 1.0);
    }
  }

  SUBCASE("fair two-class logits split evenly") {
    const Eigen::VectorXd g = Eigen::VectorXd::Zero(2);
    const LikelihoodSpec spec = softmax(2);
    int zeros = 0;
    const int n = 100000;
    for (std::uint64_t t = 0; t < static_cast<std::uint64_t>(n); ++t) {
      if (lik::sample_target(g, spec, 17, {t}) == 0.0) ++zeros;
    }
    // binomial std dev = sqrt(n)/2 ~ 158; allow 3 sigma
    CHECK(std::abs(zeros - n / 2) < 3.0 * std::sqrt(n) / 2.0);
  }
}

TEST_CASE("taped gaussian log-likelihood matches the plain one with gradients") {
  oracles::TestRng r(83);
  const std::vector<double> y = {0.3, -1.2, 2.0};
  const Matrix g = r.matrix(1, 3, -2.0, 2.0);
  Matrix theta(1, 1);
  theta << std::log(0.6);

  Tape tape;
  const Var vg = tape.leaf(g);
  const Var vt = tape.leaf(theta);
  const Var ll = lik::gaussian_loglik_tape(tape, y, vg, vt);
  const LikelihoodSpec spec = gaussian(0.6);
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd gi(1);
    gi << g(0, i);
    CHECK(ll.value()(0, i) ==
          doctest::Approx(lik::log_likelihood(y[static_cast<std::size_t>(i)], gi, spec))
              .epsilon(1e-12));
  }

  tape.backward(sum(ll));
  const auto fd = oracles::fd_gradient(
      [&](const std::vector<Matrix>& xs) {
        Tape t;
        return sum(lik::gaussian_loglik_tape(t, y, t.leaf(xs[0]), t.leaf(xs[1])))
            .scalar();
      },
      {g, theta});
  CHECK(oracles::rel_error(tape.gradient(vg), fd[0]) < 1e-6);
  CHECK(oracles::rel_error(tape.gradient(vt), fd[1]) < 1e-6);
}

TEST_CASE("taped softmax log-likelihood: values and the onehot-minus-softmax gradient") {
  oracles::TestRng r(89);
  const LikelihoodSpec spec = softmax(4);
  const std::vector<double> y = {2.0, 0.0, 3.0};
  const Matrix logits = r.matrix(4, 3, -2.0, 2.0);

  Tape tape;
  const Var vl = tape.leaf(logits);
  const Var ll = lik::softmax_loglik_tape(tape, y, vl, spec);
  for (int i = 0; i < 3; ++i) {
    CHECK(ll.value()(0, i) ==
          doctest::Approx(lik::log_likelihood(y[static_cast<std::size_t>(i)],
                                              logits.col(i), spec))
              .epsilon(1e-12));
  }

  tape.backward(sum(ll));
  const Matrix grad = tape.gradient(vl);
  for (int i = 0; i < 3; ++i) {
    const Eigen::ArrayXd e = (logits.col(i).array() - logits.col(i).maxCoeff()).exp();
    const Eigen::ArrayXd p = e / e.sum();
    for (int k = 0; k < 4; ++k) {
      const double onehot = (k == static_cast<int>(y[static_cast<std::size_t>(i)])) ? 1.0 : 0.0;
      CHECK(grad(k, i) == doctest::Approx(onehot - p(k)).epsilon(1e-10));
    }
  }

  const auto fd = oracles::fd_gradient(
      [&](const std::vector<Matrix>& xs) {
        Tape t;
        return sum(lik::softmax_loglik_tape(t, y, t.leaf(xs[0]), spec)).scalar();
      },
      {logits});
  CHECK(oracles::rel_error(grad, fd[0]) < 1e-6);
}
