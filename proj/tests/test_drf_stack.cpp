#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "gpdrf/drf_stack.hpp"
#include "gpdrf/errors.hpp"
#include "gpdrf/random_features.hpp"
#include "gpdrf/tape.hpp"
#include "oracles.hpp"

using namespace gpdrf;
using diff::Matrix;

namespace {

drf::DrfLayerState random_layer(oracles::TestRng& rng, Eigen::Index d_in,
                                Eigen::Index m_count, Eigen::Index d_out) {
  drf::DrfLayerState s;
  s.w_mean = rng.gaussian_matrix(2 * m_count, d_out, 0.7);
  s.w_logscale = rng.matrix(2 * m_count, d_out, -1.2, 0.3);
  s.omega_mean = rng.gaussian_matrix(d_in, m_count, 0.6);
  s.omega_logscale = rng.matrix(d_in, m_count, -1.0, 0.4);
  s.lambda_logscales = rng.matrix(d_in, 1, -0.8, 0.8);
  s.log_out_alpha = rng.uniform(-0.4, 0.5);
  return s;
}

}  // namespace

TEST_CASE("weight and frequency reparameterizations are mean plus scaled noise") {
  oracles::TestRng rng(501);
  drf::DrfLayerState s = random_layer(rng, 3, 2, 2);

  CHECK(drf::reparam_weights(s, Matrix::Zero(4, 2)).isApprox(s.w_mean));
  CHECK(drf::reparam_spectra(s, Matrix::Zero(3, 2)).isApprox(s.omega_mean));

  // Collapsed scales pin the sample to the mean whatever the noise.
  drf::DrfLayerState tight = s;
  tight.w_logscale.setConstant(-40.0);
  const Matrix e = rng.gaussian_matrix(4, 2);
  CHECK(drf::reparam_weights(tight, e).isApprox(s.w_mean, 1e-12));

  const Matrix w = drf::reparam_weights(s, e);
  CHECK(w.isApprox(Matrix(s.w_mean.array() + s.w_logscale.array().exp() * e.array())));

  CHECK_THROWS_AS(drf::reparam_weights(s, Matrix::Zero(3, 2)), ShapeError);
  CHECK_THROWS_AS(drf::reparam_spectra(s, Matrix::Zero(3, 3)), ShapeError);
}

TEST_CASE("reparameterized draws have the advertised moments") {
  oracles::TestRng rng(502);
  drf::DrfLayerState s = random_layer(rng, 2, 1, 2);
  const int draws = 100000;

  Matrix sum = Matrix::Zero(2, 2), sum_sq = Matrix::Zero(2, 2);
  for (int t = 0; t < draws; ++t) {
    const Matrix w = drf::reparam_weights(s, rng.gaussian_matrix(2, 2));
    sum += w;
    sum_sq += w.cwiseProduct(w);
  }
  const Matrix mean = sum / draws;
  const Matrix var = sum_sq / draws - mean.cwiseProduct(mean);
  const Matrix sd = s.w_logscale.array().exp().matrix();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double se_mean = sd(i, j) / std::sqrt(double(draws));
      CHECK(std::abs(mean(i, j) - s.w_mean(i, j)) < 3.0 * se_mean);
      const double v = sd(i, j) * sd(i, j);
      const double se_var = v * std::sqrt(2.0 / (draws - 1.0));
      CHECK(std::abs(var(i, j) - v) < 3.0 * se_var);
    }
}

TEST_CASE("prior frequency draws scale unit noise by the prior deviation") {
  oracles::TestRng rng(503);
  drf::DrfLayerState s = random_layer(rng, 3, 4, 1);
  const Matrix tau = rng.gaussian_matrix(3, 4);
  const Matrix omega = drf::prior_spectra(s, tau);
  for (int i = 0; i < 3; ++i) {
    const double root_lambda = std::exp(0.5 * s.lambda_logscales(i));
    for (int j = 0; j < 4; ++j)
      CHECK(omega(i, j) == doctest::Approx(root_lambda * tau(i, j)));
  }
}

TEST_CASE("layer forward is a linear readout of the feature map") {
  oracles::TestRng rng(504);
  const Matrix h = rng.gaussian_matrix(3, 5);
  const Matrix omega = rng.gaussian_matrix(3, 2);

  CHECK(drf::layer_forward(h, Matrix::Zero(4, 2), omega, 1.3).isZero());

  // Zero input: every cosine feature is sqrt(alpha/M), sines vanish. A lone
  // weight on a cosine row reads exactly that.
  Matrix w = Matrix::Zero(4, 2);
  w(2, 1) = 0.7;  // cos row of feature 1
  const Matrix out = drf::layer_forward(Matrix::Zero(3, 1), w, omega, 2.0);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(1, 0) == doctest::Approx(0.7 * std::sqrt(2.0 / 2.0)));

  CHECK_THROWS_AS(drf::layer_forward(h, Matrix::Zero(3, 2), omega, 1.0),
                  ShapeError);
}

TEST_CASE("prior-weight outputs reproduce the feature-space covariance") {
  oracles::TestRng rng(505);
  const Eigen::Index m_count = 3, d_out = 2;
  Matrix h(2, 2);  // two inputs, columns
  h << 0.4, -1.1, 0.9, 0.3;
  const Matrix omega = rng.gaussian_matrix(2, m_count);
  const double alpha = 1.7;

  const Matrix phi = rf::rff_map(h, omega, alpha);
  const double want = phi.col(0).dot(phi.col(1));

  drf::DrfLayerState s;
  s.w_mean = Matrix::Zero(2 * m_count, d_out);
  s.w_logscale = Matrix::Zero(2 * m_count, d_out);
  s.omega_mean = omega;
  s.omega_logscale = Matrix::Zero(2, m_count);
  s.lambda_logscales = Eigen::VectorXd::Zero(2);

  const int draws = 20000;
  double same = 0.0, same_sq = 0.0, cross = 0.0, cross_sq = 0.0;
  for (int t = 0; t < draws; ++t) {
    const Matrix w = drf::reparam_weights(s, rng.gaussian_matrix(2 * m_count, d_out));
    const Matrix f = drf::layer_forward(h, w, omega, alpha);
    const double p = f(0, 0) * f(0, 1);
    const double q = f(0, 0) * f(1, 1);
    same += p;
    same_sq += p * p;
    cross += q;
    cross_sq += q * q;
  }
  const double mean_same = same / draws;
  const double se_same =
      std::sqrt((same_sq / draws - mean_same * mean_same) / draws);
  CHECK(std::abs(mean_same - want) < 3.0 * se_same);

  const double mean_cross = cross / draws;
  const double se_cross =
      std::sqrt((cross_sq / draws - mean_cross * mean_cross) / draws);
  CHECK(std::abs(mean_cross) < 3.0 * se_cross + 1e-12);
}

TEST_CASE("feed forward composes layers and defaults to identity") {
  oracles::TestRng rng(506);
  const Matrix f = rng.gaussian_matrix(3, 4);
  CHECK(drf::feed_forward(f, {}) == f);

  const Matrix w = rng.gaussian_matrix(4, 2);
  const Matrix omega = rng.gaussian_matrix(3, 2);
  const drf::LayerSample one{w, omega, 1.4};
  CHECK(drf::feed_forward(f, {one}) ==
        drf::layer_forward(f, w, omega, 1.4));

  drf::LayerSample bad{rng.gaussian_matrix(4, 2), rng.gaussian_matrix(5, 2), 1.0};
  CHECK_THROWS_AS(drf::feed_forward(f, {one, bad}), ShapeError);
}

TEST_CASE("two hand-computed layers match feed forward") {
  // One feature per layer so the map is cos/sin of a single projection.
  const double a0 = 1.2, a1 = 0.8;
  Eigen::Vector2d h0(0.3, -0.7);
  Eigen::Vector2d omega0(0.9, 0.4);
  Matrix w0(2, 2);
  w0 << 0.5, -0.2, 0.1, 0.8;
  Eigen::Vector2d omega1(-0.6, 1.1);
  Matrix w1(2, 1);
  w1 << 1.5, -0.4;

  const double z0 = omega0.dot(h0);
  const double c0 = std::sqrt(a0) * std::cos(z0), s0 = std::sqrt(a0) * std::sin(z0);
  const Eigen::Vector2d h1(w0(0, 0) * c0 + w0(1, 0) * s0,
                           w0(0, 1) * c0 + w0(1, 1) * s0);
  const double z1 = omega1.dot(h1);
  const double want =
      w1(0, 0) * std::sqrt(a1) * std::cos(z1) + w1(1, 0) * std::sqrt(a1) * std::sin(z1);

  const Matrix got = drf::feed_forward(
      h0, {{w0, omega0, a0}, {w1, omega1, a1}});
  CHECK(got.rows() == 1);
  CHECK(got(0, 0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("fixed noise makes repeated evaluations bit-identical") {
  oracles::TestRng rng(507);
  drf::DrfLayerState s = random_layer(rng, 2, 2, 3);
  const Matrix e = rng.gaussian_matrix(4, 3);
  const Matrix tau = rng.gaussian_matrix(2, 2);
  const Matrix f = rng.gaussian_matrix(2, 5);

  const Matrix once = drf::feed_forward(
      f, {{drf::reparam_weights(s, e), drf::reparam_spectra(s, tau), s.out_alpha()}});
  const Matrix again = drf::feed_forward(
      f, {{drf::reparam_weights(s, e), drf::reparam_spectra(s, tau), s.out_alpha()}});
  CHECK(once == again);
}

TEST_CASE("weight KL is zero at the prior and positive elsewhere") {
  drf::DrfLayerState s;
  s.w_mean = Matrix::Zero(2, 1);
  s.w_logscale = Matrix::Zero(2, 1);
  s.omega_mean = Matrix::Zero(1, 1);
  s.omega_logscale = Matrix::Zero(1, 1);
  s.lambda_logscales = Eigen::VectorXd::Zero(1);
  CHECK(drf::kl_weights(s) == 0.0);
  CHECK(drf::kl_spectra(s) == 0.0);

  s.w_mean(0, 0) = 1.0;
  CHECK(drf::kl_weights(s) == doctest::Approx(0.5));

  oracles::TestRng rng(508);
  for (int rep = 0; rep < 10; ++rep) {
    drf::DrfLayerState r = random_layer(rng, 2, 2, 2);
    CHECK(drf::kl_weights(r) > 0.0);
    CHECK(drf::kl_spectra(r) > 0.0);
  }

  // The spectra KL vanishes exactly when the posterior equals N(0, lambda).
  drf::DrfLayerState at_prior = random_layer(rng, 3, 2, 1);
  at_prior.omega_mean.setZero();
  at_prior.omega_logscale =
      (0.5 * at_prior.lambda_logscales).replicate(1, 2);
  CHECK(drf::kl_spectra(at_prior) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("closed-form KLs sit inside the Monte-Carlo band") {
  oracles::TestRng rng(509);
  drf::DrfLayerState s = random_layer(rng, 2, 2, 2);

  const Matrix w_sd = s.w_logscale.array().exp().matrix();
  const auto mc_w = oracles::mc_kl_diag_gaussian(
      s.w_mean, w_sd, Matrix::Ones(4, 2), 400000, 91);
  CHECK(std::abs(drf::kl_weights(s) - mc_w.mean) < 3.0 * mc_w.std_error + 1e-6);

  const Matrix o_sd = s.omega_logscale.array().exp().matrix();
  const Matrix lambda =
      s.lambda_logscales.array().exp().matrix().replicate(1, 2);
  const auto mc_o = oracles::mc_kl_diag_gaussian(s.omega_mean, o_sd, lambda,
                                                 400000, 92);
  CHECK(std::abs(drf::kl_spectra(s) - mc_o.mean) < 3.0 * mc_o.std_error + 1e-6);
}

TEST_CASE("layer initialization starts near the prior") {
  const auto s = drf::init_layer(3, 4, 2, drf::SpectraMode::var_resampled, 42, 0);
  CHECK(s.w_mean.rows() == 8);
  CHECK(s.w_mean.cols() == 2);
  CHECK(s.omega_mean.rows() == 3);
  CHECK(s.omega_mean.cols() == 4);
  CHECK(s.w_logscale.isZero());
  CHECK(s.lambda_logscales.isZero());
  CHECK(s.omega_logscale.isZero());  // beta = sqrt(lambda) = 1
  CHECK(s.log_out_alpha == 0.0);
  CHECK(s.w_mean.cwiseAbs().maxCoeff() < 1.0);   // sd 0.1 draws
  CHECK(s.w_mean.cwiseAbs().maxCoeff() > 0.0);

  const auto same = drf::init_layer(3, 4, 2, drf::SpectraMode::var_resampled, 42, 0);
  CHECK(same.w_mean == s.w_mean);
  CHECK(same.omega_mean == s.omega_mean);
  const auto other_layer =
      drf::init_layer(3, 4, 2, drf::SpectraMode::var_resampled, 42, 1);
  CHECK(other_layer.w_mean != s.w_mean);
  const auto other_seed =
      drf::init_layer(3, 4, 2, drf::SpectraMode::var_resampled, 43, 0);
  CHECK(other_seed.w_mean != s.w_mean);

  CHECK_THROWS_AS(drf::init_layer(0, 4, 2, drf::SpectraMode::var_fixed, 1, 0),
                  ConfigError);
}

namespace {

struct DrfTapeSetup {
  std::vector<Matrix> leaves;  // per layer: w_mean, w_logscale, omega_mean,
                               // omega_logscale, lambda, log_alpha
  std::size_t n_layers = 0;
};

DrfTapeSetup pack_layers(const std::vector<drf::DrfLayerState>& layers) {
  DrfTapeSetup t;
  t.n_layers = layers.size();
  for (const auto& s : layers) {
    t.leaves.push_back(s.w_mean);
    t.leaves.push_back(s.w_logscale);
    t.leaves.push_back(s.omega_mean);
    t.leaves.push_back(s.omega_logscale);
    t.leaves.push_back(s.lambda_logscales);
    t.leaves.push_back(Matrix::Constant(1, 1, s.log_out_alpha));
  }
  return t;
}

std::vector<drf::DrfLayerVars> vars_from_leaves(diff::Tape& tape,
                                                const DrfTapeSetup& setup,
                                                const std::vector<Matrix>& vals) {
  std::vector<drf::DrfLayerVars> out;
  std::size_t i = 0;
  for (std::size_t l = 0; l < setup.n_layers; ++l) {
    drf::DrfLayerVars v;
    v.w_mean = tape.leaf(vals[i++]);
    v.w_logscale = tape.leaf(vals[i++]);
    v.omega_mean = tape.leaf(vals[i++]);
    v.omega_logscale = tape.leaf(vals[i++]);
    v.lambda_logscales = tape.leaf(vals[i++]);
    v.log_out_alpha = tape.leaf(vals[i++]);
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST_CASE("tape stack reproduces the plain stack") {
  oracles::TestRng rng(510);
  std::vector<drf::DrfLayerState> layers = {random_layer(rng, 2, 2, 3),
                                            random_layer(rng, 3, 1, 2)};
  const Matrix f = rng.gaussian_matrix(2, 4);
  const Matrix e0 = rng.gaussian_matrix(4, 3), tau0 = rng.gaussian_matrix(2, 2);
  const Matrix e1 = rng.gaussian_matrix(2, 2), tau1 = rng.gaussian_matrix(3, 1);

  const Matrix plain = drf::feed_forward(
      f, {{drf::reparam_weights(layers[0], e0), drf::reparam_spectra(layers[0], tau0),
           layers[0].out_alpha()},
          {drf::reparam_weights(layers[1], e1), drf::reparam_spectra(layers[1], tau1),
           layers[1].out_alpha()}});

  diff::Tape tape;
  const DrfTapeSetup setup = pack_layers(layers);
  const auto vars = vars_from_leaves(tape, setup, setup.leaves);
  std::vector<drf::LayerSampleVars> samples;
  samples.push_back({drf::reparam_weights_tape(tape, vars[0], e0),
                     drf::reparam_spectra_tape(tape, vars[0], tau0),
                     diff::exp(vars[0].log_out_alpha)});
  samples.push_back({drf::reparam_weights_tape(tape, vars[1], e1),
                     drf::reparam_spectra_tape(tape, vars[1], tau1),
                     diff::exp(vars[1].log_out_alpha)});
  const diff::Var g = drf::feed_forward_tape(tape, tape.constant(f), samples);
  CHECK(oracles::rel_error(g.value(), plain) < 1e-12);

  CHECK(drf::kl_weights_tape(tape, vars[0]).scalar() ==
        doctest::Approx(drf::kl_weights(layers[0])).epsilon(1e-12));
  CHECK(drf::kl_spectra_tape(tape, vars[0]).scalar() ==
        doctest::Approx(drf::kl_spectra(layers[0])).epsilon(1e-12));

  const Matrix prior_plain = drf::prior_spectra(layers[0], tau0);
  CHECK(oracles::rel_error(
            drf::prior_spectra_tape(tape, vars[0], tau0).value(), prior_plain) <
        1e-12);
}

TEST_CASE("stack gradients match finite differences") {
  oracles::TestRng rng(511);
  std::vector<drf::DrfLayerState> layers = {random_layer(rng, 2, 2, 2),
                                            random_layer(rng, 2, 1, 1)};
  const Matrix f = rng.gaussian_matrix(2, 3);
  const Matrix e0 = rng.gaussian_matrix(4, 2), tau0 = rng.gaussian_matrix(2, 2);
  const Matrix e1 = rng.gaussian_matrix(2, 1), tau1 = rng.gaussian_matrix(2, 1);
  const Matrix readout = rng.gaussian_matrix(1, 3);
  const DrfTapeSetup setup = pack_layers(layers);

  auto objective = [&](const std::vector<Matrix>& vals,
                       std::vector<Matrix>* grads) -> double {
    diff::Tape tape;
    const auto vars = vars_from_leaves(tape, setup, vals);
    std::vector<drf::LayerSampleVars> samples;
    samples.push_back({drf::reparam_weights_tape(tape, vars[0], e0),
                       drf::prior_spectra_tape(tape, vars[0], tau0),
                       diff::exp(vars[0].log_out_alpha)});
    samples.push_back({drf::reparam_weights_tape(tape, vars[1], e1),
                       drf::reparam_spectra_tape(tape, vars[1], tau1),
                       diff::exp(vars[1].log_out_alpha)});
    diff::Var obj =
        diff::dot(drf::feed_forward_tape(tape, tape.constant(f), samples),
                  tape.constant(readout));
    for (const auto& v : vars) {
      obj = diff::add(obj, drf::kl_weights_tape(tape, v));
      obj = diff::add(obj, drf::kl_spectra_tape(tape, v));
    }
    if (grads) {
      tape.backward(obj);
      grads->clear();
      for (const auto& v : vars) {
        grads->push_back(tape.gradient(v.w_mean));
        grads->push_back(tape.gradient(v.w_logscale));
        grads->push_back(tape.gradient(v.omega_mean));
        grads->push_back(tape.gradient(v.omega_logscale));
        grads->push_back(tape.gradient(v.lambda_logscales));
        grads->push_back(tape.gradient(v.log_out_alpha));
      }
    }
    return obj.scalar();
  };

  std::vector<Matrix> analytic;
  objective(setup.leaves, &analytic);
  const auto fd = oracles::fd_gradient(
      [&](const std::vector<Matrix>& vals) { return objective(vals, nullptr); },
      setup.leaves, 1e-5);

  REQUIRE(analytic.size() == fd.size());
  for (std::size_t i = 0; i < fd.size(); ++i)
    CHECK(oracles::rel_error(analytic[i], fd[i]) < 1e-4);
}
