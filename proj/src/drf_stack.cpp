#include "gpdrf/drf_stack.hpp"

#include <cmath>
#include <string>

#include "gpdrf/counter_rng.hpp"
#include "gpdrf/errors.hpp"
#include "gpdrf/random_features.hpp"

namespace gpdrf::drf {

namespace {

void check_layer(const DrfLayerState& layer) {
  if (layer.w_mean.rows() != 2 * layer.omega_mean.cols())
    throw ShapeError("drf layer: weight rows " +
                     std::to_string(layer.w_mean.rows()) + " but " +
                     std::to_string(layer.omega_mean.cols()) +
                     " features need " +
                     std::to_string(2 * layer.omega_mean.cols()));
  if (layer.w_logscale.rows() != layer.w_mean.rows() ||
      layer.w_logscale.cols() != layer.w_mean.cols())
    throw ShapeError("drf layer: weight scale shape differs from weight mean");
  if (layer.omega_logscale.rows() != layer.omega_mean.rows() ||
      layer.omega_logscale.cols() != layer.omega_mean.cols())
    throw ShapeError("drf layer: frequency scale shape differs from mean");
  if (layer.lambda_logscales.size() != layer.omega_mean.rows())
    throw ShapeError("drf layer: " + std::to_string(layer.lambda_logscales.size()) +
                     " prior scales for " + std::to_string(layer.omega_mean.rows()) +
                     " input dims");
}

void check_noise(const Matrix& noise, const Matrix& mean, const char* what) {
  if (noise.rows() != mean.rows() || noise.cols() != mean.cols())
    throw ShapeError(std::string(what) + ": noise is " +
                     std::to_string(noise.rows()) + "x" +
                     std::to_string(noise.cols()) + ", parameters are " +
                     std::to_string(mean.rows()) + "x" +
                     std::to_string(mean.cols()));
}

}  // namespace

DrfLayerState init_layer(Eigen::Index d_in, Eigen::Index m_count,
                         Eigen::Index d_out, SpectraMode mode,
                         std::uint64_t seed, std::uint64_t layer_index) {
  if (d_in < 1 || m_count < 1 || d_out < 1)
    throw ConfigError("drf layer: dimensions must be positive");
  DrfLayerState s;
  s.mode = mode;
  s.w_mean.resize(2 * m_count, d_out);
  for (Eigen::Index i = 0; i < s.w_mean.rows(); ++i)
    for (Eigen::Index j = 0; j < d_out; ++j)
      s.w_mean(i, j) =
          0.1 * rng::normal(seed, {rng::word(rng::Stream::init), layer_index, 0,
                                   static_cast<std::uint64_t>(i),
                                   static_cast<std::uint64_t>(j)});
  s.w_logscale = Matrix::Zero(2 * m_count, d_out);
  s.omega_mean.resize(d_in, m_count);
  for (Eigen::Index i = 0; i < d_in; ++i)
    for (Eigen::Index j = 0; j < m_count; ++j)
      s.omega_mean(i, j) =
          0.1 * rng::normal(seed, {rng::word(rng::Stream::init), layer_index, 1,
                                   static_cast<std::uint64_t>(i),
                                   static_cast<std::uint64_t>(j)});
  s.lambda_logscales = Eigen::VectorXd::Zero(d_in);
  // beta starts at sqrt(lambda), the prior scale.
  s.omega_logscale =
      (0.5 * s.lambda_logscales).replicate(1, m_count);
  s.log_out_alpha = 0.0;
  return s;
}

Matrix reparam_weights(const DrfLayerState& layer, const Matrix& e) {
  check_layer(layer);
  check_noise(e, layer.w_mean, "reparam_weights");
  return layer.w_mean.array() + layer.w_logscale.array().exp() * e.array();
}

Matrix reparam_spectra(const DrfLayerState& layer, const Matrix& tau) {
  check_layer(layer);
  check_noise(tau, layer.omega_mean, "reparam_spectra");
  return layer.omega_mean.array() + layer.omega_logscale.array().exp() * tau.array();
}

Matrix prior_spectra(const DrfLayerState& layer, const Matrix& tau) {
  check_layer(layer);
  check_noise(tau, layer.omega_mean, "prior_spectra");
  const Eigen::ArrayXd root_lambda = (0.5 * layer.lambda_logscales).array().exp();
  return tau.array().colwise() * root_lambda;
}

Matrix layer_forward(const Matrix& h_cols, const Matrix& w, const Matrix& omega,
                     double alpha) {
  if (w.rows() != 2 * omega.cols())
    throw ShapeError("layer_forward: " + std::to_string(w.rows()) +
                     " weight rows for " + std::to_string(omega.cols()) +
                     " features");
  return w.transpose() * rf::rff_map(h_cols, omega, alpha);
}

Matrix feed_forward(const Matrix& f_cols, const std::vector<LayerSample>& samples) {
  Matrix h = f_cols;
  for (std::size_t l = 0; l < samples.size(); ++l) {
    if (samples[l].omega.rows() != h.rows())
      throw ShapeError("feed_forward: layer " + std::to_string(l) + " expects " +
                       std::to_string(samples[l].omega.rows()) +
                       " input dims, got " + std::to_string(h.rows()));
    h = layer_forward(h, samples[l].w, samples[l].omega, samples[l].alpha);
  }
  return h;
}

double kl_weights(const DrfLayerState& layer) {
  check_layer(layer);
  const auto u = layer.w_logscale.array();
  const auto m = layer.w_mean.array();
  return 0.5 * ((2.0 * u).exp() + m.square() - 1.0 - 2.0 * u).sum();
}

double kl_spectra(const DrfLayerState& layer) {
  check_layer(layer);
  const auto v = layer.omega_logscale.array();
  const auto eta = layer.omega_mean.array();
  const Eigen::ArrayXd inv_lambda = (-layer.lambda_logscales).array().exp();
  const Eigen::ArrayXXd scaled =
      ((2.0 * v).exp() + eta.square()).colwise() * inv_lambda;
  const Eigen::ArrayXXd log_lambda =
      layer.lambda_logscales.array().replicate(1, layer.omega_mean.cols());
  return 0.5 * (scaled - 1.0 + log_lambda - 2.0 * v).sum();
}

// ---- tape side -----------------------------------------------------------

diff::Var reparam_weights_tape(diff::Tape& tape, const DrfLayerVars& vars,
                               const Matrix& e) {
  check_noise(e, vars.w_mean.value(), "reparam_weights");
  return diff::add(vars.w_mean,
                   diff::mul(diff::exp(vars.w_logscale), tape.constant(e)));
}

diff::Var reparam_spectra_tape(diff::Tape& tape, const DrfLayerVars& vars,
                               const Matrix& tau) {
  check_noise(tau, vars.omega_mean.value(), "reparam_spectra");
  return diff::add(vars.omega_mean,
                   diff::mul(diff::exp(vars.omega_logscale), tape.constant(tau)));
}

diff::Var prior_spectra_tape(diff::Tape& tape, const DrfLayerVars& vars,
                             const Matrix& tau) {
  // Only lambda is bound here; under prior-fixed spectra there is no omega
  // posterior, so the noise shape is checked against the prior's rows alone.
  if (tau.rows() != vars.lambda_logscales.value().rows())
    throw ShapeError("prior_spectra: noise has " + std::to_string(tau.rows()) +
                     " rows, the prior covers " +
                     std::to_string(vars.lambda_logscales.value().rows()) +
                     " input dims");
  const diff::Var root_lambda = diff::exp(diff::scale(vars.lambda_logscales, 0.5));
  return diff::mul(diff::bcast_col(root_lambda, tau.cols()), tape.constant(tau));
}

diff::Var layer_forward_tape(diff::Tape& tape, diff::Var h, diff::Var w,
                             diff::Var omega, diff::Var alpha) {
  if (w.value().rows() != 2 * omega.value().cols())
    throw ShapeError("layer_forward: " + std::to_string(w.value().rows()) +
                     " weight rows for " + std::to_string(omega.value().cols()) +
                     " features");
  return diff::matmul(w, rf::rff_map_tape(tape, h, omega, alpha), true, false);
}

diff::Var feed_forward_tape(diff::Tape& tape, diff::Var f,
                            const std::vector<LayerSampleVars>& samples) {
  diff::Var h = f;
  for (std::size_t l = 0; l < samples.size(); ++l) {
    if (samples[l].omega.value().rows() != h.value().rows())
      throw ShapeError("feed_forward: layer " + std::to_string(l) + " expects " +
                       std::to_string(samples[l].omega.value().rows()) +
                       " input dims, got " + std::to_string(h.value().rows()));
    h = layer_forward_tape(tape, h, samples[l].w, samples[l].omega,
                           samples[l].alpha);
  }
  return h;
}

diff::Var kl_weights_tape(diff::Tape& tape, const DrfLayerVars& vars) {
  (void)tape;
  const diff::Var two_u = diff::scale(vars.w_logscale, 2.0);
  const diff::Var body = diff::sub(
      diff::shift(diff::add(diff::exp(two_u), diff::square(vars.w_mean)), -1.0),
      two_u);
  return diff::scale(diff::sum(body), 0.5);
}

diff::Var kl_spectra_tape(diff::Tape& tape, const DrfLayerVars& vars) {
  (void)tape;
  const auto cols = vars.omega_mean.value().cols();
  const diff::Var two_v = diff::scale(vars.omega_logscale, 2.0);
  const diff::Var inv_lambda =
      diff::bcast_col(diff::exp(diff::neg(vars.lambda_logscales)), cols);
  const diff::Var scaled = diff::mul(
      diff::add(diff::exp(two_v), diff::square(vars.omega_mean)), inv_lambda);
  const diff::Var body =
      diff::add(diff::sub(diff::shift(scaled, -1.0), two_v),
                diff::bcast_col(vars.lambda_logscales, cols));
  return diff::scale(diff::sum(body), 0.5);
}

}  // namespace gpdrf::drf
