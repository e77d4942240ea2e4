#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "gpdrf/tape.hpp"

namespace gpdrf::drf {

using diff::Matrix;

// How a layer treats its spectral frequencies during training:
//   prior_fixed   - frequencies drawn fresh from the prior each step; no
//                   variational posterior over them and no KL term,
//   var_fixed     - posterior over frequencies, reparameterization noise
//                   frozen for the whole run,
//   var_resampled - posterior over frequencies, fresh noise every step.
enum class SpectraMode { prior_fixed, var_fixed, var_resampled };

// One random-feature layer: factorized Gaussian posteriors over the linear
// weights (prior N(0,1)) and the spectral frequencies (prior N(0, lambda)
// per input dim), plus the feature-map amplitude. Scales live in log space.
struct DrfLayerState {
  Matrix w_mean;                     // 2*M x d_out
  Matrix w_logscale;                 // same shape
  Matrix omega_mean;                 // d_in x M
  Matrix omega_logscale;             // same shape
  Eigen::VectorXd lambda_logscales;  // d_in prior log-variances
  double log_out_alpha = 0.0;
  SpectraMode mode = SpectraMode::var_resampled;

  Eigen::Index in_dim() const { return omega_mean.rows(); }
  Eigen::Index feature_count() const { return omega_mean.cols(); }
  Eigen::Index out_dim() const { return w_mean.cols(); }
  double out_alpha() const { return std::exp(log_out_alpha); }
};

// Near-prior start: small random means, unit weight scales, frequency
// scales at the prior, unit amplitude.
DrfLayerState init_layer(Eigen::Index d_in, Eigen::Index m_count,
                         Eigen::Index d_out, SpectraMode mode,
                         std::uint64_t seed, std::uint64_t layer_index);

Matrix reparam_weights(const DrfLayerState& layer, const Matrix& e);
Matrix reparam_spectra(const DrfLayerState& layer, const Matrix& tau);
// prior_fixed mode: frequencies are prior draws scaled by sqrt(lambda).
Matrix prior_spectra(const DrfLayerState& layer, const Matrix& tau);

// One realized layer: h |-> w' phi(h; omega, alpha).
struct LayerSample {
  Matrix w;
  Matrix omega;
  double alpha = 1.0;
};

Matrix layer_forward(const Matrix& h_cols, const Matrix& w, const Matrix& omega,
                     double alpha);
// Composition over layers; no layers means identity on the input columns.
Matrix feed_forward(const Matrix& f_cols, const std::vector<LayerSample>& samples);

double kl_weights(const DrfLayerState& layer);
double kl_spectra(const DrfLayerState& layer);

// ---- tape side -----------------------------------------------------------

struct DrfLayerVars {
  diff::Var w_mean;
  diff::Var w_logscale;
  diff::Var omega_mean;
  diff::Var omega_logscale;
  diff::Var lambda_logscales;  // d_in x 1
  diff::Var log_out_alpha;     // 1 x 1
};

diff::Var reparam_weights_tape(diff::Tape& tape, const DrfLayerVars& vars,
                               const Matrix& e);
diff::Var reparam_spectra_tape(diff::Tape& tape, const DrfLayerVars& vars,
                               const Matrix& tau);
diff::Var prior_spectra_tape(diff::Tape& tape, const DrfLayerVars& vars,
                             const Matrix& tau);

struct LayerSampleVars {
  diff::Var w;
  diff::Var omega;
  diff::Var alpha;  // 1 x 1
};

diff::Var layer_forward_tape(diff::Tape& tape, diff::Var h, diff::Var w,
                             diff::Var omega, diff::Var alpha);
diff::Var feed_forward_tape(diff::Tape& tape, diff::Var f,
                            const std::vector<LayerSampleVars>& samples);

diff::Var kl_weights_tape(diff::Tape& tape, const DrfLayerVars& vars);
diff::Var kl_spectra_tape(diff::Tape& tape, const DrfLayerVars& vars);

}  // namespace gpdrf::drf
