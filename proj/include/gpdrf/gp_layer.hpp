#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gpdrf/kernels.hpp"
#include "gpdrf/tape.hpp"

namespace gpdrf::gp {

using diff::Matrix;

// Variational posterior over function values at M pseudo-inputs, one
// independent Gaussian per output dimension j. Each covariance is stored as
// an unconstrained M x M matrix P: the factor is the strict lower triangle
// of P plus exp of its diagonal, so Sigma = L L^T stays positive definite
// under any optimizer move.
struct InducingState {
  kern::Inputs pseudo_inputs;
  std::vector<kern::KernelSpec> kernels;  // one shared, or one per output dim
  std::vector<Matrix> mu;                 // d0 entries, M x 1
  std::vector<Matrix> sigma_param;        // d0 entries, M x M
  double jitter_scale = kern::kDefaultJitterScale;

  Eigen::Index count() const { return kern::input_count(pseudo_inputs); }
  Eigen::Index output_dim() const { return static_cast<Eigen::Index>(mu.size()); }
  bool per_dim_kernels() const { return kernels.size() > 1; }
  const kern::KernelSpec& kernel_for(std::size_t j) const {
    return kernels.size() == 1 ? kernels[0] : kernels[j];
  }
  kern::KernelSpec& kernel_for(std::size_t j) {
    return kernels.size() == 1 ? kernels[0] : kernels[j];
  }
};

Matrix sigma_factor(const Matrix& p);  // L
Matrix sigma_of(const Matrix& p);      // L L^T

struct MarginalMoments {
  Eigen::VectorXd a;  // d0 means
  Eigen::VectorXd b;  // d0 variances, >= 0
};

struct MomentsBatch {
  Matrix a;  // d0 x N
  Matrix b;  // d0 x N
};

// q(F_n) moments under the variational posterior: mean k'K^{-1}mu and
// variance k(x,x) - k'K^{-1}k + k'K^{-1} Sigma K^{-1}k per output dim.
// Round-off can push a variance a hair below zero; anything beyond
// 1e-10 * k(x,x) is treated as a real defect and raised.
MomentsBatch marginal_moments(const kern::Inputs& x, const InducingState& state);
MarginalMoments marginal_moments_one(const kern::Inputs& x_single,
                                     const InducingState& state);

Eigen::VectorXd sample_latent(const MarginalMoments& m, const Eigen::VectorXd& eps);

double kl_inducing(const InducingState& state);

// Sum over output dims of log N(F^j; 0, K_j); oracle support, not training.
double gp_prior_logdensity(const Matrix& f_cols, const std::vector<Matrix>& grams);

// ---- tape side -----------------------------------------------------------

// Leaves for one inducing state. kernel_aux is log_gamma (ARD) or log_sigma
// (spectrum), parallel to `kernels`.
struct InducingVars {
  std::vector<diff::Var> kernel_log_alpha;
  std::vector<diff::Var> kernel_aux;
  std::vector<diff::Var> mu;
  std::vector<diff::Var> sigma_param;
};

// Parameter-independent caches for one (pseudo-inputs, batch) pair.
struct GpBatchCache {
  std::vector<kern::GramCache> kbar;      // per kernel
  std::vector<kern::GramCache> kcross;    // per kernel, M x B
  std::vector<Matrix> self_row;           // per kernel, 1 x B
};
GpBatchCache gp_batch_cache(const kern::Inputs& batch, const InducingState& state);

struct GpTapeMoments {
  diff::Var a;       // d0 x B
  diff::Var b;       // d0 x B, may carry round-off negatives
  diff::Var sqrt_b;  // d0 x B, clamped sqrt with the 1e-10*k(x,x) tolerance
};

GpTapeMoments marginal_moments_tape(diff::Tape& tape, const GpBatchCache& cache,
                                    const InducingVars& vars,
                                    const InducingState& state);

diff::Var kl_inducing_tape(diff::Tape& tape, const GpBatchCache& cache,
                           const InducingVars& vars, const InducingState& state);

// Moments and KL built together so the K-bar nodes (and their Cholesky
// factors) are shared; training uses this.
struct GpTapeBundle {
  GpTapeMoments moments;
  diff::Var kl;
};
GpTapeBundle gp_layer_tape(diff::Tape& tape, const GpBatchCache& cache,
                           const InducingVars& vars, const InducingState& state);

}  // namespace gpdrf::gp
