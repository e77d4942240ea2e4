#pragma once

#include <cstdint>
#include <vector>

#include "gpdrf/data_io.hpp"
#include "gpdrf/model.hpp"

namespace gpdrf::infer {

using diff::Matrix;

enum class InducingStrategy { random, kernel_medoids };

// Training profile. The documented defaults follow the reference setup:
// single-example steps, S = 100 forward samples, Adam at 1e-5 for 1000
// epochs, L2 on every parameter. Batch size is freely overridable (32 is a
// practical desk-scale choice).
struct TrainConfig {
  int epochs = 1000;
  double learning_rate = 1e-5;
  Eigen::Index batch = 1;
  int mc_samples = 100;  // S, forward samples per step
  int eval_draws = 100;  // T, posterior draws at prediction time
  drf::SpectraMode mode = drf::SpectraMode::var_resampled;
  std::uint64_t seed = 0;
  double l2_coefficient = 5e-4;
  Eigen::Index inducing_count = 200;
  InducingStrategy strategy = InducingStrategy::random;
  // Literal reading of the frozen-noise option: pin the GP-layer noise keys
  // too. Off by default since eps is keyed per datum while batches change,
  // so freezing e and tau alone already fixes every per-step draw.
  bool fix_latent_noise = false;
};

// n is the training set size (bounds the inducing count).
void validate(const TrainConfig& cfg, Eigen::Index n);

// Throws unless the model can consume this dataset: input kind and width
// must match the first layer, and the likelihood must match the task.
void check_model_data(const model::GpDrfModel& m, const data::Dataset& d);

// Addresses into the counter RNG for the noise tensors of one optimizer
// step. Nothing is stored; a draw is a pure function of its key. Under the
// frozen-noise spectra option the (epoch, step) words are pinned to zero,
// so every step reads back the same e and tau; otherwise they advance with
// position(). eps is keyed by the datum's global row index, so an example
// keeps its draw no matter which batch it lands in.
class NoiseBank {
 public:
  NoiseBank(const model::GpDrfModel& m, std::uint64_t seed,
            bool fix_latent_noise);

  void position(std::uint64_t epoch, std::uint64_t step);

  Matrix weight_noise(std::uint64_t s, std::size_t layer) const;   // e
  Matrix spectra_noise(std::uint64_t s, std::size_t layer) const;  // tau
  // d0 x |rows| eps block for the given dataset rows.
  Matrix latent_noise(std::uint64_t s, const std::vector<int>& rows) const;

 private:
  const model::GpDrfModel* model_;
  std::uint64_t seed_;
  bool freeze_reparam_;
  bool freeze_latent_;
  std::uint64_t epoch_ = 0;
  std::uint64_t step_ = 0;
};

// Tape leaves for every trainable parameter, bound from a parameter pack in
// its frozen order. `leaves` is parallel to the pack, for gradient readout
// and the L2 term. Under prior-fixed spectra the omega posterior slots stay
// unbound, matching the pack.
struct ModelVars {
  gp::InducingVars gp;
  std::vector<drf::DrfLayerVars> layers;
  diff::Var log_noise_var;  // gaussian likelihood only
};

ModelVars bind_leaves(diff::Tape& tape, const model::GpDrfModel& m,
                      const model::ParamPack& pack,
                      std::vector<diff::Var>& leaves);

// One recorded objective evaluation.
struct ElboBuild {
  diff::Var elbo;  // scalar ELBO estimate
  diff::Var loss;  // l2_penalty - elbo; training minimizes this
  std::vector<diff::Var> leaves;
};

// Stochastic ELBO over the given dataset rows, scaled by N/|rows| so the
// data term stays unbiased under mini-batching:
//   (N/B) (1/S) sum_{n,s} log P(y_n | G(F_n^(s))) - KL_F - sum_l KL_W
//   - sum_l KL_Omega (dropped under prior-fixed spectra).
// Parameter values are read from `pack`, not from the model, which only
// provides structure.
ElboBuild build_elbo(diff::Tape& tape, const model::GpDrfModel& m,
                     const model::ParamPack& pack, const data::Dataset& train,
                     const std::vector<int>& rows, const NoiseBank& bank,
                     int mc_samples, double l2_coefficient);

struct TrainResult {
  std::vector<double> step_trace;   // ELBO estimate per optimizer step
  std::vector<double> epoch_trace;  // per-epoch means of step_trace
};

// epochs * ceil(N/batch) Adam steps on l2 - elbo, batches drawn uniformly
// without replacement per step, noise refreshed per the spectra option.
// Deterministic given cfg.seed; the model is updated in place. A non-finite
// ELBO raises DivergenceError naming the step.
TrainResult train(model::GpDrfModel& m, const data::Dataset& trainset,
                  const TrainConfig& cfg);

// Picks m pseudo-inputs from x. `random` samples uniformly without
// replacement; `kernel_medoids` runs k-medoids under the kernel-induced
// distance sqrt(k(x,x) + k(x',x') - 2 k(x,x')), at most 20 refinement
// sweeps, which needs only kernel values and so works for sequences too.
// m = n returns x unchanged; m > n is a configuration error.
kern::Inputs select_inducing(const kern::Inputs& x, Eigen::Index m,
                             InducingStrategy strategy,
                             const kern::KernelSpec& kernel,
                             std::uint64_t seed);

}  // namespace gpdrf::infer
