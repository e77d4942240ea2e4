#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gpdrf/drf_stack.hpp"
#include "gpdrf/gp_layer.hpp"
#include "gpdrf/kernels.hpp"
#include "gpdrf/likelihoods.hpp"

namespace gpdrf::model {

using diff::Matrix;

// gpdrf: exact GP input layer feeding the random-feature stack.
// gp:    the GP layer alone (no stack), reading its outputs as the
//        likelihood inputs.
// drf:   the stack alone on raw feature vectors, no GP front end.
enum class Arch { gpdrf, gp, drf };

struct GpDrfModel {
  Arch arch = Arch::gpdrf;
  gp::InducingState inducing;  // untouched when arch == drf
  std::vector<drf::DrfLayerState> layers;
  lik::LikelihoodSpec likelihood;
  drf::SpectraMode spectra_mode = drf::SpectraMode::var_resampled;
  std::uint64_t init_seed = 0;

  bool has_gp() const { return arch != Arch::drf; }
  // Width entering the first stack layer (or the likelihood when L = 0).
  Eigen::Index feature_dim() const {
    if (has_gp()) return inducing.output_dim();
    return layers.empty() ? 0 : layers.front().in_dim();
  }
  Eigen::Index output_dim() const {
    return layers.empty() ? feature_dim() : layers.back().out_dim();
  }
};

// Dimensions requested for a model; the chain is d0 -> widths[0] -> ... and
// must end at the likelihood's width.
struct ModelShape {
  Arch arch = Arch::gpdrf;
  Eigen::Index gp_output_dim = 2;            // ignored for drf (input dim rules)
  std::vector<Eigen::Index> layer_widths;    // d_1..d_L
  std::vector<Eigen::Index> feature_counts;  // M_l, parallel to layer_widths
  drf::SpectraMode mode = drf::SpectraMode::var_resampled;
  bool per_dim_kernels = false;
};

// pseudo_inputs seed the GP layer (ignored for drf); input_dim is the raw
// feature width and is required only for drf. Initialization is a
// deterministic function of the seed.
GpDrfModel build_model(const ModelShape& shape, const kern::KernelSpec& kernel,
                       const kern::Inputs& pseudo_inputs, Eigen::Index input_dim,
                       const lik::LikelihoodSpec& likelihood, std::uint64_t seed);

// Structural checks a deserialized or hand-built model must pass.
void validate(const GpDrfModel& m);

// The trainable parameters as named matrices in a frozen traversal order.
// Under prior_fixed spectra the frequency posterior parameters are omitted.
// Matrix storage is stable after construction, so optimizers may hold
// pointers into `values`.
struct ParamPack {
  std::vector<std::string> names;
  std::vector<Matrix> values;

  std::size_t size() const { return names.size(); }
  int find(const std::string& name) const;
};

ParamPack pack_parameters(const GpDrfModel& m);
void unpack_parameters(const ParamPack& pack, GpDrfModel& m);

}  // namespace gpdrf::model
