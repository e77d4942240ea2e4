#include "gpdrf/model.hpp"

#include <string>
#include <variant>

#include "gpdrf/counter_rng.hpp"
#include "gpdrf/errors.hpp"

namespace gpdrf::model {

namespace {

// Init-stream word layout: {init, block, field, i, j} where block 0 is the
// GP layer and block l+1 is stack layer l.
Matrix init_mu(Eigen::Index m, std::uint64_t j, std::uint64_t seed) {
  Matrix mu(m, 1);
  for (Eigen::Index i = 0; i < m; ++i)
    mu(i, 0) = 0.1 * rng::normal(seed, {rng::word(rng::Stream::init), 0, 0, j,
                                        static_cast<std::uint64_t>(i)});
  return mu;
}

}  // namespace

GpDrfModel build_model(const ModelShape& shape, const kern::KernelSpec& kernel,
                       const kern::Inputs& pseudo_inputs, Eigen::Index input_dim,
                       const lik::LikelihoodSpec& likelihood, std::uint64_t seed) {
  lik::validate(likelihood);
  if (shape.layer_widths.size() != shape.feature_counts.size())
    throw ConfigError("model: " + std::to_string(shape.layer_widths.size()) +
                      " layer widths but " +
                      std::to_string(shape.feature_counts.size()) +
                      " feature counts");

  GpDrfModel m;
  m.arch = shape.arch;
  m.likelihood = likelihood;
  m.spectra_mode = shape.mode;
  m.init_seed = seed;

  Eigen::Index d0 = 0;
  if (shape.arch == Arch::drf) {
    if (!shape.layer_widths.empty() && input_dim < 1)
      throw ConfigError("model: drf needs a positive input dimension");
    if (shape.layer_widths.empty())
      throw ConfigError("model: drf with no layers computes nothing");
    d0 = input_dim;
  } else {
    d0 = shape.arch == Arch::gp ? likelihood.output_dim() : shape.gp_output_dim;
    if (d0 < 1) throw ConfigError("model: GP output dimension must be positive");
    const Eigen::Index m_count = kern::input_count(pseudo_inputs);
    if (m_count < 1) throw ConfigError("model: no pseudo-inputs");
    m.inducing.pseudo_inputs = pseudo_inputs;
    const std::size_t n_kernels =
        shape.per_dim_kernels ? static_cast<std::size_t>(d0) : 1;
    m.inducing.kernels.assign(n_kernels, kernel);
    for (Eigen::Index j = 0; j < d0; ++j) {
      m.inducing.mu.push_back(
          init_mu(m_count, static_cast<std::uint64_t>(j), seed));
      m.inducing.sigma_param.push_back(Matrix::Zero(m_count, m_count));
    }
  }

  const std::vector<Eigen::Index>& widths =
      shape.arch == Arch::gp ? std::vector<Eigen::Index>{} : shape.layer_widths;
  Eigen::Index d_in = d0;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    m.layers.push_back(drf::init_layer(d_in, shape.feature_counts[l], widths[l],
                                       shape.mode, seed,
                                       static_cast<std::uint64_t>(l + 1)));
    d_in = widths[l];
  }

  validate(m);
  return m;
}

void validate(const GpDrfModel& m) {
  lik::validate(m.likelihood);
  if (m.arch == Arch::gp && !m.layers.empty())
    throw ConfigError("model: gp baseline cannot carry stack layers");
  if (m.arch == Arch::drf && m.layers.empty())
    throw ConfigError("model: drf baseline needs at least one layer");
  if (m.has_gp()) {
    if (m.inducing.output_dim() < 1)
      throw ConfigError("model: GP layer has no output dims");
    if (m.inducing.kernels.size() != 1 &&
        m.inducing.kernels.size() !=
            static_cast<std::size_t>(m.inducing.output_dim()))
      throw ConfigError("model: kernel count must be 1 or the GP output dim");
  }

  Eigen::Index width = m.feature_dim();
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    if (m.layers[l].in_dim() != width)
      throw ConfigError("model: layer " + std::to_string(l) + " expects " +
                        std::to_string(m.layers[l].in_dim()) +
                        " inputs but receives " + std::to_string(width));
    if (m.layers[l].mode != m.spectra_mode)
      throw ConfigError("model: layer " + std::to_string(l) +
                        " disagrees with the model's spectra mode");
    width = m.layers[l].out_dim();
  }
  if (width != m.likelihood.output_dim())
    throw ConfigError("model: final width " + std::to_string(width) +
                      " does not match the likelihood's " +
                      std::to_string(m.likelihood.output_dim()));
}

int ParamPack::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

namespace {

// One traversal drives pack, unpack, and any future walker; the visitor gets
// (name, matrix-valued view) for every trainable parameter in frozen order.
template <typename ModelT, typename Fn>
void walk_parameters(ModelT& m, Fn&& fn) {
  if (m.has_gp()) {
    for (std::size_t ki = 0; ki < m.inducing.kernels.size(); ++ki) {
      const std::string base = "gp.kernel." + std::to_string(ki) + ".";
      auto& spec = m.inducing.kernels[ki];
      if (auto* ard = std::get_if<kern::ArdParams>(&spec)) {
        fn(base + "log_alpha", &ard->log_alpha, 1, 1);
        fn(base + "log_gamma", ard->log_gamma.data(), ard->log_gamma.size(), 1);
      } else {
        auto& sp = std::get<kern::SpectrumParams>(spec);
        fn(base + "log_alpha", &sp.log_alpha, 1, 1);
        fn(base + "log_sigma", &sp.log_sigma, 1, 1);
      }
    }
    for (std::size_t j = 0; j < m.inducing.mu.size(); ++j) {
      auto& mu = m.inducing.mu[j];
      auto& sp = m.inducing.sigma_param[j];
      fn("gp.mu." + std::to_string(j), mu.data(), mu.rows(), mu.cols());
      fn("gp.sigma." + std::to_string(j), sp.data(), sp.rows(), sp.cols());
    }
  }
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& layer = m.layers[l];
    const std::string base = "drf." + std::to_string(l) + ".";
    fn(base + "w_mean", layer.w_mean.data(), layer.w_mean.rows(),
       layer.w_mean.cols());
    fn(base + "w_logscale", layer.w_logscale.data(), layer.w_logscale.rows(),
       layer.w_logscale.cols());
    if (layer.mode != drf::SpectraMode::prior_fixed) {
      fn(base + "omega_mean", layer.omega_mean.data(), layer.omega_mean.rows(),
         layer.omega_mean.cols());
      fn(base + "omega_logscale", layer.omega_logscale.data(),
         layer.omega_logscale.rows(), layer.omega_logscale.cols());
    }
    fn(base + "lambda", layer.lambda_logscales.data(),
       layer.lambda_logscales.size(), 1);
    fn(base + "log_alpha", &layer.log_out_alpha, 1, 1);
  }
  if (m.likelihood.kind == lik::Kind::gaussian)
    fn("lik.log_noise_var", &m.likelihood.log_noise_var, 1, 1);
}

}  // namespace

ParamPack pack_parameters(const GpDrfModel& m) {
  ParamPack pack;
  walk_parameters(m, [&](const std::string& name, const double* data,
                         Eigen::Index rows, Eigen::Index cols) {
    pack.names.push_back(name);
    pack.values.push_back(Eigen::Map<const Matrix>(data, rows, cols));
  });
  return pack;
}

void unpack_parameters(const ParamPack& pack, GpDrfModel& m) {
  std::size_t i = 0;
  walk_parameters(m, [&](const std::string& name, double* data,
                         Eigen::Index rows, Eigen::Index cols) {
    if (i >= pack.size())
      throw ShapeError("parameter pack: ran out of entries at " + name);
    if (pack.names[i] != name)
      throw ShapeError("parameter pack: expected " + name + ", found " +
                       pack.names[i]);
    const Matrix& v = pack.values[i];
    if (v.rows() != rows || v.cols() != cols)
      throw ShapeError("parameter pack: " + name + " is " +
                       std::to_string(v.rows()) + "x" + std::to_string(v.cols()) +
                       ", model wants " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    Eigen::Map<Matrix>(data, rows, cols) = v;
    ++i;
  });
  if (i != pack.size())
    throw ShapeError("parameter pack: " + std::to_string(pack.size() - i) +
                     " extra entries");
}

}  // namespace gpdrf::model
