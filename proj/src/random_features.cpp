#include "gpdrf/random_features.hpp"

#include <cmath>

#include "gpdrf/errors.hpp"

namespace gpdrf::rf {

Matrix sample_spectra(const Eigen::VectorXd& lambda_scales, Eigen::Index m_count,
                      std::uint64_t seed, rng::Stream stream, std::uint64_t layer) {
  if (m_count < 1) throw ConfigError("sample_spectra: feature count must be >= 1");
  for (Eigen::Index i = 0; i < lambda_scales.size(); ++i) {
    if (!(lambda_scales(i) > 0.0)) {
      throw ConfigError("sample_spectra: scale " + std::to_string(i) +
                        " is not positive");
    }
  }
  Matrix omega(lambda_scales.size(), m_count);
  const auto tag = static_cast<std::uint64_t>(stream);
  for (Eigen::Index j = 0; j < m_count; ++j) {
    for (Eigen::Index i = 0; i < lambda_scales.size(); ++i) {
      omega(i, j) = std::sqrt(lambda_scales(i)) *
                    rng::normal(seed, {tag, layer, static_cast<std::uint64_t>(i),
                                       static_cast<std::uint64_t>(j)});
    }
  }
  return omega;
}

Matrix rff_map(const Matrix& h, const Matrix& spectra, double alpha) {
  if (h.rows() != spectra.rows()) {
    throw ShapeError("rff_map: input dim " + std::to_string(h.rows()) +
                     " vs spectra dim " + std::to_string(spectra.rows()));
  }
  const Eigen::Index m = spectra.cols();
  const Matrix z = spectra.transpose() * h;  // M x B
  const double s = std::sqrt(alpha / static_cast<double>(m));
  Matrix phi(2 * m, h.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    phi.row(2 * i) = s * z.row(i).array().cos();
    phi.row(2 * i + 1) = s * z.row(i).array().sin();
  }
  return phi;
}

diff::Var rff_map_tape(diff::Tape&, diff::Var h, diff::Var spectra,
                       diff::Var alpha) {
  using namespace diff;
  if (h.value().rows() != spectra.value().rows()) {
    throw ShapeError("rff_map: input dim " + std::to_string(h.value().rows()) +
                     " vs spectra dim " + std::to_string(spectra.value().rows()));
  }
  const Eigen::Index m = spectra.value().cols();
  const Var z = matmul(spectra, h, true, false);
  const Var interleaved = interleave_rows(cos(z), sin(z));
  const Var s = sqrt(scale(alpha, 1.0 / static_cast<double>(m)));
  return mul(bcast_scalar(s, 2 * m, h.value().cols()), interleaved);
}

}  // namespace gpdrf::rf
