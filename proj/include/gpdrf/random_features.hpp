#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "gpdrf/counter_rng.hpp"
#include "gpdrf/tape.hpp"

namespace gpdrf::rf {

using diff::Matrix;

// Draws a d x M frequency matrix with row i ~ N(0, lambda_scales[i]),
// deterministically keyed by (seed, stream, layer, entry). Reading the same
// key always reproduces the same matrix, which is what makes frozen-noise
// training modes and replayable predictions possible.
Matrix sample_spectra(const Eigen::VectorXd& lambda_scales, Eigen::Index m_count,
                      std::uint64_t seed, rng::Stream stream = rng::Stream::spectra,
                      std::uint64_t layer = 0);

// phi(h) = sqrt(alpha/M) [cos(w_1'h), sin(w_1'h), ..., cos(w_M'h), sin(w_M'h)]
// applied column-wise: h is d x B, the result is 2M x B. ||phi||^2 == alpha
// for every column, exactly.
Matrix rff_map(const Matrix& h, const Matrix& spectra, double alpha);

// Same map recorded on the tape; alpha arrives as a node so the output
// variance parameter can train.
diff::Var rff_map_tape(diff::Tape& tape, diff::Var h, diff::Var spectra,
                       diff::Var alpha);

}  // namespace gpdrf::rf
