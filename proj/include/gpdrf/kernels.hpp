#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "gpdrf/tape.hpp"

namespace gpdrf::kern {

using diff::Matrix;

// Squared-exponential kernel with one lengthscale-square per dimension.
// Both parameters live in log space so Adam can move them unconstrained.
struct ArdParams {
  double log_alpha = 0.0;
  Eigen::VectorXd log_gamma;

  double alpha() const { return std::exp(log_alpha); }
  Eigen::VectorXd gamma() const { return log_gamma.array().exp(); }
  Eigen::Index dim() const { return log_gamma.size(); }
};

// (k,m)-spectrum kernel on symbol sequences: the dot product of mismatch
// k-mer counts, optionally cosine-normalized. When normalized, log_sigma is
// a temperature: the kernel is raised to the power 1/sigma, which keeps
// values in [0,1] and the matrix positive semi-definite for sigma >= 1
// while giving the optimizer a smooth handle on the kernel's sharpness.
struct SpectrumParams {
  int k = 5;
  int m = 1;
  std::string alphabet;
  bool normalize = true;
  double log_alpha = 0.0;
  double log_sigma = 0.0;  // ignored when normalize is false

  double alpha() const { return std::exp(log_alpha); }
  double sigma() const { return std::exp(log_sigma); }
};

using KernelSpec = std::variant<ArdParams, SpectrumParams>;

// Point collections a kernel consumes: rows of a matrix, or sequences.
using Inputs = std::variant<Matrix, std::vector<std::string>>;

Eigen::Index input_count(const Inputs& x);
Eigen::Index input_dim(const Inputs& x);  // columns; 0 for sequences
Inputs input_subset(const Inputs& x, const std::vector<int>& rows);
bool inputs_equal(const Inputs& a, const Inputs& b);

double ard_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& x2,
                const ArdParams& p);

// Mismatch k-mer counts of one sequence, stored sparse and sorted so two
// profiles combine with a merge join. Built once per sequence, reused for
// every Gram entry that touches it.
class SpectrumProfile {
 public:
  SpectrumProfile() = default;
  SpectrumProfile(const std::string& s, const SpectrumParams& p);

  double dot(const SpectrumProfile& other) const;
  double self_dot() const { return self_; }
  bool empty() const { return counts_.empty(); }

 private:
  std::vector<std::pair<std::uint64_t, double>> counts_;
  double self_ = 0.0;
};

double spectrum_eval(const std::string& s, const std::string& s2,
                     const SpectrumParams& p);

// Gram matrix with kernel(X_i, X2_j) entries; jitter lands on the diagonal
// only when the two input lists are value-identical.
Matrix gram(const Inputs& x, const Inputs& x2, const KernelSpec& kernel,
            double jitter);
Matrix gram(const Inputs& x, const KernelSpec& kernel, double jitter);

// Cholesky with this library's error contract. Failure suggests raising the
// jitter, which is what a caller can actually do about it.
class PsdFactor {
 public:
  explicit PsdFactor(const Matrix& g);

  Matrix lower() const { return llt_.matrixL(); }
  Matrix solve(const Matrix& b) const { return llt_.solve(b); }
  double logdet() const;

 private:
  Eigen::LLT<Matrix> llt_;
};

// ---- Gram construction on the tape -------------------------------------
//
// Training differentiates through kernel parameters, so square and cross
// Gram blocks are rebuilt on the tape each step from parameter-independent
// cached pieces.

struct ArdGramCache {
  Matrix sqdiff_flat;  // (N*N2) x d; column i holds the per-pair (x_i - x2_i)^2
  Eigen::Index rows = 0, cols = 0;
  bool square = false;
};
ArdGramCache ard_gram_cache(const Matrix& x, const Matrix& x2);

struct SpectrumGramCache {
  Matrix raw;      // normalized similarities in [0,1], or raw count dots
  Matrix log_raw;  // log of raw where positive, 0 elsewhere
  Matrix mask;     // 1 where raw > 0
  bool normalize = true;
  bool square = false;
};
SpectrumGramCache spectrum_gram_cache(const std::vector<std::string>& s,
                                      const std::vector<std::string>& s2,
                                      const SpectrumParams& p);

// jitter_scale multiplies alpha, so the stabilizer tracks the kernel's
// output scale as log_alpha trains. Applied only to square caches.
diff::Var ard_gram_tape(diff::Tape& tape, const ArdGramCache& cache,
                        diff::Var log_alpha, diff::Var log_gamma,
                        double jitter_scale);
diff::Var spectrum_gram_tape(diff::Tape& tape, const SpectrumGramCache& cache,
                             diff::Var log_alpha, diff::Var log_sigma,
                             double jitter_scale);

constexpr double kDefaultJitterScale = 1e-6;

// Kind-erased cache + builder so GP-layer code stays kernel-agnostic. `aux`
// is log_gamma for ARD and log_sigma for the spectrum kernel.
using GramCache = std::variant<ArdGramCache, SpectrumGramCache>;
GramCache make_gram_cache(const Inputs& x, const Inputs& x2, const KernelSpec& k);
diff::Var gram_tape(diff::Tape& tape, const GramCache& cache, diff::Var log_alpha,
                    diff::Var aux, double jitter_scale);

// Raw self-similarity k(x,x)/alpha per input as a 1 x N row: 1 for ARD and
// normalized spectrum kernels, the squared count norm for unnormalized
// spectrum kernels, 0 for sequences shorter than k.
Matrix self_similarity_row(const Inputs& x, const KernelSpec& k);

}  // namespace gpdrf::kern
