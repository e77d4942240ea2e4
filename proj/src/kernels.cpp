#include "gpdrf/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <unordered_map>

#include "gpdrf/errors.hpp"

namespace gpdrf::kern {

Eigen::Index input_count(const Inputs& x) {
  if (const auto* m = std::get_if<Matrix>(&x)) return m->rows();
  return static_cast<Eigen::Index>(std::get<std::vector<std::string>>(x).size());
}

Eigen::Index input_dim(const Inputs& x) {
  if (const auto* m = std::get_if<Matrix>(&x)) return m->cols();
  return 0;
}

Inputs input_subset(const Inputs& x, const std::vector<int>& rows) {
  if (const auto* m = std::get_if<Matrix>(&x)) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m->cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = m->row(rows[i]);
    }
    return out;
  }
  const auto& seqs = std::get<std::vector<std::string>>(x);
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(seqs[static_cast<std::size_t>(r)]);
  return out;
}

bool inputs_equal(const Inputs& a, const Inputs& b) {
  if (a.index() != b.index()) return false;
  if (const auto* m = std::get_if<Matrix>(&a)) {
    const auto& m2 = std::get<Matrix>(b);
    return m->rows() == m2.rows() && m->cols() == m2.cols() && *m == m2;
  }
  return std::get<std::vector<std::string>>(a) ==
         std::get<std::vector<std::string>>(b);
}

double ard_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& x2,
                const ArdParams& p) {
  if (x.size() != x2.size() || x.size() != p.dim()) {
    throw ShapeError("ard_eval: dims " + std::to_string(x.size()) + ", " +
                     std::to_string(x2.size()) + " with " + std::to_string(p.dim()) +
                     " lengthscales");
  }
  const double q =
      ((x - x2).array().square() / p.log_gamma.array().exp()).sum();
  return p.alpha() * std::exp(-0.5 * q);
}

namespace {

struct AlphabetIndex {
  std::array<int, 256> code;
  int size;

  explicit AlphabetIndex(const std::string& alphabet) {
    if (alphabet.empty()) throw ConfigError("spectrum kernel: empty alphabet");
    code.fill(-1);
    for (std::size_t i = 0; i < alphabet.size(); ++i) {
      const auto c = static_cast<unsigned char>(alphabet[i]);
      if (code[c] != -1) {
        throw ConfigError(std::string("spectrum kernel: duplicate alphabet symbol '") +
                          alphabet[i] + "'");
      }
      code[c] = static_cast<int>(i);
    }
    size = static_cast<int>(alphabet.size());
  }

  int at(char c, std::size_t position) const {
    const int v = code[static_cast<unsigned char>(c)];
    if (v < 0) {
      throw InvalidArgumentError(std::string("sequence symbol '") + c +
                                 "' at position " + std::to_string(position) +
                                 " is not in the alphabet");
    }
    return v;
  }
};

void check_spectrum_config(const SpectrumParams& p) {
  if (p.k < 1) throw ConfigError("spectrum kernel: k must be >= 1");
  if (p.m < 0 || p.m >= p.k) {
    throw ConfigError("spectrum kernel: mismatch budget must satisfy 0 <= m < k");
  }
  // k-mer codes are base-|alphabet| integers in 64 bits
  const double bits = p.k * std::log2(static_cast<double>(p.alphabet.size()));
  if (bits > 63.0) {
    throw ConfigError("spectrum kernel: alphabet^k exceeds the 64-bit k-mer index");
  }
}

// Adds every k-mer within Hamming distance `budget` of window w (given as
// alphabet indices), starting at position `pos`, to the accumulator.
void expand_ball(const std::vector<int>& w, std::size_t pos, int budget,
                 std::uint64_t code, std::uint64_t place, int alphabet_size,
                 std::unordered_map<std::uint64_t, double>& acc) {
  if (pos == w.size()) {
    acc[code] += 1.0;
    return;
  }
  // keep the original symbol
  expand_ball(w, pos + 1, budget, code + place * static_cast<std::uint64_t>(w[pos]),
              place * static_cast<std::uint64_t>(alphabet_size), alphabet_size, acc);
  if (budget > 0) {
    for (int a = 0; a < alphabet_size; ++a) {
      if (a == w[pos]) continue;
      expand_ball(w, pos + 1, budget - 1, code + place * static_cast<std::uint64_t>(a),
                  place * static_cast<std::uint64_t>(alphabet_size), alphabet_size,
                  acc);
    }
  }
}

}  // namespace

SpectrumProfile::SpectrumProfile(const std::string& s, const SpectrumParams& p) {
  check_spectrum_config(p);
  const AlphabetIndex idx(p.alphabet);
  std::vector<int> symbols(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) symbols[i] = idx.at(s[i], i);
  if (static_cast<int>(s.size()) < p.k) return;  // kernel value 0 everywhere

  std::unordered_map<std::uint64_t, double> acc;
  std::vector<int> window(static_cast<std::size_t>(p.k));
  for (std::size_t pos = 0; pos + static_cast<std::size_t>(p.k) <= s.size(); ++pos) {
    std::copy_n(symbols.begin() + static_cast<std::ptrdiff_t>(pos),
                p.k, window.begin());
    expand_ball(window, 0, p.m, 0, 1, idx.size, acc);
  }
  counts_.assign(acc.begin(), acc.end());
  std::sort(counts_.begin(), counts_.end());
  for (const auto& [code, c] : counts_) self_ += c * c;
}

double SpectrumProfile::dot(const SpectrumProfile& other) const {
  double total = 0.0;
  auto it = counts_.begin();
  auto jt = other.counts_.begin();
  while (it != counts_.end() && jt != other.counts_.end()) {
    if (it->first < jt->first) ++it;
    else if (jt->first < it->first) ++jt;
    else {
      total += it->second * jt->second;
      ++it;
      ++jt;
    }
  }
  return total;
}

namespace {

// Raw similarity before the output scale: normalized profiles raised to the
// temperature exponent, or the bare count dot product.
double spectrum_raw(const SpectrumProfile& a, const SpectrumProfile& b,
                    const SpectrumParams& p) {
  if (a.empty() || b.empty()) return 0.0;
  const double d = a.dot(b);
  if (!p.normalize) return d;
  if (d == 0.0) return 0.0;
  const double cosine = d / std::sqrt(a.self_dot() * b.self_dot());
  return std::pow(cosine, 1.0 / p.sigma());
}

}  // namespace

double spectrum_eval(const std::string& s, const std::string& s2,
                     const SpectrumParams& p) {
  const SpectrumProfile a(s, p);
  const SpectrumProfile b(s2, p);
  return p.alpha() * spectrum_raw(a, b, p);
}

namespace {

Matrix gram_dispatch(const Inputs& x, const Inputs& x2, const KernelSpec& kernel,
                     double jitter) {
  const bool square = inputs_equal(x, x2);
  const Eigen::Index n = input_count(x);
  const Eigen::Index n2 = input_count(x2);
  Matrix g(n, n2);

  if (const auto* ard = std::get_if<ArdParams>(&kernel)) {
    const auto* mx = std::get_if<Matrix>(&x);
    const auto* mx2 = std::get_if<Matrix>(&x2);
    if (mx == nullptr || mx2 == nullptr) {
      throw TaskMismatchError("gram: ARD kernel needs vector inputs");
    }
    for (Eigen::Index j = 0; j < n2; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (square && i < j) {
          g(i, j) = g(j, i);
          continue;
        }
        g(i, j) = ard_eval(mx->row(i).transpose(), mx2->row(j).transpose(), *ard);
      }
    }
  } else {
    const auto& sp = std::get<SpectrumParams>(kernel);
    const auto* sx = std::get_if<std::vector<std::string>>(&x);
    const auto* sx2 = std::get_if<std::vector<std::string>>(&x2);
    if (sx == nullptr || sx2 == nullptr) {
      throw TaskMismatchError("gram: spectrum kernel needs sequence inputs");
    }
    std::vector<SpectrumProfile> px(sx->size());
    for (std::size_t i = 0; i < sx->size(); ++i) px[i] = SpectrumProfile((*sx)[i], sp);
    std::vector<SpectrumProfile> px2;
    if (!square) {
      px2.resize(sx2->size());
      for (std::size_t i = 0; i < sx2->size(); ++i) {
        px2[i] = SpectrumProfile((*sx2)[i], sp);
      }
    }
    const auto& right = square ? px : px2;
    const double alpha = sp.alpha();
    for (Eigen::Index j = 0; j < n2; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (square && i < j) {
          g(i, j) = g(j, i);
          continue;
        }
        g(i, j) = alpha * spectrum_raw(px[static_cast<std::size_t>(i)],
                                       right[static_cast<std::size_t>(j)], sp);
      }
    }
  }

  if (square) g.diagonal().array() += jitter;
  return g;
}

}  // namespace

Matrix gram(const Inputs& x, const Inputs& x2, const KernelSpec& kernel,
            double jitter) {
  return gram_dispatch(x, x2, kernel, jitter);
}

Matrix gram(const Inputs& x, const KernelSpec& kernel, double jitter) {
  return gram_dispatch(x, x, kernel, jitter);
}

PsdFactor::PsdFactor(const Matrix& g) : llt_(g) {
  if (g.rows() != g.cols()) {
    throw ShapeError("psd_factor: matrix is " + std::to_string(g.rows()) + "x" +
                     std::to_string(g.cols()));
  }
  if (llt_.info() != Eigen::Success) {
    throw NotPositiveDefiniteError(
        "psd_factor: Cholesky failed on a " + std::to_string(g.rows()) +
        "-dim Gram matrix; increase the jitter");
  }
}

double PsdFactor::logdet() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

ArdGramCache ard_gram_cache(const Matrix& x, const Matrix& x2) {
  if (x.cols() != x2.cols()) {
    throw ShapeError("ard_gram_cache: column counts " + std::to_string(x.cols()) +
                     " vs " + std::to_string(x2.cols()));
  }
  ArdGramCache c;
  c.rows = x.rows();
  c.cols = x2.rows();
  c.square = (x.rows() == x2.rows()) && (x == x2);
  c.sqdiff_flat.resize(c.rows * c.cols, x.cols());
  for (Eigen::Index d = 0; d < x.cols(); ++d) {
    for (Eigen::Index j = 0; j < c.cols; ++j) {
      for (Eigen::Index i = 0; i < c.rows; ++i) {
        const double diff = x(i, d) - x2(j, d);
        c.sqdiff_flat(i + j * c.rows, d) = diff * diff;
      }
    }
  }
  return c;
}

SpectrumGramCache spectrum_gram_cache(const std::vector<std::string>& s,
                                      const std::vector<std::string>& s2,
                                      const SpectrumParams& p) {
  SpectrumGramCache c;
  c.normalize = p.normalize;
  c.square = (s == s2);
  const auto n = static_cast<Eigen::Index>(s.size());
  const auto n2 = static_cast<Eigen::Index>(s2.size());

  std::vector<SpectrumProfile> px(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) px[i] = SpectrumProfile(s[i], p);
  std::vector<SpectrumProfile> px2;
  if (!c.square) {
    px2.resize(s2.size());
    for (std::size_t i = 0; i < s2.size(); ++i) px2[i] = SpectrumProfile(s2[i], p);
  }
  const auto& right = c.square ? px : px2;

  c.raw.resize(n, n2);
  for (Eigen::Index j = 0; j < n2; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (c.square && i < j) {
        c.raw(i, j) = c.raw(j, i);
        continue;
      }
      const auto& a = px[static_cast<std::size_t>(i)];
      const auto& b = right[static_cast<std::size_t>(j)];
      if (a.empty() || b.empty()) {
        c.raw(i, j) = 0.0;
      } else if (p.normalize) {
        const double d = a.dot(b);
        c.raw(i, j) = d == 0.0 ? 0.0 : d / std::sqrt(a.self_dot() * b.self_dot());
      } else {
        c.raw(i, j) = a.dot(b);
      }
    }
  }
  c.mask = (c.raw.array() > 0.0).cast<double>();
  c.log_raw = (c.raw.array() > 0.0).select(c.raw.array().log(), 0.0);
  return c;
}

diff::Var ard_gram_tape(diff::Tape& tape, const ArdGramCache& cache,
                        diff::Var log_alpha, diff::Var log_gamma,
                        double jitter_scale) {
  using namespace diff;
  const Var dist = matmul(tape.constant(cache.sqdiff_flat), exp(neg(log_gamma)));
  const Var q = reshape(dist, cache.rows, cache.cols);
  Var k = exp(sub(bcast_scalar(log_alpha, cache.rows, cache.cols), scale(q, 0.5)));
  if (cache.square && jitter_scale > 0.0) {
    const Var ridge = mul(bcast_scalar(exp(log_alpha), cache.rows, cache.rows),
                          tape.constant(jitter_scale *
                                        Matrix::Identity(cache.rows, cache.rows)));
    k = add(k, ridge);
  }
  return k;
}

diff::Var spectrum_gram_tape(diff::Tape& tape, const SpectrumGramCache& cache,
                             diff::Var log_alpha, diff::Var log_sigma,
                             double jitter_scale) {
  using namespace diff;
  const Eigen::Index n = cache.raw.rows();
  const Eigen::Index n2 = cache.raw.cols();
  Var k{};
  if (cache.normalize) {
    // raw^(1/sigma) = exp(log(raw)/sigma), with the mask holding exact zeros
    const Var temp = bcast_scalar(exp(neg(log_sigma)), n, n2);
    const Var powed = exp(mul(temp, tape.constant(cache.log_raw)));
    k = mul(bcast_scalar(exp(log_alpha), n, n2),
            mul(tape.constant(cache.mask), powed));
  } else {
    k = mul(bcast_scalar(exp(log_alpha), n, n2), tape.constant(cache.raw));
  }
  if (cache.square && jitter_scale > 0.0) {
    const Var ridge = mul(bcast_scalar(exp(log_alpha), n, n),
                          tape.constant(jitter_scale * Matrix::Identity(n, n)));
    k = add(k, ridge);
  }
  return k;
}

GramCache make_gram_cache(const Inputs& x, const Inputs& x2, const KernelSpec& k) {
  if (std::holds_alternative<ArdParams>(k)) {
    const auto* mx = std::get_if<Matrix>(&x);
    const auto* mx2 = std::get_if<Matrix>(&x2);
    if (mx == nullptr || mx2 == nullptr) {
      throw TaskMismatchError("gram cache: ARD kernel needs vector inputs");
    }
    return ard_gram_cache(*mx, *mx2);
  }
  const auto* sx = std::get_if<std::vector<std::string>>(&x);
  const auto* sx2 = std::get_if<std::vector<std::string>>(&x2);
  if (sx == nullptr || sx2 == nullptr) {
    throw TaskMismatchError("gram cache: spectrum kernel needs sequence inputs");
  }
  return spectrum_gram_cache(*sx, *sx2, std::get<SpectrumParams>(k));
}

diff::Var gram_tape(diff::Tape& tape, const GramCache& cache, diff::Var log_alpha,
                    diff::Var aux, double jitter_scale) {
  if (const auto* ard = std::get_if<ArdGramCache>(&cache)) {
    return ard_gram_tape(tape, *ard, log_alpha, aux, jitter_scale);
  }
  return spectrum_gram_tape(tape, std::get<SpectrumGramCache>(cache), log_alpha, aux,
                            jitter_scale);
}

Matrix self_similarity_row(const Inputs& x, const KernelSpec& k) {
  const Eigen::Index n = input_count(x);
  if (std::holds_alternative<ArdParams>(k)) return Matrix::Ones(1, n);
  const auto& p = std::get<SpectrumParams>(k);
  const auto& seqs = std::get<std::vector<std::string>>(x);
  Matrix row(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const SpectrumProfile prof(seqs[static_cast<std::size_t>(i)], p);
    if (prof.empty()) {
      row(0, i) = 0.0;
    } else {
      row(0, i) = p.normalize ? 1.0 : prof.self_dot();
    }
  }
  return row;
}

}  // namespace gpdrf::kern
