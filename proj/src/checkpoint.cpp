#include "gpdrf/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "gpdrf/errors.hpp"

namespace gpdrf::ckpt {

namespace {

constexpr char kMagic[] = "GPDRFCKP";  // 8 bytes on disk, no terminator
constexpr std::uint32_t kVersion = 1;

// Block payload kinds.
enum : std::uint32_t {
  kU64 = 0,
  kF64 = 1,
  kMatrix = 2,   // u64 rows, u64 cols, column-major f64 data
  kStrings = 3,  // u64 count, then u64 length + bytes per entry
};

class Writer {
 public:
  Writer() { out_.append(kMagic, 8); raw_u32(kVersion); }

  void u64_block(const std::string& name, std::uint64_t v) {
    header(name, kU64);
    raw_u64(v);
  }
  void f64_block(const std::string& name, double v) {
    header(name, kF64);
    raw_f64(v);
  }
  void matrix_block(const std::string& name, const diff::Matrix& m) {
    header(name, kMatrix);
    raw_u64(static_cast<std::uint64_t>(m.rows()));
    raw_u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) raw_f64(m(i, j));
  }
  void strings_block(const std::string& name,
                     const std::vector<std::string>& list) {
    header(name, kStrings);
    raw_u64(list.size());
    for (const std::string& s : list) {
      raw_u64(s.size());
      out_.append(s);
    }
  }

  std::string take() { return std::move(out_); }

 private:
  void raw_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void raw_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
      out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void raw_f64(double v) { raw_u64(std::bit_cast<std::uint64_t>(v)); }
  void header(const std::string& name, std::uint32_t kind) {
    raw_u32(static_cast<std::uint32_t>(name.size()));
    out_.append(name);
    raw_u32(kind);
  }

  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {
    need(12, "header");
    if (bytes_.compare(0, 8, kMagic, 8) != 0)
      throw CheckpointError(origin_ + ": not a gpdrf checkpoint");
    pos_ = 8;
    const std::uint32_t version = raw_u32();
    if (version != kVersion)
      throw CheckpointError(origin_ + ": unsupported checkpoint version " +
                            std::to_string(version));
  }

  std::uint64_t u64_block(const std::string& name) {
    expect(name, kU64);
    return raw_u64();
  }
  double f64_block(const std::string& name) {
    expect(name, kF64);
    return raw_f64();
  }
  diff::Matrix matrix_block(const std::string& name) {
    expect(name, kMatrix);
    const std::uint64_t rows = raw_u64();
    const std::uint64_t cols = raw_u64();
    if (rows > (1u << 30) || cols > (1u << 30) ||
        (rows != 0 && cols > (1u << 30) / rows))
      throw CheckpointError(origin_ + ": block '" + name +
                            "' claims an implausible " + std::to_string(rows) +
                            "x" + std::to_string(cols) + " matrix");
    diff::Matrix m(static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = raw_f64();
    return m;
  }
  std::vector<std::string> strings_block(const std::string& name) {
    expect(name, kStrings);
    const std::uint64_t count = raw_u64();
    if (count > (1u << 30))
      throw CheckpointError(origin_ + ": block '" + name +
                            "' claims an implausible " +
                            std::to_string(count) + " strings");
    std::vector<std::string> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint64_t len = raw_u64();
      need(len, name.c_str());
      out.push_back(bytes_.substr(pos_, len));
      pos_ += len;
    }
    return out;
  }

  void finish() const {
    if (pos_ != bytes_.size())
      throw CheckpointError(origin_ + ": " +
                            std::to_string(bytes_.size() - pos_) +
                            " trailing bytes after the last block");
  }

 private:
  void need(std::uint64_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw CheckpointError(origin_ + ": truncated while reading " +
                            std::string(what));
  }
  std::uint32_t raw_u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t raw_u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += 8;
    return v;
  }
  double raw_f64() { return std::bit_cast<double>(raw_u64()); }
  void expect(const std::string& name, std::uint32_t kind) {
    const std::uint32_t len = raw_u32();
    if (len > 256)
      throw CheckpointError(origin_ + ": block name of " +
                            std::to_string(len) +
                            " bytes where '" + name + "' was expected");
    need(len, name.c_str());
    const std::string found = bytes_.substr(pos_, len);
    pos_ += len;
    const std::uint32_t found_kind = raw_u32();
    if (found != name || found_kind != kind)
      throw CheckpointError(origin_ + ": expected block '" + name +
                            "', found '" + found + "'");
  }

  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

diff::Matrix column(const Eigen::VectorXd& v) {
  diff::Matrix m(v.size(), 1);
  m.col(0) = v;
  return m;
}

std::uint64_t enum_word(model::Arch a) {
  return a == model::Arch::gpdrf ? 0 : a == model::Arch::gp ? 1 : 2;
}
std::uint64_t enum_word(drf::SpectraMode m) {
  return m == drf::SpectraMode::prior_fixed ? 0
         : m == drf::SpectraMode::var_fixed ? 1
                                            : 2;
}

}  // namespace

std::string serialize(const Checkpoint& c) {
  const model::GpDrfModel& m = c.model;
  Writer w;
  w.u64_block("arch", enum_word(m.arch));
  w.u64_block("spectra_mode", enum_word(m.spectra_mode));
  w.u64_block("init_seed", m.init_seed);
  w.u64_block("train_seed", c.train_seed);
  w.u64_block("likelihood.kind",
              m.likelihood.kind == lik::Kind::softmax ? 1 : 0);
  w.u64_block("likelihood.classes",
              static_cast<std::uint64_t>(m.likelihood.classes));
  w.f64_block("likelihood.log_noise_var", m.likelihood.log_noise_var);

  if (m.has_gp()) {
    w.f64_block("gp.jitter_scale", m.inducing.jitter_scale);
    w.u64_block("gp.kernel.count", m.inducing.kernels.size());
    for (std::size_t ki = 0; ki < m.inducing.kernels.size(); ++ki) {
      const std::string base = "gp.kernel." + std::to_string(ki) + ".";
      const auto& spec = m.inducing.kernels[ki];
      if (const auto* ard = std::get_if<kern::ArdParams>(&spec)) {
        w.u64_block(base + "kind", 0);
        w.f64_block(base + "log_alpha", ard->log_alpha);
        w.matrix_block(base + "log_gamma", column(ard->log_gamma));
      } else {
        const auto& sp = std::get<kern::SpectrumParams>(spec);
        w.u64_block(base + "kind", 1);
        w.u64_block(base + "k", static_cast<std::uint64_t>(sp.k));
        w.u64_block(base + "m", static_cast<std::uint64_t>(sp.m));
        w.u64_block(base + "normalize", sp.normalize ? 1 : 0);
        w.f64_block(base + "log_alpha", sp.log_alpha);
        w.f64_block(base + "log_sigma", sp.log_sigma);
        w.strings_block(base + "alphabet", {sp.alphabet});
      }
    }
    if (const auto* x = std::get_if<diff::Matrix>(&m.inducing.pseudo_inputs)) {
      w.u64_block("gp.pseudo.kind", 0);
      w.matrix_block("gp.pseudo.features", *x);
    } else {
      w.u64_block("gp.pseudo.kind", 1);
      w.strings_block(
          "gp.pseudo.sequences",
          std::get<std::vector<std::string>>(m.inducing.pseudo_inputs));
    }
    w.u64_block("gp.output_dim",
                static_cast<std::uint64_t>(m.inducing.output_dim()));
    for (std::size_t j = 0; j < m.inducing.mu.size(); ++j) {
      w.matrix_block("gp.mu." + std::to_string(j), m.inducing.mu[j]);
      w.matrix_block("gp.sigma_param." + std::to_string(j),
                     m.inducing.sigma_param[j]);
    }
  }

  w.u64_block("layer.count", m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const std::string base = "layer." + std::to_string(l) + ".";
    const auto& ly = m.layers[l];
    w.matrix_block(base + "w_mean", ly.w_mean);
    w.matrix_block(base + "w_logscale", ly.w_logscale);
    w.matrix_block(base + "omega_mean", ly.omega_mean);
    w.matrix_block(base + "omega_logscale", ly.omega_logscale);
    w.matrix_block(base + "lambda_logscales", column(ly.lambda_logscales));
    w.f64_block(base + "log_out_alpha", ly.log_out_alpha);
  }

  w.u64_block("standardizer.present", c.has_standardizer ? 1 : 0);
  if (c.has_standardizer) {
    w.matrix_block("standardizer.mean", column(c.standardizer.mean));
    w.matrix_block("standardizer.scale", column(c.standardizer.scale));
  }
  w.strings_block("class_names", c.class_names);
  return w.take();
}

Checkpoint deserialize(const std::string& bytes, const std::string& origin) {
  Reader r(bytes, origin);
  Checkpoint c;
  model::GpDrfModel& m = c.model;

  const std::uint64_t arch = r.u64_block("arch");
  if (arch > 2)
    throw CheckpointError(origin + ": unknown architecture tag " +
                          std::to_string(arch));
  m.arch = arch == 0   ? model::Arch::gpdrf
           : arch == 1 ? model::Arch::gp
                       : model::Arch::drf;
  const std::uint64_t mode = r.u64_block("spectra_mode");
  if (mode > 2)
    throw CheckpointError(origin + ": unknown spectra mode tag " +
                          std::to_string(mode));
  m.spectra_mode = mode == 0   ? drf::SpectraMode::prior_fixed
                   : mode == 1 ? drf::SpectraMode::var_fixed
                               : drf::SpectraMode::var_resampled;
  m.init_seed = r.u64_block("init_seed");
  c.train_seed = r.u64_block("train_seed");
  const std::uint64_t lk = r.u64_block("likelihood.kind");
  if (lk > 1)
    throw CheckpointError(origin + ": unknown likelihood tag " +
                          std::to_string(lk));
  m.likelihood.kind = lk == 1 ? lik::Kind::softmax : lik::Kind::gaussian;
  m.likelihood.classes = static_cast<int>(r.u64_block("likelihood.classes"));
  m.likelihood.log_noise_var = r.f64_block("likelihood.log_noise_var");

  if (m.has_gp()) {
    m.inducing.jitter_scale = r.f64_block("gp.jitter_scale");
    const std::uint64_t kernels = r.u64_block("gp.kernel.count");
    for (std::uint64_t ki = 0; ki < kernels; ++ki) {
      const std::string base = "gp.kernel." + std::to_string(ki) + ".";
      const std::uint64_t kind = r.u64_block(base + "kind");
      if (kind == 0) {
        kern::ArdParams p;
        p.log_alpha = r.f64_block(base + "log_alpha");
        p.log_gamma = r.matrix_block(base + "log_gamma").col(0);
        m.inducing.kernels.push_back(p);
      } else if (kind == 1) {
        kern::SpectrumParams p;
        p.k = static_cast<int>(r.u64_block(base + "k"));
        p.m = static_cast<int>(r.u64_block(base + "m"));
        p.normalize = r.u64_block(base + "normalize") != 0;
        p.log_alpha = r.f64_block(base + "log_alpha");
        p.log_sigma = r.f64_block(base + "log_sigma");
        const auto alphabet = r.strings_block(base + "alphabet");
        if (alphabet.size() != 1)
          throw CheckpointError(origin + ": kernel alphabet block holds " +
                                std::to_string(alphabet.size()) + " entries");
        p.alphabet = alphabet[0];
        m.inducing.kernels.push_back(p);
      } else {
        throw CheckpointError(origin + ": unknown kernel tag " +
                              std::to_string(kind));
      }
    }
    const std::uint64_t pseudo_kind = r.u64_block("gp.pseudo.kind");
    if (pseudo_kind == 0)
      m.inducing.pseudo_inputs = r.matrix_block("gp.pseudo.features");
    else if (pseudo_kind == 1)
      m.inducing.pseudo_inputs = r.strings_block("gp.pseudo.sequences");
    else
      throw CheckpointError(origin + ": unknown pseudo-input tag " +
                            std::to_string(pseudo_kind));
    const std::uint64_t d0 = r.u64_block("gp.output_dim");
    for (std::uint64_t j = 0; j < d0; ++j) {
      m.inducing.mu.push_back(r.matrix_block("gp.mu." + std::to_string(j)));
      m.inducing.sigma_param.push_back(
          r.matrix_block("gp.sigma_param." + std::to_string(j)));
    }
  }

  const std::uint64_t layers = r.u64_block("layer.count");
  for (std::uint64_t l = 0; l < layers; ++l) {
    const std::string base = "layer." + std::to_string(l) + ".";
    drf::DrfLayerState ly;
    ly.w_mean = r.matrix_block(base + "w_mean");
    ly.w_logscale = r.matrix_block(base + "w_logscale");
    ly.omega_mean = r.matrix_block(base + "omega_mean");
    ly.omega_logscale = r.matrix_block(base + "omega_logscale");
    ly.lambda_logscales = r.matrix_block(base + "lambda_logscales").col(0);
    ly.log_out_alpha = r.f64_block(base + "log_out_alpha");
    ly.mode = m.spectra_mode;
    m.layers.push_back(ly);
  }

  c.has_standardizer = r.u64_block("standardizer.present") != 0;
  if (c.has_standardizer) {
    c.standardizer.mean = r.matrix_block("standardizer.mean").col(0);
    c.standardizer.scale = r.matrix_block("standardizer.scale").col(0);
  }
  c.class_names = r.strings_block("class_names");
  r.finish();

  try {
    model::validate(m);
  } catch (const Error& e) {
    throw CheckpointError(origin + ": invalid model state: " + e.what());
  }
  return c;
}

void save(const std::string& path, const Checkpoint& c) {
  const std::string bytes = serialize(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

Checkpoint load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str(), path);
}

}  // namespace gpdrf::ckpt
