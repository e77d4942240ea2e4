#include "gpdrf/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "gpdrf/errors.hpp"

namespace gpdrf::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void bad_value(const std::string& where, const std::string& key,
                            const std::string& expected,
                            const std::string& value) {
  throw ParseError(where + ": key '" + key + "' expects " + expected +
                   ", got '" + value + "'");
}

double to_double(const std::string& where, const std::string& key,
                 const std::string& v) {
  try {
    std::size_t idx = 0;
    const double d = std::stod(v, &idx);
    if (idx != v.size()) bad_value(where, key, "a number", v);
    return d;
  } catch (const ParseError&) {
    throw;
  } catch (...) {
    bad_value(where, key, "a number", v);
  }
}

long long to_int(const std::string& where, const std::string& key,
                 const std::string& v) {
  try {
    std::size_t idx = 0;
    const long long i = std::stoll(v, &idx);
    if (idx != v.size()) bad_value(where, key, "an integer", v);
    return i;
  } catch (const ParseError&) {
    throw;
  } catch (...) {
    bad_value(where, key, "an integer", v);
  }
}

std::uint64_t to_u64(const std::string& where, const std::string& key,
                     const std::string& v) {
  try {
    std::size_t idx = 0;
    const unsigned long long i = std::stoull(v, &idx);
    if (idx != v.size() || v[0] == '-')
      bad_value(where, key, "a non-negative integer", v);
    return i;
  } catch (const ParseError&) {
    throw;
  } catch (...) {
    bad_value(where, key, "a non-negative integer", v);
  }
}

bool to_bool(const std::string& where, const std::string& key,
             const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  bad_value(where, key, "0/1/true/false", v);
}

std::vector<Eigen::Index> to_index_list(const std::string& where,
                                        const std::string& key,
                                        const std::string& v) {
  std::vector<Eigen::Index> out;
  std::istringstream in(v);
  std::string tok;
  while (in >> tok)
    out.push_back(static_cast<Eigen::Index>(to_int(where, key, tok)));
  return out;
}

void apply(RunConfig& cfg, const std::string& key, const std::string& v,
           const std::string& where) {
  if (key == "task") {
    if (v == "regression")
      cfg.task = data::Task::regression;
    else if (v == "classification")
      cfg.task = data::Task::classification;
    else
      bad_value(where, key, "regression or classification", v);
  } else if (key == "model") {
    if (v == "gpdrf")
      cfg.arch = model::Arch::gpdrf;
    else if (v == "gp")
      cfg.arch = model::Arch::gp;
    else if (v == "drf")
      cfg.arch = model::Arch::drf;
    else
      bad_value(where, key, "gpdrf, gp or drf", v);
  } else if (key == "train_data") {
    cfg.train_data = v;
  } else if (key == "test_data") {
    cfg.test_data = v;
  } else if (key == "data_format") {
    if (v == "tabular")
      cfg.format = DataFormat::tabular;
    else if (v == "sequences")
      cfg.format = DataFormat::sequences;
    else
      bad_value(where, key, "tabular or sequences", v);
  } else if (key == "label_column") {
    cfg.label_column = v;
  } else if (key == "standardize") {
    cfg.standardize = to_bool(where, key, v);
  } else if (key == "classes") {
    cfg.classes = static_cast<int>(to_int(where, key, v));
  } else if (key == "kernel") {
    if (v == "ard")
      cfg.kernel = KernelKind::ard;
    else if (v == "spectrum")
      cfg.kernel = KernelKind::spectrum;
    else
      bad_value(where, key, "ard or spectrum", v);
  } else if (key == "log_alpha") {
    cfg.log_alpha = to_double(where, key, v);
  } else if (key == "log_gamma") {
    cfg.log_gamma = to_double(where, key, v);
  } else if (key == "spectrum_k") {
    cfg.spectrum_k = static_cast<int>(to_int(where, key, v));
  } else if (key == "spectrum_m") {
    cfg.spectrum_m = static_cast<int>(to_int(where, key, v));
  } else if (key == "spectrum_normalize") {
    cfg.spectrum_normalize = to_bool(where, key, v);
  } else if (key == "log_sigma") {
    cfg.log_sigma = to_double(where, key, v);
  } else if (key == "gp_output_dim") {
    cfg.gp_output_dim = static_cast<Eigen::Index>(to_int(where, key, v));
  } else if (key == "layer_widths") {
    cfg.layer_widths = to_index_list(where, key, v);
  } else if (key == "feature_counts") {
    cfg.feature_counts = to_index_list(where, key, v);
  } else if (key == "noise_var") {
    cfg.noise_var = to_double(where, key, v);
  } else if (key == "epochs") {
    cfg.train.epochs = static_cast<int>(to_int(where, key, v));
  } else if (key == "learning_rate") {
    cfg.train.learning_rate = to_double(where, key, v);
  } else if (key == "batch") {
    cfg.train.batch = static_cast<Eigen::Index>(to_int(where, key, v));
  } else if (key == "mc_samples") {
    cfg.train.mc_samples = static_cast<int>(to_int(where, key, v));
  } else if (key == "eval_draws") {
    cfg.train.eval_draws = static_cast<int>(to_int(where, key, v));
  } else if (key == "spectra_mode") {
    if (v == "prior_fixed")
      cfg.train.mode = drf::SpectraMode::prior_fixed;
    else if (v == "var_fixed")
      cfg.train.mode = drf::SpectraMode::var_fixed;
    else if (v == "var_resampled")
      cfg.train.mode = drf::SpectraMode::var_resampled;
    else
      bad_value(where, key, "prior_fixed, var_fixed or var_resampled", v);
  } else if (key == "seed") {
    cfg.train.seed = to_u64(where, key, v);
  } else if (key == "l2_coefficient") {
    cfg.train.l2_coefficient = to_double(where, key, v);
  } else if (key == "inducing_count") {
    cfg.train.inducing_count = static_cast<Eigen::Index>(to_int(where, key, v));
  } else if (key == "inducing_strategy") {
    if (v == "random")
      cfg.train.strategy = infer::InducingStrategy::random;
    else if (v == "kernel_medoids")
      cfg.train.strategy = infer::InducingStrategy::kernel_medoids;
    else
      bad_value(where, key, "random or kernel_medoids", v);
  } else if (key == "fix_latent_noise") {
    cfg.train.fix_latent_noise = to_bool(where, key, v);
  } else if (key == "out_dir") {
    cfg.out_dir = v;
  } else {
    throw ParseError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace

RunConfig parse_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  bool saw_version = false;
  std::set<std::string> seen;
  while (std::getline(in, raw)) {
    ++number;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::string where = origin + ":" + std::to_string(number);
    const auto sp = line.find_first_of(" \t");
    const std::string key = line.substr(0, sp);
    const std::string value =
        sp == std::string::npos ? "" : trim(line.substr(sp));
    if (!saw_version) {
      if (key != "gpdrf_config_version")
        throw ParseError(where +
                         ": first entry must be 'gpdrf_config_version 1'");
      if (value != "1")
        throw ParseError(where + ": unsupported config version '" + value +
                         "'");
      saw_version = true;
      continue;
    }
    if (key == "gpdrf_config_version" || !seen.insert(key).second)
      throw ParseError(where + ": duplicate key '" + key + "'");
    if (value.empty())
      throw ParseError(where + ": key '" + key + "' has no value");
    apply(cfg, key, value, where);
  }
  if (!saw_version)
    throw ParseError(origin + ": missing 'gpdrf_config_version 1' header");
  return cfg;
}

RunConfig parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

void validate(const RunConfig& cfg) {
  if (cfg.train_data.empty())
    throw ConfigError("config: train_data is required");
  if (cfg.layer_widths.size() != cfg.feature_counts.size())
    throw ConfigError("config: " + std::to_string(cfg.layer_widths.size()) +
                      " layer widths but " +
                      std::to_string(cfg.feature_counts.size()) +
                      " feature counts");
  for (std::size_t l = 0; l < cfg.layer_widths.size(); ++l) {
    if (cfg.layer_widths[l] < 1 || cfg.feature_counts[l] < 1)
      throw ConfigError("config: layer " + std::to_string(l) +
                        " needs a positive width and feature count");
  }
  if (cfg.arch == model::Arch::gp && !cfg.layer_widths.empty())
    throw ConfigError("config: model gp takes no stack layers");
  if (cfg.arch == model::Arch::drf && cfg.layer_widths.empty())
    throw ConfigError("config: model drf needs at least one layer");
  if (cfg.arch == model::Arch::gpdrf && cfg.gp_output_dim < 1)
    throw ConfigError("config: gp_output_dim must be positive");

  if (cfg.task == data::Task::classification) {
    if (cfg.classes < 0 || cfg.classes == 1)
      throw ConfigError("config: classes must be 0 (inferred) or at least 2");
  } else if (cfg.classes != 0) {
    throw ConfigError("config: classes is a classification setting");
  }
  // The chain down to the likelihood can only be checked once the output
  // width is known; with classes inferred it is re-checked after loading.
  // The gp baseline is exempt: its output width is forced to the
  // likelihood's at build time, so one config can serve every --model.
  const Eigen::Index lik_dim =
      cfg.task == data::Task::classification ? cfg.classes : 1;
  if (lik_dim > 0) {
    const Eigen::Index last =
        !cfg.layer_widths.empty()          ? cfg.layer_widths.back()
        : cfg.arch == model::Arch::gpdrf ? cfg.gp_output_dim
                                           : lik_dim;
    if (last != lik_dim)
      throw ConfigError("config: the chain ends at width " +
                        std::to_string(last) + " but the likelihood needs " +
                        std::to_string(lik_dim));
  }

  if (cfg.format == DataFormat::sequences) {
    if (cfg.arch == model::Arch::drf)
      throw ConfigError("config: model drf cannot read sequences");
    if (cfg.kernel != KernelKind::spectrum)
      throw ConfigError("config: sequence data needs the spectrum kernel");
    if (cfg.task != data::Task::classification)
      throw ConfigError("config: sequence data is classification only");
  } else if (cfg.kernel == KernelKind::spectrum &&
             cfg.arch != model::Arch::drf) {
    throw ConfigError("config: the spectrum kernel needs sequence data");
  }
  if (cfg.spectrum_k < 1)
    throw ConfigError("config: spectrum_k must be positive");
  if (cfg.spectrum_m < 0)
    throw ConfigError("config: spectrum_m must be non-negative");
  if (!(cfg.noise_var > 0.0))
    throw ConfigError("config: noise_var must be positive");

  if (cfg.train.epochs < 0)
    throw ConfigError("config: epochs must be non-negative");
  if (cfg.train.learning_rate < 0.0)
    throw ConfigError("config: learning_rate must be non-negative");
  if (cfg.train.l2_coefficient < 0.0)
    throw ConfigError("config: l2_coefficient must be non-negative");
  if (cfg.train.batch < 1)
    throw ConfigError("config: batch must be at least 1");
  if (cfg.train.mc_samples < 1)
    throw ConfigError("config: mc_samples must be at least 1");
  if (cfg.train.eval_draws < 2)
    throw ConfigError("config: eval_draws must be at least 2");
  if (cfg.train.inducing_count < 1)
    throw ConfigError("config: inducing_count must be at least 1");
}

std::string render(const RunConfig& cfg) {
  std::ostringstream out;
  out << "gpdrf_config_version 1\n";
  out << "task "
      << (cfg.task == data::Task::classification ? "classification"
                                                 : "regression")
      << '\n';
  out << "model "
      << (cfg.arch == model::Arch::gpdrf ? "gpdrf"
          : cfg.arch == model::Arch::gp ? "gp"
                                        : "drf")
      << '\n';
  if (!cfg.train_data.empty()) out << "train_data " << cfg.train_data << '\n';
  if (!cfg.test_data.empty()) out << "test_data " << cfg.test_data << '\n';
  out << "data_format "
      << (cfg.format == DataFormat::sequences ? "sequences" : "tabular")
      << '\n';
  if (!cfg.label_column.empty())
    out << "label_column " << cfg.label_column << '\n';
  out << "standardize " << (cfg.standardize ? 1 : 0) << '\n';
  if (cfg.classes != 0) out << "classes " << cfg.classes << '\n';
  out << "kernel "
      << (cfg.kernel == KernelKind::spectrum ? "spectrum" : "ard") << '\n';
  out << "log_alpha " << format_value(cfg.log_alpha) << '\n';
  out << "log_gamma " << format_value(cfg.log_gamma) << '\n';
  if (cfg.kernel == KernelKind::spectrum) {
    out << "spectrum_k " << cfg.spectrum_k << '\n';
    out << "spectrum_m " << cfg.spectrum_m << '\n';
    out << "spectrum_normalize " << (cfg.spectrum_normalize ? 1 : 0) << '\n';
    out << "log_sigma " << format_value(cfg.log_sigma) << '\n';
  }
  out << "gp_output_dim " << cfg.gp_output_dim << '\n';
  if (!cfg.layer_widths.empty()) {
    out << "layer_widths";
    for (Eigen::Index w : cfg.layer_widths) out << ' ' << w;
    out << '\n';
    out << "feature_counts";
    for (Eigen::Index c : cfg.feature_counts) out << ' ' << c;
    out << '\n';
  }
  out << "noise_var " << format_value(cfg.noise_var) << '\n';
  out << "epochs " << cfg.train.epochs << '\n';
  out << "learning_rate " << format_value(cfg.train.learning_rate) << '\n';
  out << "batch " << cfg.train.batch << '\n';
  out << "mc_samples " << cfg.train.mc_samples << '\n';
  out << "eval_draws " << cfg.train.eval_draws << '\n';
  out << "spectra_mode "
      << (cfg.train.mode == drf::SpectraMode::prior_fixed ? "prior_fixed"
          : cfg.train.mode == drf::SpectraMode::var_fixed ? "var_fixed"
                                                          : "var_resampled")
      << '\n';
  out << "seed " << cfg.train.seed << '\n';
  out << "l2_coefficient " << format_value(cfg.train.l2_coefficient) << '\n';
  out << "inducing_count " << cfg.train.inducing_count << '\n';
  out << "inducing_strategy "
      << (cfg.train.strategy == infer::InducingStrategy::kernel_medoids
              ? "kernel_medoids"
              : "random")
      << '\n';
  out << "fix_latent_noise " << (cfg.train.fix_latent_noise ? 1 : 0) << '\n';
  out << "out_dir " << cfg.out_dir << '\n';
  return out.str();
}

}  // namespace gpdrf::config
