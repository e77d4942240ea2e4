#include "gpdrf/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "gpdrf/counter_rng.hpp"
#include "gpdrf/errors.hpp"
#include "gpdrf/inference.hpp"
#include "gpdrf/random_features.hpp"

namespace gpdrf::cmd {

namespace {

using diff::Matrix;

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

// Deterministic normal block off the synthetic-data stream; tags keep the
// battery's draws disjoint.
Matrix synth_block(std::uint64_t seed, std::uint64_t tag, Eigen::Index rows,
                   Eigen::Index cols) {
  Matrix out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      out(i, j) = rng::normal(seed, {rng::word(rng::Stream::data_synth), tag,
                                     static_cast<std::uint64_t>(i),
                                     static_cast<std::uint64_t>(j)});
  return out;
}

data::Dataset load_train_data(const config::RunConfig& cfg,
                              ckpt::Checkpoint& box) {
  if (cfg.format == config::DataFormat::sequences) {
    data::Dataset d = data::load_sequences(cfg.train_data);
    if (cfg.classes > 0 && d.classes != cfg.classes)
      throw ConfigError("config: classes is " + std::to_string(cfg.classes) +
                        " but " + cfg.train_data + " holds " +
                        std::to_string(d.classes) + " labels");
    box.class_names = d.class_names;
    return d;
  }
  data::Dataset d = data::load_tabular(cfg.train_data, cfg.label_column, false);
  if (cfg.task == data::Task::classification)
    data::finalize_classification(d, cfg.classes);
  if (cfg.standardize) {
    // Fit here rather than in the loader so the transform can ride along in
    // the checkpoint and be replayed on test data.
    box.standardizer = data::fit_standardizer(d.features());
    box.has_standardizer = true;
    d.inputs = box.standardizer.apply(d.features());
  }
  return d;
}

lik::LikelihoodSpec likelihood_for(const config::RunConfig& cfg,
                                   const data::Dataset& train) {
  lik::LikelihoodSpec l;
  if (cfg.task == data::Task::classification) {
    l.kind = lik::Kind::softmax;
    l.classes = train.classes;
  } else {
    l.kind = lik::Kind::gaussian;
    l.log_noise_var = std::log(cfg.noise_var);
  }
  return l;
}

kern::KernelSpec kernel_for(const config::RunConfig& cfg,
                            const data::Dataset& train) {
  if (cfg.kernel == config::KernelKind::ard) {
    kern::ArdParams p;
    p.log_alpha = cfg.log_alpha;
    p.log_gamma = Eigen::VectorXd::Constant(train.dim(), cfg.log_gamma);
    return p;
  }
  kern::SpectrumParams p;
  p.k = cfg.spectrum_k;
  p.m = cfg.spectrum_m;
  p.alphabet = train.alphabet;
  p.normalize = cfg.spectrum_normalize;
  p.log_alpha = cfg.log_alpha;
  p.log_sigma = cfg.log_sigma;
  return p;
}

// Test data in whatever shape the checkpointed model consumes, put through
// the stored standardizer and label order so indices mean the same thing
// they meant in training.
data::Dataset load_eval_data(const ckpt::Checkpoint& box,
                             const std::string& path) {
  const model::GpDrfModel& m = box.model;
  const bool sequence_model =
      m.has_gp() && std::holds_alternative<std::vector<std::string>>(
                        m.inducing.pseudo_inputs);
  if (sequence_model) {
    data::Dataset d = data::load_sequences(path);
    if (!box.class_names.empty()) {
      std::vector<int> to_train(d.class_names.size(), -1);
      for (std::size_t i = 0; i < d.class_names.size(); ++i) {
        for (std::size_t j = 0; j < box.class_names.size(); ++j) {
          if (d.class_names[i] == box.class_names[j]) {
            to_train[i] = static_cast<int>(j);
            break;
          }
        }
        if (to_train[i] < 0)
          throw TaskMismatchError("label '" + d.class_names[i] + "' in " +
                                  path + " never appeared in training");
      }
      for (double& t : d.targets) t = to_train[static_cast<std::size_t>(t)];
      d.class_names = box.class_names;
    }
    if (m.likelihood.kind == lik::Kind::softmax)
      data::finalize_classification(d, m.likelihood.classes);
    return d;
  }
  data::Dataset d = data::load_tabular(path, "", false);
  if (box.has_standardizer) {
    if (box.standardizer.mean.size() != d.dim())
      throw ShapeError("checkpoint standardizer covers " +
                       std::to_string(box.standardizer.mean.size()) +
                       " feature columns but " + path + " has " +
                       std::to_string(d.dim()));
    d.inputs = box.standardizer.apply(d.features());
  }
  if (m.likelihood.kind == lik::Kind::softmax)
    data::finalize_classification(d, m.likelihood.classes);
  return d;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("short write to " + path);
}

CheckLine check_random_features(const config::RunConfig& cfg) {
  const Eigen::Index m_count =
      cfg.feature_counts.empty() ? 2048 : cfg.feature_counts.front();
  const Eigen::Index dim = 4;
  const int pairs = 10;
  kern::ArdParams unit;
  unit.log_gamma = Eigen::VectorXd::Zero(dim);
  const Matrix spectra =
      rf::sample_spectra(Eigen::VectorXd::Ones(dim), m_count, cfg.train.seed);
  const Matrix x = synth_block(cfg.train.seed, 1, dim, pairs);
  const Matrix y = synth_block(cfg.train.seed, 2, dim, pairs);
  const Matrix phi_x = rf::rff_map(x, spectra, 1.0);
  const Matrix phi_y = rf::rff_map(y, spectra, 1.0);
  double worst = 0.0;
  for (int p = 0; p < pairs; ++p) {
    const double approx = phi_x.col(p).dot(phi_y.col(p));
    const double exact = kern::ard_eval(x.col(p), y.col(p), unit);
    worst = std::max(worst, std::abs(approx - exact));
  }
  // Per-feature terms are bounded, so the gap concentrates like 1/sqrt(M).
  const double allowed = 4.0 / std::sqrt(static_cast<double>(m_count));
  return {"random_features", worst <= allowed,
          "worst |phi'phi - k| = " + format_value(worst) + " over " +
              std::to_string(pairs) + " pairs at M = " +
              std::to_string(m_count) + " (allowed " + format_value(allowed) +
              ")"};
}

CheckLine check_gradients(std::uint64_t seed) {
  data::Dataset ds;
  ds.inputs = synth_block(seed, 3, 4, 2);
  const Matrix targets = synth_block(seed, 4, 4, 1);
  ds.targets.assign(targets.data(), targets.data() + 4);

  model::ModelShape shape;
  shape.layer_widths = {1};
  shape.feature_counts = {3};
  shape.mode = drf::SpectraMode::var_fixed;
  kern::ArdParams kp;
  kp.log_gamma = Eigen::VectorXd::Zero(2);
  lik::LikelihoodSpec lk;
  lk.log_noise_var = std::log(0.1);
  model::GpDrfModel m = model::build_model(
      shape, kp, synth_block(seed, 5, 2, 2), 0, lk, seed + 1);

  const model::ParamPack pack0 = model::pack_parameters(m);
  const infer::NoiseBank bank(m, seed, true);  // frozen noise: smooth in theta
  const std::vector<int> rows = {0, 1, 2, 3};
  const int s_count = 2;

  auto value = [&](const model::ParamPack& pack) {
    diff::Tape tape;
    return infer::build_elbo(tape, m, pack, ds, rows, bank, s_count, 0.0)
        .elbo.scalar();
  };

  std::vector<Matrix> analytic;
  {
    diff::Tape tape;
    const infer::ElboBuild built =
        infer::build_elbo(tape, m, pack0, ds, rows, bank, s_count, 0.0);
    tape.backward(built.elbo);
    for (const diff::Var v : built.leaves) analytic.push_back(tape.gradient(v));
  }

  const double h = 1e-5;
  double worst = 0.0;
  std::string worst_name = "-";
  for (std::size_t p = 0; p < pack0.size(); ++p) {
    Matrix fd(pack0.values[p].rows(), pack0.values[p].cols());
    for (Eigen::Index j = 0; j < fd.cols(); ++j) {
      for (Eigen::Index i = 0; i < fd.rows(); ++i) {
        model::ParamPack nudged = pack0;
        nudged.values[p](i, j) += h;
        const double hi = value(nudged);
        nudged.values[p](i, j) -= 2.0 * h;
        const double lo = value(nudged);
        fd(i, j) = (hi - lo) / (2.0 * h);
      }
    }
    const double scale = std::max({analytic[p].norm(), fd.norm(), 1e-7});
    const double err = (analytic[p] - fd).norm() / scale;
    if (err > worst) {
      worst = err;
      worst_name = pack0.names[p];
    }
  }
  return {"elbo_gradients", worst <= 1e-4,
          "worst relative error " + format_value(worst) + " in " + worst_name};
}

CheckLine check_kl_terms(std::uint64_t seed) {
  // Zero state: both stack KLs vanish exactly.
  drf::DrfLayerState zero;
  zero.w_mean = Matrix::Zero(2, 1);
  zero.w_logscale = Matrix::Zero(2, 1);
  zero.omega_mean = Matrix::Zero(1, 1);
  zero.omega_logscale = Matrix::Zero(1, 1);
  zero.lambda_logscales = Eigen::VectorXd::Zero(1);
  bool ok = drf::kl_weights(zero) == 0.0 && drf::kl_spectra(zero) == 0.0;

  // Jiggled models: every divergence stays non-negative.
  double smallest = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 5; ++rep) {
    model::ModelShape shape;
    shape.layer_widths = {2, 1};
    shape.feature_counts = {3, 3};
    kern::ArdParams kp;
    kp.log_gamma = Eigen::VectorXd::Zero(2);
    lik::LikelihoodSpec lk;
    model::GpDrfModel m =
        model::build_model(shape, kp, synth_block(seed, 10 + rep, 3, 2), 0,
                           lk, seed + rep);
    model::ParamPack pack = model::pack_parameters(m);
    for (std::size_t p = 0; p < pack.size(); ++p)
      pack.values[p] += 0.3 * synth_block(seed, 1000 + 100 * rep + p,
                                          pack.values[p].rows(),
                                          pack.values[p].cols());
    model::unpack_parameters(pack, m);
    smallest = std::min(smallest, gp::kl_inducing(m.inducing));
    for (const auto& layer : m.layers) {
      smallest = std::min(smallest, drf::kl_weights(layer));
      smallest = std::min(smallest, drf::kl_spectra(layer));
    }
  }
  ok = ok && smallest >= 0.0;

  // Posterior matched to a non-unit prior: KL collapses to round-off.
  drf::DrfLayerState matched = zero;
  matched.lambda_logscales.setConstant(0.35);
  matched.omega_logscale.setConstant(0.175);
  const double residual = std::abs(drf::kl_spectra(matched));
  ok = ok && residual <= 1e-12;

  return {"kl_terms", ok,
          "zero at the prior, smallest jiggled divergence " +
              format_value(smallest) + ", prior-matched residual " +
              format_value(residual)};
}

}  // namespace

void apply_model_preset(config::RunConfig& cfg, const std::string& model) {
  if (model == "gpdrf") {
    cfg.arch = model::Arch::gpdrf;
  } else if (model == "gp") {
    cfg.arch = model::Arch::gp;
    cfg.layer_widths.clear();
    cfg.feature_counts.clear();
  } else if (model == "drf") {
    cfg.arch = model::Arch::drf;
  } else {
    throw ConfigError("unknown model preset '" + model +
                      "'; expected gpdrf, gp or drf");
  }
}

TrainOutputs cmd_train(const config::RunConfig& cfg) {
  config::validate(cfg);
  ckpt::Checkpoint box;
  const data::Dataset train = load_train_data(cfg, box);
  const lik::LikelihoodSpec likelihood = likelihood_for(cfg, train);

  // The class count may only now be known; re-check the chain with it.
  const Eigen::Index lik_dim = likelihood.output_dim();
  if (!cfg.layer_widths.empty() && cfg.layer_widths.back() != lik_dim)
    throw ConfigError("config: the chain ends at width " +
                      std::to_string(cfg.layer_widths.back()) + " but " +
                      cfg.train_data + " needs " + std::to_string(lik_dim));
  if (cfg.layer_widths.empty() && cfg.arch == model::Arch::gpdrf &&
      cfg.gp_output_dim != lik_dim)
    throw ConfigError("config: gp_output_dim is " +
                      std::to_string(cfg.gp_output_dim) + " but " +
                      cfg.train_data + " needs " + std::to_string(lik_dim));

  model::ModelShape shape;
  shape.arch = cfg.arch;
  // The gp baseline reads the exact layer as the output layer.
  shape.gp_output_dim =
      cfg.arch == model::Arch::gp ? lik_dim : cfg.gp_output_dim;
  shape.layer_widths = cfg.layer_widths;
  shape.feature_counts = cfg.feature_counts;
  shape.mode = cfg.train.mode;

  const kern::KernelSpec kernel = kernel_for(cfg, train);
  kern::Inputs pseudo = Matrix();
  if (cfg.arch != model::Arch::drf)
    pseudo = infer::select_inducing(train.inputs, cfg.train.inducing_count,
                                    cfg.train.strategy, kernel,
                                    cfg.train.seed);
  model::GpDrfModel m = model::build_model(
      shape, kernel, pseudo, cfg.arch == model::Arch::drf ? train.dim() : 0,
      likelihood, cfg.train.seed);

  const infer::TrainResult result = infer::train(m, train, cfg.train);

  ensure_dir(cfg.out_dir);
  TrainOutputs out;
  out.checkpoint_path = join(cfg.out_dir, "model.ckpt");
  out.trace_path = join(cfg.out_dir, "trace.txt");
  out.config_path = join(cfg.out_dir, "run.cfg");

  box.model = std::move(m);
  box.train_seed = cfg.train.seed;
  ckpt::save(out.checkpoint_path, box);

  std::string trace = "# epoch elbo\n";
  for (std::size_t e = 0; e < result.epoch_trace.size(); ++e)
    trace += std::to_string(e + 1) + " " +
             format_value(result.epoch_trace[e]) + "\n";
  write_text(out.trace_path, trace);
  write_text(out.config_path, config::render(cfg));

  out.final_elbo = result.epoch_trace.empty()
                       ? std::numeric_limits<double>::quiet_NaN()
                       : result.epoch_trace.back();
  return out;
}

EvaluateOutputs cmd_evaluate(const std::string& checkpoint_path,
                             const std::string& data_path, int s_draws,
                             int t_draws, std::uint64_t seed,
                             const std::string& out_dir) {
  const ckpt::Checkpoint box = ckpt::load(checkpoint_path);
  const data::Dataset test = load_eval_data(box, data_path);

  EvaluateOutputs out;
  out.metric = box.model.likelihood.kind == lik::Kind::softmax ? "error_rate"
                                                               : "rmse";
  out.value = predict::evaluate(test, box.model, s_draws, t_draws, seed);

  ensure_dir(out_dir);
  out.metrics_path = join(out_dir, "metrics.txt");
  std::string text = "gpdrf_metrics 1\n";
  text += "metric " + out.metric + "\n";
  text += "value " + format_value(out.value) + "\n";
  text += "points " + std::to_string(test.size()) + "\n";
  text += "samples " + std::to_string(s_draws) + "\n";
  text += "draws " + std::to_string(t_draws) + "\n";
  text += "seed " + std::to_string(seed) + "\n";
  write_text(out.metrics_path, text);
  return out;
}

UncertaintyOutputs cmd_uncertainty(const std::string& checkpoint_path,
                                   const std::string& data_path, int s_draws,
                                   int t_draws, std::uint64_t seed,
                                   const std::string& out_dir) {
  const ckpt::Checkpoint box = ckpt::load(checkpoint_path);
  const data::Dataset test = load_eval_data(box, data_path);

  UncertaintyOutputs out;
  out.report =
      predict::uncertainty_report(test, box.model, s_draws, t_draws, seed);
  ensure_dir(out_dir);
  out.report_path = join(out_dir, "uncertainty.txt");
  predict::write_report(out.report_path, out.report);
  return out;
}

bool CheckReport::all_passed() const {
  return std::all_of(lines.begin(), lines.end(),
                     [](const CheckLine& l) { return l.passed; });
}

std::string CheckReport::text() const {
  std::string out;
  for (const CheckLine& l : lines)
    out += (l.passed ? "pass " : "FAIL ") + l.name + ": " + l.detail + "\n";
  return out;
}

CheckReport cmd_check(const config::RunConfig& cfg,
                      const std::string& checkpoint_path) {
  CheckReport rep;
  rep.lines.push_back(check_random_features(cfg));
  rep.lines.push_back(check_gradients(cfg.train.seed));
  rep.lines.push_back(check_kl_terms(cfg.train.seed));
  if (!checkpoint_path.empty()) {
    const ckpt::Checkpoint box = ckpt::load(checkpoint_path);
    rep.lines.push_back({"checkpoint", true,
                         checkpoint_path + " restores " +
                             std::to_string(
                                 model::pack_parameters(box.model).size()) +
                             " parameter blocks"});
  }
  return rep;
}

}  // namespace gpdrf::cmd
