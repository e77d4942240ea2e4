#include "gpdrf/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "gpdrf/counter_rng.hpp"
#include "gpdrf/errors.hpp"
#include "gpdrf/likelihoods.hpp"
#include "gpdrf/optimizer.hpp"

namespace gpdrf::infer {

void validate(const TrainConfig& cfg, Eigen::Index n) {
  if (cfg.mc_samples < 1)
    throw ConfigError("forward sample count S must be at least 1, got " +
                      std::to_string(cfg.mc_samples));
  if (cfg.batch < 1)
    throw ConfigError("batch size must be at least 1, got " +
                      std::to_string(cfg.batch));
  if (cfg.inducing_count < 1)
    throw ConfigError("inducing count must be at least 1, got " +
                      std::to_string(cfg.inducing_count));
  if (cfg.inducing_count > n)
    throw ConfigError("inducing count " + std::to_string(cfg.inducing_count) +
                      " exceeds the training set size " + std::to_string(n));
  if (cfg.epochs < 0)
    throw ConfigError("epoch count must be non-negative, got " +
                      std::to_string(cfg.epochs));
  if (cfg.learning_rate < 0.0)
    throw ConfigError("learning rate must be non-negative, got " +
                      std::to_string(cfg.learning_rate));
  if (cfg.l2_coefficient < 0.0)
    throw ConfigError("l2 coefficient must be non-negative, got " +
                      std::to_string(cfg.l2_coefficient));
  if (cfg.eval_draws < 2)
    throw ConfigError("posterior draw count T must be at least 2, got " +
                      std::to_string(cfg.eval_draws));
}

void check_model_data(const model::GpDrfModel& m, const data::Dataset& d) {
  if (d.size() < 1) throw ConfigError("dataset is empty");
  if (m.likelihood.kind == lik::Kind::softmax) {
    if (d.task != data::Task::classification)
      throw TaskMismatchError(
          "model has a softmax likelihood but the dataset is not "
          "classification");
    if (d.classes != m.likelihood.classes)
      throw TaskMismatchError("model expects " +
                              std::to_string(m.likelihood.classes) +
                              " classes, dataset has " +
                              std::to_string(d.classes));
  } else if (d.task != data::Task::regression) {
    throw TaskMismatchError(
        "model has a gaussian likelihood but the dataset is not regression");
  }
  if (m.has_gp()) {
    for (std::size_t ki = 0; ki < m.inducing.kernels.size(); ++ki) {
      const auto& k = m.inducing.kernels[ki];
      if (std::holds_alternative<kern::SpectrumParams>(k) != d.sequences())
        throw TaskMismatchError(d.sequences()
                                    ? "dataset holds sequences but the kernel "
                                      "reads dense features"
                                    : "kernel reads sequences but the dataset "
                                      "holds dense features");
      if (const auto* ard = std::get_if<kern::ArdParams>(&k)) {
        if (ard->dim() != d.dim())
          throw ShapeError("kernel is built for " + std::to_string(ard->dim()) +
                           "-dim inputs, dataset has " + std::to_string(d.dim()));
      }
    }
  } else {
    if (d.sequences())
      throw TaskMismatchError("a stack-only model needs dense feature inputs");
    if (m.feature_dim() != d.dim())
      throw ShapeError("first layer reads " + std::to_string(m.feature_dim()) +
                       "-dim inputs, dataset has " + std::to_string(d.dim()));
  }
}

// ---- NoiseBank -------------------------------------------------------------

NoiseBank::NoiseBank(const model::GpDrfModel& m, std::uint64_t seed,
                     bool fix_latent_noise)
    : model_(&m),
      seed_(seed),
      freeze_reparam_(m.spectra_mode == drf::SpectraMode::var_fixed),
      freeze_latent_(freeze_reparam_ && fix_latent_noise) {}

void NoiseBank::position(std::uint64_t epoch, std::uint64_t step) {
  epoch_ = epoch;
  step_ = step;
}

namespace {

Matrix normal_block(std::uint64_t seed, rng::Stream stream, std::uint64_t epoch,
                    std::uint64_t step, std::uint64_t s, std::uint64_t layer,
                    Eigen::Index rows, Eigen::Index cols) {
  Matrix out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      out(i, j) = rng::normal(seed, {rng::word(stream), epoch, step, s, layer,
                                     static_cast<std::uint64_t>(i),
                                     static_cast<std::uint64_t>(j)});
  return out;
}

}  // namespace

Matrix NoiseBank::weight_noise(std::uint64_t s, std::size_t layer) const {
  const auto& ly = model_->layers.at(layer);
  return normal_block(seed_, rng::Stream::weight_noise,
                      freeze_reparam_ ? 0 : epoch_, freeze_reparam_ ? 0 : step_,
                      s, layer, ly.w_mean.rows(), ly.w_mean.cols());
}

Matrix NoiseBank::spectra_noise(std::uint64_t s, std::size_t layer) const {
  const auto& ly = model_->layers.at(layer);
  return normal_block(seed_, rng::Stream::spectra_noise,
                      freeze_reparam_ ? 0 : epoch_, freeze_reparam_ ? 0 : step_,
                      s, layer, ly.omega_mean.rows(), ly.omega_mean.cols());
}

Matrix NoiseBank::latent_noise(std::uint64_t s,
                               const std::vector<int>& rows) const {
  const Eigen::Index d0 = model_->inducing.output_dim();
  const std::uint64_t epoch = freeze_latent_ ? 0 : epoch_;
  const std::uint64_t step = freeze_latent_ ? 0 : step_;
  Matrix out(d0, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c)
    for (Eigen::Index j = 0; j < d0; ++j)
      out(j, static_cast<Eigen::Index>(c)) =
          rng::normal(seed_, {rng::word(rng::Stream::latent_noise), epoch, step,
                              s, static_cast<std::uint64_t>(rows[c]),
                              static_cast<std::uint64_t>(j)});
  return out;
}

// ---- leaf binding ----------------------------------------------------------

namespace {

// Consumes pack entries in the frozen order, checking each name so a pack
// from a different model (or a reordered one) fails loudly.
struct LeafCursor {
  diff::Tape& tape;
  const model::ParamPack& pack;
  std::vector<diff::Var>& leaves;
  std::size_t i = 0;

  diff::Var take(const std::string& name) {
    if (i >= pack.size())
      throw ShapeError("parameter pack: ran out of entries at " + name);
    if (pack.names[i] != name)
      throw ShapeError("parameter pack: expected " + name + ", found " +
                       pack.names[i]);
    const diff::Var v = tape.leaf(pack.values[i]);
    leaves.push_back(v);
    ++i;
    return v;
  }
};

}  // namespace

ModelVars bind_leaves(diff::Tape& tape, const model::GpDrfModel& m,
                      const model::ParamPack& pack,
                      std::vector<diff::Var>& leaves) {
  ModelVars vars;
  LeafCursor cur{tape, pack, leaves};
  if (m.has_gp()) {
    for (std::size_t ki = 0; ki < m.inducing.kernels.size(); ++ki) {
      const std::string base = "gp.kernel." + std::to_string(ki) + ".";
      const bool ard =
          std::holds_alternative<kern::ArdParams>(m.inducing.kernels[ki]);
      vars.gp.kernel_log_alpha.push_back(cur.take(base + "log_alpha"));
      vars.gp.kernel_aux.push_back(
          cur.take(base + (ard ? "log_gamma" : "log_sigma")));
    }
    for (std::size_t j = 0; j < m.inducing.mu.size(); ++j) {
      vars.gp.mu.push_back(cur.take("gp.mu." + std::to_string(j)));
      vars.gp.sigma_param.push_back(cur.take("gp.sigma." + std::to_string(j)));
    }
  }
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const std::string base = "drf." + std::to_string(l) + ".";
    drf::DrfLayerVars lv;
    lv.w_mean = cur.take(base + "w_mean");
    lv.w_logscale = cur.take(base + "w_logscale");
    if (m.layers[l].mode != drf::SpectraMode::prior_fixed) {
      lv.omega_mean = cur.take(base + "omega_mean");
      lv.omega_logscale = cur.take(base + "omega_logscale");
    }
    lv.lambda_logscales = cur.take(base + "lambda");
    lv.log_out_alpha = cur.take(base + "log_alpha");
    vars.layers.push_back(lv);
  }
  if (m.likelihood.kind == lik::Kind::gaussian)
    vars.log_noise_var = cur.take("lik.log_noise_var");
  if (cur.i != pack.size())
    throw ShapeError("parameter pack: " + std::to_string(pack.size() - cur.i) +
                     " entries beyond the model's parameters");
  return vars;
}

// ---- ELBO ------------------------------------------------------------------

ElboBuild build_elbo(diff::Tape& tape, const model::GpDrfModel& m,
                     const model::ParamPack& pack, const data::Dataset& train,
                     const std::vector<int>& rows, const NoiseBank& bank,
                     int mc_samples, double l2_coefficient) {
  if (rows.empty()) throw ConfigError("elbo: batch is empty");
  if (mc_samples < 1)
    throw ConfigError("elbo: forward sample count S must be at least 1, got " +
                      std::to_string(mc_samples));
  check_model_data(m, train);

  ElboBuild out;
  ModelVars vars = bind_leaves(tape, m, pack, out.leaves);

  std::vector<double> targets;
  targets.reserve(rows.size());
  for (int r : rows) {
    if (r < 0 || r >= static_cast<int>(train.targets.size()))
      throw ShapeError("elbo: row " + std::to_string(r) + " out of range");
    targets.push_back(train.targets[static_cast<std::size_t>(r)]);
  }

  gp::GpTapeBundle gp_terms;
  diff::Var f_const;
  if (m.has_gp()) {
    const kern::Inputs batch = kern::input_subset(train.inputs, rows);
    const gp::GpBatchCache cache = gp::gp_batch_cache(batch, m.inducing);
    gp_terms = gp::gp_layer_tape(tape, cache, vars.gp, m.inducing);
  } else {
    Matrix f(train.dim(), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t c = 0; c < rows.size(); ++c)
      f.col(static_cast<Eigen::Index>(c)) =
          train.features().row(rows[c]).transpose();
    f_const = tape.constant(f);
  }

  const bool prior_spectra = m.spectra_mode == drf::SpectraMode::prior_fixed;
  std::vector<diff::Var> alphas;
  alphas.reserve(m.layers.size());
  for (const auto& lv : vars.layers) alphas.push_back(diff::exp(lv.log_out_alpha));

  diff::Var loglik_total;
  for (int s = 0; s < mc_samples; ++s) {
    diff::Var f_s = f_const;
    if (m.has_gp()) {
      const diff::Var eps =
          tape.constant(bank.latent_noise(static_cast<std::uint64_t>(s), rows));
      f_s = gp_terms.moments.a + gp_terms.moments.sqrt_b * eps;
    }
    std::vector<drf::LayerSampleVars> samples;
    samples.reserve(m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      const auto su = static_cast<std::uint64_t>(s);
      drf::LayerSampleVars pick;
      pick.w = drf::reparam_weights_tape(tape, vars.layers[l],
                                         bank.weight_noise(su, l));
      const Matrix tau = bank.spectra_noise(su, l);
      pick.omega = prior_spectra
                       ? drf::prior_spectra_tape(tape, vars.layers[l], tau)
                       : drf::reparam_spectra_tape(tape, vars.layers[l], tau);
      pick.alpha = alphas[l];
      samples.push_back(pick);
    }
    const diff::Var g = drf::feed_forward_tape(tape, f_s, samples);
    const diff::Var ll =
        m.likelihood.kind == lik::Kind::gaussian
            ? lik::gaussian_loglik_tape(tape, targets, g, vars.log_noise_var)
            : lik::softmax_loglik_tape(tape, targets, g, m.likelihood);
    const diff::Var term = diff::sum(ll);
    loglik_total = s == 0 ? term : loglik_total + term;
  }
  const double batch_scale =
      static_cast<double>(train.size()) / static_cast<double>(rows.size());
  diff::Var elbo = diff::scale(loglik_total, batch_scale / mc_samples);

  if (m.has_gp()) elbo = elbo - gp_terms.kl;
  for (const auto& lv : vars.layers) {
    elbo = elbo - drf::kl_weights_tape(tape, lv);
    if (!prior_spectra) elbo = elbo - drf::kl_spectra_tape(tape, lv);
  }

  out.elbo = elbo;
  out.loss = opt::l2_penalty(tape, out.leaves, l2_coefficient) - elbo;
  return out;
}

// ---- training loop ---------------------------------------------------------

TrainResult train(model::GpDrfModel& m, const data::Dataset& trainset,
                  const TrainConfig& cfg) {
  model::validate(m);
  validate(cfg, trainset.size());
  check_model_data(m, trainset);
  if (m.spectra_mode != cfg.mode)
    throw ConfigError(
        "model was built for a different spectra option than the training "
        "config requests");

  model::ParamPack pack = model::pack_parameters(m);
  std::vector<opt::ParamRef> refs;
  refs.reserve(pack.size());
  for (std::size_t i = 0; i < pack.size(); ++i)
    refs.push_back({pack.names[i], &pack.values[i]});

  opt::AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  opt::AdamOptimizer adam(adam_cfg);
  NoiseBank bank(m, cfg.seed, cfg.fix_latent_noise);

  const Eigen::Index n = trainset.size();
  const Eigen::Index steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  TrainResult result;
  result.step_trace.reserve(static_cast<std::size_t>(cfg.epochs) *
                            static_cast<std::size_t>(steps_per_epoch));
  result.epoch_trace.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_sum = 0.0;
    for (Eigen::Index step = 0; step < steps_per_epoch; ++step) {
      const auto eu = static_cast<std::uint64_t>(epoch);
      const auto su = static_cast<std::uint64_t>(step);
      const std::vector<int> rows =
          data::batch_indices(n, cfg.batch, cfg.seed, eu, su);
      bank.position(eu, su);
      diff::Tape tape;
      ElboBuild built = build_elbo(tape, m, pack, trainset, rows, bank,
                                   cfg.mc_samples, cfg.l2_coefficient);
      const double elbo_value = built.elbo.scalar();
      const std::string where = "epoch " + std::to_string(epoch) + ", step " +
                                std::to_string(step);
      if (!std::isfinite(elbo_value))
        throw DivergenceError("ELBO became non-finite at " + where);
      tape.backward(built.loss);
      std::vector<Matrix> grads;
      grads.reserve(built.leaves.size());
      for (const diff::Var v : built.leaves) grads.push_back(tape.gradient(v));
      try {
        adam.step(refs, grads);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " at " + where);
      }
      result.step_trace.push_back(elbo_value);
      epoch_sum += elbo_value;
    }
    result.epoch_trace.push_back(epoch_sum /
                                 static_cast<double>(steps_per_epoch));
  }
  model::unpack_parameters(pack, m);
  return result;
}

// ---- inducing-point selection ----------------------------------------------

namespace {

// Partial Fisher-Yates; `tag` separates the random strategy from the medoid
// initialization so the two never share draws.
std::vector<int> sample_without_replacement(Eigen::Index n, Eigen::Index m,
                                            std::uint64_t seed,
                                            std::uint64_t tag) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (Eigen::Index i = 0; i < m; ++i) {
    const std::uint64_t j = rng::uniform_index(
        seed,
        {rng::word(rng::Stream::inducing), tag, static_cast<std::uint64_t>(i)},
        static_cast<std::uint64_t>(n - i));
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[static_cast<std::size_t>(i) + j]);
  }
  idx.resize(static_cast<std::size_t>(m));
  return idx;
}

}  // namespace

kern::Inputs select_inducing(const kern::Inputs& x, Eigen::Index m,
                             InducingStrategy strategy,
                             const kern::KernelSpec& kernel,
                             std::uint64_t seed) {
  const Eigen::Index n = kern::input_count(x);
  if (m < 1)
    throw ConfigError("inducing count must be at least 1, got " +
                      std::to_string(m));
  if (m > n)
    throw ConfigError("inducing count " + std::to_string(m) +
                      " exceeds the candidate pool of " + std::to_string(n));
  if (m == n) return x;

  if (strategy == InducingStrategy::random) {
    std::vector<int> keep = sample_without_replacement(n, m, seed, 0);
    std::sort(keep.begin(), keep.end());
    return kern::input_subset(x, keep);
  }

  // k-medoids under the kernel-induced metric. Assignment and medoid updates
  // alternate; both sweeps break ties toward the lower index, so the outcome
  // is a pure function of (x, kernel, seed).
  const Matrix g = kern::gram(x, kernel, 0.0);
  Matrix dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      dist(i, j) = std::sqrt(std::max(0.0, g(i, i) + g(j, j) - 2.0 * g(i, j)));

  std::vector<int> medoids = sample_without_replacement(n, m, seed, 1);
  std::sort(medoids.begin(), medoids.end());
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int sweep = 0; sweep < 20; ++sweep) {
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      for (std::size_t c = 1; c < medoids.size(); ++c)
        if (dist(i, medoids[c]) < dist(i, medoids[static_cast<std::size_t>(best)]))
          best = static_cast<int>(c);
      assign[static_cast<std::size_t>(i)] = best;
    }
    bool changed = false;
    for (std::size_t c = 0; c < medoids.size(); ++c) {
      std::vector<int> members;
      for (Eigen::Index i = 0; i < n; ++i)
        if (assign[static_cast<std::size_t>(i)] == static_cast<int>(c))
          members.push_back(static_cast<int>(i));
      if (members.empty()) continue;  // duplicate-point tie; keep the medoid
      int best = members.front();
      double best_cost = std::numeric_limits<double>::infinity();
      for (int cand : members) {
        double cost = 0.0;
        for (int other : members) cost += dist(cand, other);
        if (cost < best_cost) {
          best_cost = cost;
          best = cand;
        }
      }
      if (best != medoids[c]) {
        medoids[c] = best;
        changed = true;
      }
    }
    if (!changed) break;
  }
  std::sort(medoids.begin(), medoids.end());
  return kern::input_subset(x, medoids);
}

}  // namespace gpdrf::infer
