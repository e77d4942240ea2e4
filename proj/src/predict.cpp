#include "gpdrf/predict.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "gpdrf/counter_rng.hpp"
#include "gpdrf/errors.hpp"
#include "gpdrf/gp_layer.hpp"
#include "gpdrf/inference.hpp"
#include "gpdrf/likelihoods.hpp"

namespace gpdrf::predict {

namespace {

constexpr double kVarianceFloor = 1e-12;
constexpr int kHistogramBins = 20;

void check_draw_counts(int s_draws, int t_draws) {
  if (s_draws < 1)
    throw ConfigError("network sample count S must be at least 1, got " +
                      std::to_string(s_draws));
  if (t_draws < 2)
    throw ConfigError("posterior draw count T must be at least 2, got " +
                      std::to_string(t_draws));
}

// Prediction reads parameters straight from the model, so a NaN anywhere
// would silently poison every sample; refuse instead.
void check_trained(const model::GpDrfModel& m) {
  model::validate(m);
  const model::ParamPack pack = model::pack_parameters(m);
  for (std::size_t i = 0; i < pack.size(); ++i) {
    if (!pack.values[i].allFinite())
      throw InvalidArgumentError("parameter " + pack.names[i] +
                                 " holds non-finite values; the model looks "
                                 "untrained or diverged");
  }
}

void check_input(const model::GpDrfModel& m, const kern::Inputs& x) {
  const bool seq = std::holds_alternative<std::vector<std::string>>(x);
  if (m.has_gp()) {
    for (std::size_t ki = 0; ki < m.inducing.kernels.size(); ++ki) {
      const auto& k = m.inducing.kernels[ki];
      if (std::holds_alternative<kern::SpectrumParams>(k) != seq)
        throw TaskMismatchError(seq ? "input is a sequence but the kernel "
                                      "reads dense features"
                                    : "kernel reads sequences but the input "
                                      "is a dense feature vector");
      if (const auto* ard = std::get_if<kern::ArdParams>(&k)) {
        if (ard->dim() != kern::input_dim(x))
          throw ShapeError("kernel is built for " + std::to_string(ard->dim()) +
                           "-dim inputs, got " +
                           std::to_string(kern::input_dim(x)));
      }
    }
  } else {
    if (seq)
      throw TaskMismatchError("a stack-only model needs dense feature inputs");
    if (m.feature_dim() != kern::input_dim(x))
      throw ShapeError("first layer reads " + std::to_string(m.feature_dim()) +
                       "-dim inputs, got " + std::to_string(kern::input_dim(x)));
  }
}

Matrix predict_noise(std::uint64_t seed, rng::Stream stream, std::uint64_t s,
                     std::uint64_t layer, Eigen::Index rows,
                     Eigen::Index cols) {
  Matrix out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      out(i, j) = rng::normal(seed, {rng::word(stream), s, layer,
                                     static_cast<std::uint64_t>(i),
                                     static_cast<std::uint64_t>(j)});
  return out;
}

// Realizes network s from the posterior and pushes one feature column
// through it.
Eigen::VectorXd forward_pass(const model::GpDrfModel& m,
                             const Eigen::VectorXd& f, std::uint64_t seed,
                             std::uint64_t s) {
  const bool prior = m.spectra_mode == drf::SpectraMode::prior_fixed;
  std::vector<drf::LayerSample> net;
  net.reserve(m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& ly = m.layers[l];
    const Matrix e = predict_noise(seed, rng::Stream::predict_weights, s, l,
                                   ly.w_mean.rows(), ly.w_mean.cols());
    const Matrix tau = predict_noise(seed, rng::Stream::predict_spectra, s, l,
                                     ly.omega_mean.rows(), ly.omega_mean.cols());
    net.push_back({drf::reparam_weights(ly, e),
                   prior ? drf::prior_spectra(ly, tau)
                         : drf::reparam_spectra(ly, tau),
                   ly.out_alpha()});
  }
  return drf::feed_forward(f, net).col(0);
}

Eigen::VectorXd softmax_probs(const Eigen::VectorXd& g) {
  const Eigen::ArrayXd e = (g.array() - g.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

// Draws the set for one point whose GP moments (or raw features, for a
// stack-only model) are already in hand. The public entry points differ
// only in how they get here.
PosteriorSampleSet sample_set(const model::GpDrfModel& m,
                              const gp::MarginalMoments& mom,
                              const Eigen::VectorXd& raw_features, int s_draws,
                              int t_draws, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> outputs;
  outputs.reserve(static_cast<std::size_t>(s_draws));
  for (std::uint64_t s = 0; s < static_cast<std::uint64_t>(s_draws); ++s) {
    Eigen::VectorXd f;
    if (m.has_gp()) {
      Eigen::VectorXd eps(mom.a.size());
      for (Eigen::Index j = 0; j < eps.size(); ++j)
        eps(j) = rng::normal(seed, {rng::word(rng::Stream::predict_latent), s,
                                    static_cast<std::uint64_t>(j)});
      f = gp::sample_latent(mom, eps);
    } else {
      f = raw_features;
    }
    outputs.push_back(forward_pass(m, f, seed, s));
  }

  PosteriorSampleSet set;
  const bool softmax = m.likelihood.kind == lik::Kind::softmax;
  if (softmax) set.probs.resize(m.likelihood.classes, t_draws);
  set.samples.reserve(static_cast<std::size_t>(t_draws));
  for (std::uint64_t t = 0; t < static_cast<std::uint64_t>(t_draws); ++t) {
    const std::uint64_t s = rng::uniform_index(
        seed, {rng::word(rng::Stream::predict_pick), t},
        static_cast<std::uint64_t>(s_draws));
    const Eigen::VectorXd& g = outputs[static_cast<std::size_t>(s)];
    set.samples.push_back(lik::sample_target(
        g, m.likelihood, seed, {rng::word(rng::Stream::predict_target), t}));
    if (softmax) set.probs.col(static_cast<Eigen::Index>(t)) = softmax_probs(g);
  }
  if (softmax) fit_class_posteriors(set);
  return set;
}

gp::MarginalMoments moments_column(const gp::MomentsBatch& mb, Eigen::Index i) {
  return {mb.a.col(i), mb.b.col(i)};
}

Eigen::VectorXd feature_column(const data::Dataset& d, Eigen::Index i) {
  return d.features().row(i).transpose();
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

PosteriorSampleSet posterior_samples(const kern::Inputs& x_star,
                                     const model::GpDrfModel& m, int s_draws,
                                     int t_draws, std::uint64_t seed) {
  check_draw_counts(s_draws, t_draws);
  check_trained(m);
  check_input(m, x_star);
  if (kern::input_count(x_star) != 1)
    throw ShapeError("posterior_samples expects a single test input, got " +
                     std::to_string(kern::input_count(x_star)));
  gp::MarginalMoments mom;
  Eigen::VectorXd raw;
  if (m.has_gp())
    mom = gp::marginal_moments_one(x_star, m.inducing);
  else
    raw = std::get<Matrix>(x_star).row(0).transpose();
  return sample_set(m, mom, raw, s_draws, t_draws, seed);
}

MeanVar mean_var(const std::vector<double>& samples) {
  if (samples.size() < 2)
    throw InvalidArgumentError(
        "variance needs at least 2 samples, got " +
        std::to_string(samples.size()));
  MeanVar mv;
  for (double v : samples) mv.mean += v;
  mv.mean /= static_cast<double>(samples.size());
  for (double v : samples) mv.variance += (v - mv.mean) * (v - mv.mean);
  mv.variance /= static_cast<double>(samples.size() - 1);
  return mv;
}

MeanVar posterior_mean_var(const PosteriorSampleSet& set) {
  return mean_var(set.samples);
}

void fit_class_posteriors(PosteriorSampleSet& set) {
  const Eigen::Index k = set.probs.rows();
  const Eigen::Index t = set.probs.cols();
  if (k < 1 || t < 2)
    throw InvalidArgumentError("class fits need a K x T probability matrix "
                               "with T >= 2, got " +
                               std::to_string(k) + "x" + std::to_string(t));
  set.class_mean.resize(k);
  set.class_var.resize(k);
  std::vector<double> row(static_cast<std::size_t>(t));
  for (Eigen::Index c = 0; c < k; ++c) {
    for (Eigen::Index i = 0; i < t; ++i)
      row[static_cast<std::size_t>(i)] = set.probs(c, i);
    const MeanVar mv = mean_var(row);
    set.class_mean(c) = mv.mean;
    set.class_var(c) = mv.variance;
  }
}

double bhattacharyya(double mu1, double var1, double mu2, double var2) {
  if (!(var1 > 0.0) || !(var2 > 0.0))
    throw InvalidArgumentError("bhattacharyya needs positive variances, got " +
                               std::to_string(var1) + " and " +
                               std::to_string(var2));
  const double ratio = 0.25 * (var1 / var2 + var2 / var1 + 2.0);
  const double gap = mu1 - mu2;
  return 0.25 * std::log(ratio) + 0.25 * gap * gap / (var1 + var2);
}

Margin certainty_margin(const PosteriorSampleSet& set) {
  const Eigen::Index k = set.class_mean.size();
  if (k < 2)
    throw ConfigError("certainty margin needs at least 2 class fits, got " +
                      std::to_string(k));
  if (set.class_var.size() != k)
    throw ShapeError("class fits are inconsistent: " + std::to_string(k) +
                     " means, " + std::to_string(set.class_var.size()) +
                     " variances");
  Margin mg;
  for (Eigen::Index c = 0; c < k; ++c) {
    if (mg.best < 0 || set.class_mean(c) > set.class_mean(mg.best))
      mg.best = static_cast<int>(c);
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    if (c == mg.best) continue;
    if (mg.runner_up < 0 || set.class_mean(c) > set.class_mean(mg.runner_up))
      mg.runner_up = static_cast<int>(c);
  }
  const double v1 = set.class_var(mg.best);
  const double v2 = set.class_var(mg.runner_up);
  mg.variance_floored = v1 < kVarianceFloor || v2 < kVarianceFloor;
  mg.distance = bhattacharyya(set.class_mean(mg.best),
                              std::max(v1, kVarianceFloor),
                              set.class_mean(mg.runner_up),
                              std::max(v2, kVarianceFloor));
  return mg;
}

UncertaintyReport uncertainty_report(const data::Dataset& testset,
                                     const model::GpDrfModel& m, int s_draws,
                                     int t_draws, std::uint64_t seed) {
  if (m.likelihood.kind != lik::Kind::softmax)
    throw TaskMismatchError("uncertainty report needs a classification model");
  check_draw_counts(s_draws, t_draws);
  check_trained(m);
  infer::check_model_data(m, testset);

  gp::MomentsBatch mb;
  if (m.has_gp()) mb = gp::marginal_moments(testset.inputs, m.inducing);

  UncertaintyReport rep;
  const Eigen::Index n = testset.size();
  int missed = 0;
  double sum_correct = 0.0, sum_miss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const PosteriorSampleSet set =
        sample_set(m, m.has_gp() ? moments_column(mb, i) : gp::MarginalMoments{},
                   m.has_gp() ? Eigen::VectorXd() : feature_column(testset, i),
                   s_draws, t_draws, rng::derive_seed(seed, static_cast<std::uint64_t>(i)));
    const Margin mg = certainty_margin(set);
    PointRow row;
    row.index = static_cast<int>(i);
    row.label = lik::class_index(testset.targets[static_cast<std::size_t>(i)],
                                 m.likelihood);
    row.predicted = mg.best;
    row.margin = mg.distance;
    row.correct = row.predicted == row.label;
    row.variance_floored = mg.variance_floored;
    if (row.correct) {
      sum_correct += row.margin;
    } else {
      sum_miss += row.margin;
      ++missed;
    }
    rep.rows.push_back(row);
  }
  rep.error_rate = static_cast<double>(missed) / static_cast<double>(n);
  const int hit = static_cast<int>(n) - missed;
  if (hit > 0) rep.d_correct = sum_correct / hit;
  if (missed > 0) rep.d_misclassified = sum_miss / missed;

  // Fixed bin count over [0, max margin]; an all-zero margin column still
  // gets a non-degenerate axis.
  double hi = 0.0;
  for (const PointRow& row : rep.rows) hi = std::max(hi, row.margin);
  if (hi <= 0.0) hi = 1.0;
  rep.histogram.correct.assign(kHistogramBins, 0);
  rep.histogram.misclassified.assign(kHistogramBins, 0);
  for (int b = 0; b <= kHistogramBins; ++b)
    rep.histogram.edges.push_back(hi * b / kHistogramBins);
  for (const PointRow& row : rep.rows) {
    const int b = std::min(static_cast<int>(row.margin / hi * kHistogramBins),
                           kHistogramBins - 1);
    (row.correct ? rep.histogram.correct : rep.histogram.misclassified)[
        static_cast<std::size_t>(b)]++;
  }
  return rep;
}

void write_report(const std::string& path, const UncertaintyReport& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "gpdrf_uncertainty_report 1\n";
  out << "points " << r.rows.size() << '\n';
  out << "# point <id> <label> <predicted> <margin> <correct> <floored>\n";
  for (const PointRow& row : r.rows) {
    out << "point " << row.index << ' ' << row.label << ' ' << row.predicted
        << ' ' << format_value(row.margin) << ' ' << (row.correct ? 1 : 0)
        << ' ' << (row.variance_floored ? 1 : 0) << '\n';
  }
  out << "error_rate " << format_value(r.error_rate) << '\n';
  out << "d_correct "
      << (r.d_correct ? format_value(*r.d_correct) : std::string("absent"))
      << '\n';
  out << "d_misclassified "
      << (r.d_misclassified ? format_value(*r.d_misclassified)
                            : std::string("absent"))
      << '\n';
  out << "histogram_bins " << r.histogram.correct.size() << '\n';
  out << "histogram_edges";
  for (double e : r.histogram.edges) out << ' ' << format_value(e);
  out << '\n';
  out << "histogram_correct";
  for (int c : r.histogram.correct) out << ' ' << c;
  out << '\n';
  out << "histogram_misclassified";
  for (int c : r.histogram.misclassified) out << ' ' << c;
  out << '\n';
  if (!out) throw IoError("short write to " + path);
}

double evaluate(const data::Dataset& testset, const model::GpDrfModel& m,
                int s_draws, int t_draws, std::uint64_t seed) {
  check_draw_counts(s_draws, t_draws);
  check_trained(m);
  infer::check_model_data(m, testset);

  gp::MomentsBatch mb;
  if (m.has_gp()) mb = gp::marginal_moments(testset.inputs, m.inducing);

  const Eigen::Index n = testset.size();
  const bool softmax = m.likelihood.kind == lik::Kind::softmax;
  int missed = 0;
  double sq_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const PosteriorSampleSet set =
        sample_set(m, m.has_gp() ? moments_column(mb, i) : gp::MarginalMoments{},
                   m.has_gp() ? Eigen::VectorXd() : feature_column(testset, i),
                   s_draws, t_draws, rng::derive_seed(seed, static_cast<std::uint64_t>(i)));
    const double target = testset.targets[static_cast<std::size_t>(i)];
    if (softmax) {
      Eigen::Index pred = 0;
      set.class_mean.maxCoeff(&pred);
      if (static_cast<int>(pred) != lik::class_index(target, m.likelihood))
        ++missed;
    } else {
      const double r = mean_var(set.samples).mean - target;
      sq_sum += r * r;
    }
  }
  if (softmax) return static_cast<double>(missed) / static_cast<double>(n);
  return std::sqrt(sq_sum / static_cast<double>(n));
}

}  // namespace gpdrf::predict
