#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gpdrf/data_io.hpp"
#include "gpdrf/model.hpp"

namespace gpdrf::predict {

using diff::Matrix;

// Monte-Carlo posterior at one test input: S networks realized from the
// variational posterior, then T target draws from the resulting mixture
// (pick a network uniformly, sample the likelihood). Classification keeps
// the chosen pass's softmax vector per draw and fits one Gaussian to each
// class's probability samples; those fits feed the certainty margin.
struct PosteriorSampleSet {
  std::vector<double> samples;  // T target draws (class indices under softmax)
  Matrix probs;                 // K x T probability vectors; empty for regression
  Eigen::VectorXd class_mean;   // K per-class fit means
  Eigen::VectorXd class_var;    // K per-class fit variances, (T-1) divisor

  Eigen::Index draw_count() const {
    return static_cast<Eigen::Index>(samples.size());
  }
  Eigen::Index class_count() const { return class_mean.size(); }
};

// Draws the sample set for one test input. Deterministic per seed; every
// random number comes off the predict_* counter streams, so two calls with
// the same arguments agree bit for bit. Non-finite model parameters are
// rejected up front.
PosteriorSampleSet posterior_samples(const kern::Inputs& x_star,
                                     const model::GpDrfModel& m, int s_draws,
                                     int t_draws, std::uint64_t seed);

struct MeanVar {
  double mean = 0.0;
  double variance = 0.0;
};

// Sample mean and unbiased variance; fewer than two entries cannot support
// a variance estimate and raise an error.
MeanVar mean_var(const std::vector<double>& samples);
MeanVar posterior_mean_var(const PosteriorSampleSet& set);

// Recomputes class_mean / class_var from the stored probability vectors.
// Split out so hand-built prob matrices can be fit in isolation.
void fit_class_posteriors(PosteriorSampleSet& set);

// Distance between N(mu1, var1) and N(mu2, var2):
//   1/4 ln(1/4 (v1/v2 + v2/v1 + 2)) + 1/4 (mu1 - mu2)^2 / (v1 + v2).
// Symmetric, non-negative, zero iff the distributions coincide.
double bhattacharyya(double mu1, double var1, double mu2, double var2);

// Bhattacharyya distance between the two most confident class fits; the
// margin of the prediction. Collapsed fits are floored at 1e-12 variance
// before the ratio terms, and the floor is flagged so reports can note it.
struct Margin {
  int best = -1;  // argmax of class_mean, the predicted class
  int runner_up = -1;
  double distance = 0.0;
  bool variance_floored = false;
};
Margin certainty_margin(const PosteriorSampleSet& set);

struct PointRow {
  int index = 0;
  int label = 0;
  int predicted = 0;
  double margin = 0.0;
  bool correct = false;
  bool variance_floored = false;
};

struct Histogram {
  std::vector<double> edges;  // bin count + 1 ascending edges
  std::vector<int> correct;   // counts per bin
  std::vector<int> misclassified;
};

// Margins for every test point plus the split aggregates: mean margin over
// correct predictions (d_correct) and over misses (d_misclassified), and
// histogram counts by correctness. An empty subset leaves its mean unset
// rather than reporting zero.
struct UncertaintyReport {
  std::vector<PointRow> rows;
  double error_rate = 0.0;
  std::optional<double> d_correct;
  std::optional<double> d_misclassified;
  Histogram histogram;
};

UncertaintyReport uncertainty_report(const data::Dataset& testset,
                                     const model::GpDrfModel& m, int s_draws,
                                     int t_draws, std::uint64_t seed);

// Plain-text report: a per-point block, the aggregates, and the histogram,
// one whitespace-separated record per line.
void write_report(const std::string& path, const UncertaintyReport& r);

// Error rate from the argmax of mean class probabilities (classification)
// or RMSE of the posterior means (regression). Test point i draws its
// samples under derive_seed(seed, i), same as uncertainty_report.
double evaluate(const data::Dataset& testset, const model::GpDrfModel& m,
                int s_draws, int t_draws, std::uint64_t seed);

}  // namespace gpdrf::predict
