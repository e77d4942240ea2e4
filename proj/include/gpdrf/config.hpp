#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gpdrf/data_io.hpp"
#include "gpdrf/inference.hpp"
#include "gpdrf/model.hpp"

namespace gpdrf::config {

enum class DataFormat { tabular, sequences };
enum class KernelKind { ard, spectrum };

// One training run, fully described: where the data lives, what the model
// looks like, and how to optimize it. Parsed from a flat key-value text
// file whose first content line pins the format version. Defaults follow
// the reference setup (1000 epochs at 1e-5, single-example batches, S = 100,
// 200 inducing points, L2 5e-4).
struct RunConfig {
  data::Task task = data::Task::regression;
  model::Arch arch = model::Arch::gpdrf;

  std::string train_data;
  std::string test_data;
  DataFormat format = DataFormat::tabular;
  std::string label_column;  // empty means the last column
  bool standardize = true;
  int classes = 0;  // 0: inferred from the training labels

  KernelKind kernel = KernelKind::ard;
  double log_alpha = 0.0;
  double log_gamma = 0.0;  // broadcast over input dims at build time
  int spectrum_k = 5;
  int spectrum_m = 1;
  bool spectrum_normalize = true;
  double log_sigma = 0.0;

  Eigen::Index gp_output_dim = 2;
  std::vector<Eigen::Index> layer_widths;
  std::vector<Eigen::Index> feature_counts;
  double noise_var = 0.1;  // gaussian likelihood start value

  infer::TrainConfig train;
  std::string out_dir = ".";
};

// Strict parse: unknown or duplicate keys, malformed values, and a missing
// or unsupported version header are errors naming the line. `origin` is
// only used in messages.
RunConfig parse_text(const std::string& text, const std::string& origin);
RunConfig parse_file(const std::string& path);

// Everything checkable without the data: positive counts, matching width
// and feature lists, the architecture's layer rules, the dimension chain
// down to the likelihood (when the class count is already known), and the
// kernel/format pairing.
void validate(const RunConfig& cfg);

// Text form that parse_text accepts and maps back to the same config;
// written next to training outputs so a run can be reproduced.
std::string render(const RunConfig& cfg);

}  // namespace gpdrf::config
