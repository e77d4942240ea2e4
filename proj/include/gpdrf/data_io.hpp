#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gpdrf/kernels.hpp"

namespace gpdrf::data {

using diff::Matrix;

enum class Task { regression, classification };

// Inputs are either rows of a feature matrix or symbol sequences; targets
// are stored as doubles in both tasks (class indices must be exact
// integers). Metadata carries whatever the loaders could infer.
struct Dataset {
  kern::Inputs inputs = Matrix();
  std::vector<double> targets;
  Task task = Task::regression;
  int classes = 0;                       // classification only
  std::vector<std::string> class_names;  // sequence labels, first-appearance order
  std::string alphabet;                  // sequence data, sorted symbol set
  std::vector<std::string> feature_names;  // tabular data
  std::string label_name;                  // tabular data

  Eigen::Index size() const { return kern::input_count(inputs); }
  Eigen::Index dim() const { return kern::input_dim(inputs); }
  bool sequences() const {
    return std::holds_alternative<std::vector<std::string>>(inputs);
  }
  const Matrix& features() const { return std::get<Matrix>(inputs); }
  const std::vector<std::string>& strings() const {
    return std::get<std::vector<std::string>>(inputs);
  }
};

// Column-wise affine map to zero mean, unit variance (population variance).
// Constant columns pass through unscaled and are listed so callers can warn.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // standard deviation, 1 for constant columns
  std::vector<int> constant_columns;

  Matrix apply(const Matrix& x) const;
};
Standardizer fit_standardizer(const Matrix& x);

// Comma-separated text with a header row; every non-label cell must be
// numeric. An empty label_column name means the last column. standardize
// fits on this file's own rows.
Dataset load_tabular(const std::string& path, const std::string& label_column,
                     bool standardize);
void write_tabular(const std::string& path, const Dataset& d);

// Lines of "label<TAB>sequence"; class indices assigned by first appearance
// and the alphabet inferred from the symbols present.
Dataset load_sequences(const std::string& path);
void write_sequences(const std::string& path, const Dataset& d);

// Marks the dataset as classification. expected_classes > 0 pins the class
// count (targets merely have to stay below it); otherwise the count is
// derived and every index in 0..K-1 must occur.
void finalize_classification(Dataset& d, int expected_classes = 0);

Dataset subset(const Dataset& d, const std::vector<int>& rows);

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> test;
};
SplitIndices split_indices(Eigen::Index n, double train_fraction,
                           std::uint64_t seed);
std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction,
                                  std::uint64_t seed);

// Uniform sample without replacement, deterministic per (seed, epoch, step);
// requests of at least n return every index.
std::vector<int> batch_indices(Eigen::Index n, Eigen::Index batch,
                               std::uint64_t seed, std::uint64_t epoch,
                               std::uint64_t step);

}  // namespace gpdrf::data
