#include "gpdrf/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "gpdrf/counter_rng.hpp"
#include "gpdrf/errors.hpp"

namespace gpdrf::data {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_number(const std::string& cell, const std::string& path, int line) {
  const std::string t = trim(cell);
  if (t.empty())
    throw ParseError(path + ":" + std::to_string(line) + ": empty cell");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    throw ParseError(path + ":" + std::to_string(line) + ": '" + t +
                     "' is not a number");
  return v;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Fisher-Yates driven by the counter RNG, stopped once the first
// `stop_after` slots are settled.
std::vector<int> permutation(Eigen::Index n, std::uint64_t seed,
                             std::uint64_t tag, std::uint64_t epoch,
                             std::uint64_t step, Eigen::Index stop_after) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = int(i);
  for (Eigen::Index i = 0; i < stop_after && i + 1 < n; ++i) {
    const auto j =
        i + static_cast<Eigen::Index>(rng::uniform_index(
                seed, {tag, epoch, step, static_cast<std::uint64_t>(i)},
                static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

}  // namespace

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size())
    throw ShapeError("standardizer: fit on " + std::to_string(mean.size()) +
                     " columns, applied to " + std::to_string(x.cols()));
  return (x.rowwise() - mean.transpose()).array().rowwise() /
         scale.transpose().array();
}

Standardizer fit_standardizer(const Matrix& x) {
  if (x.rows() == 0) throw ConfigError("standardizer: no rows to fit");
  Standardizer s;
  s.mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - s.mean.transpose();
  s.scale = (centered.array().square().colwise().sum() / double(x.rows()))
                .sqrt()
                .transpose();
  for (Eigen::Index c = 0; c < s.scale.size(); ++c) {
    if (s.scale(c) == 0.0) {
      s.scale(c) = 1.0;
      s.constant_columns.push_back(static_cast<int>(c));
    }
  }
  return s;
}

Dataset load_tabular(const std::string& path, const std::string& label_column,
                     bool standardize) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path + ": empty file");

  const auto header = split_cells(lines[0]);
  Eigen::Index label_idx = -1;
  if (label_column.empty()) {
    label_idx = static_cast<Eigen::Index>(header.size()) - 1;
  } else {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == label_column) label_idx = static_cast<Eigen::Index>(c);
    if (label_idx < 0)
      throw ParseError(path + ":1: no column named '" + label_column + "'");
  }
  if (header.size() < 2)
    throw ParseError(path + ":1: need at least one feature and one label column");

  std::vector<std::vector<double>> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) {
      if (li + 1 == lines.size()) break;  // trailing newline
      throw ParseError(path + ":" + std::to_string(li + 1) + ": blank line");
    }
    const auto cells = split_cells(lines[li]);
    if (cells.size() != header.size())
      throw ParseError(path + ":" + std::to_string(li + 1) + ": " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    std::vector<double> row;
    for (const auto& cell : cells)
      row.push_back(parse_number(cell, path, static_cast<int>(li + 1)));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");

  Dataset d;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index dim = static_cast<Eigen::Index>(header.size()) - 1;
  Matrix x(n, dim);
  d.targets.resize(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    Eigen::Index fc = 0;
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(header.size()); ++c) {
      const double v = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (c == label_idx)
        d.targets[static_cast<std::size_t>(r)] = v;
      else
        x(r, fc++) = v;
    }
  }
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(header.size()); ++c)
    if (c != label_idx) d.feature_names.push_back(header[static_cast<std::size_t>(c)]);
  d.label_name = header[static_cast<std::size_t>(label_idx)];

  if (standardize) x = fit_standardizer(x).apply(x);
  d.inputs = x;
  return d;
}

void write_tabular(const std::string& path, const Dataset& d) {
  if (d.sequences())
    throw TaskMismatchError("write_tabular: dataset holds sequences");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  const Matrix& x = d.features();
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const std::size_t ci = static_cast<std::size_t>(c);
    out << (ci < d.feature_names.size() ? d.feature_names[ci]
                                        : "f" + std::to_string(c))
        << ',';
  }
  out << (d.label_name.empty() ? "label" : d.label_name) << '\n';
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      out << format_value(x(r, c)) << ',';
    out << format_value(d.targets[static_cast<std::size_t>(r)]) << '\n';
  }
  if (!out) throw IoError("short write to " + path);
}

Dataset load_sequences(const std::string& path) {
  const auto lines = read_lines(path);
  Dataset d;
  std::vector<std::string> seqs;
  std::unordered_map<std::string, int> label_ids;
  std::set<char> symbols;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (lines[li].empty()) {
      if (li + 1 == lines.size()) break;
      throw ParseError(path + ":" + std::to_string(li + 1) + ": blank line");
    }
    const auto tab = lines[li].find('\t');
    if (tab == std::string::npos)
      throw ParseError(path + ":" + std::to_string(li + 1) +
                       ": expected label<TAB>sequence");
    const std::string label = lines[li].substr(0, tab);
    const std::string seq = lines[li].substr(tab + 1);
    if (label.empty())
      throw ParseError(path + ":" + std::to_string(li + 1) + ": empty label");
    if (seq.empty())
      throw ParseError(path + ":" + std::to_string(li + 1) + ": empty sequence");
    auto it = label_ids.find(label);
    if (it == label_ids.end()) {
      it = label_ids.emplace(label, static_cast<int>(d.class_names.size())).first;
      d.class_names.push_back(label);
    }
    d.targets.push_back(static_cast<double>(it->second));
    for (char ch : seq) symbols.insert(ch);
    seqs.push_back(seq);
  }
  if (seqs.empty()) throw ParseError(path + ": no sequences");
  d.inputs = seqs;
  d.task = Task::classification;
  d.classes = static_cast<int>(d.class_names.size());
  d.alphabet.assign(symbols.begin(), symbols.end());
  return d;
}

void write_sequences(const std::string& path, const Dataset& d) {
  if (!d.sequences())
    throw TaskMismatchError("write_sequences: dataset holds feature vectors");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  const auto& seqs = d.strings();
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const int cls = static_cast<int>(d.targets[i]);
    const std::string label = cls >= 0 &&
                                      cls < static_cast<int>(d.class_names.size())
                                  ? d.class_names[static_cast<std::size_t>(cls)]
                                  : std::to_string(cls);
    out << label << '\t' << seqs[i] << '\n';
  }
  if (!out) throw IoError("short write to " + path);
}

void finalize_classification(Dataset& d, int expected_classes) {
  int top = -1;
  for (std::size_t i = 0; i < d.targets.size(); ++i) {
    const double t = d.targets[i];
    if (t != std::floor(t) || t < 0.0)
      throw ParseError("row " + std::to_string(i) + ": class index " +
                       std::to_string(t) + " is not a non-negative integer");
    top = std::max(top, static_cast<int>(t));
  }
  if (expected_classes > 0) {
    if (top >= expected_classes)
      throw ConfigError("class index " + std::to_string(top) +
                        " out of range for " + std::to_string(expected_classes) +
                        " classes");
    d.classes = expected_classes;
  } else {
    std::vector<bool> seen(static_cast<std::size_t>(top + 1), false);
    for (double t : d.targets) seen[static_cast<std::size_t>(t)] = true;
    for (std::size_t c = 0; c < seen.size(); ++c)
      if (!seen[c])
        throw ConfigError("class " + std::to_string(c) +
                          " never occurs; indices must be dense");
    d.classes = top + 1;
  }
  d.task = Task::classification;
}

Dataset subset(const Dataset& d, const std::vector<int>& rows) {
  for (int r : rows) {
    if (r < 0 || r >= static_cast<int>(d.targets.size()))
      throw ShapeError("subset: row " + std::to_string(r) + " out of range");
  }
  Dataset out = d;
  out.inputs = kern::input_subset(d.inputs, rows);
  out.targets.clear();
  for (int r : rows) out.targets.push_back(d.targets[static_cast<std::size_t>(r)]);
  return out;
}

SplitIndices split_indices(Eigen::Index n, double train_fraction,
                           std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("split: train fraction must lie strictly between 0 and 1");
  const Eigen::Index n_train =
      static_cast<Eigen::Index>(std::llround(train_fraction * double(n)));
  if (n_train < 1 || n_train >= n)
    throw ConfigError("split: fraction " + std::to_string(train_fraction) +
                      " of " + std::to_string(n) + " rows leaves a side empty");
  const auto perm =
      permutation(n, seed, rng::word(rng::Stream::split), 0, 0, n);
  SplitIndices s;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.test.assign(perm.begin() + n_train, perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction,
                                  std::uint64_t seed) {
  const auto idx = split_indices(d.size(), train_fraction, seed);
  return {subset(d, idx.train), subset(d, idx.test)};
}

std::vector<int> batch_indices(Eigen::Index n, Eigen::Index batch,
                               std::uint64_t seed, std::uint64_t epoch,
                               std::uint64_t step) {
  if (n < 1) throw ConfigError("batch: empty dataset");
  if (batch < 1) throw ConfigError("batch: size must be positive");
  if (batch >= n) {
    std::vector<int> all(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = int(i);
    return all;
  }
  auto perm =
      permutation(n, seed, rng::word(rng::Stream::batch), epoch, step, batch);
  perm.resize(static_cast<std::size_t>(batch));
  std::sort(perm.begin(), perm.end());
  return perm;
}

}  // namespace gpdrf::data
