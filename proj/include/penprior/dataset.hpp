#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "penprior/error.hpp"

namespace penprior {

/// Classification data with disjoint train / validation / test index sets.
/// Rows of `features` are samples.
struct Dataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int n_classes = 2;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;

  std::size_t n_samples() const { return labels.size(); }
  int n_features() const { return static_cast<int>(features.cols()); }

  void validate() const {
    require(features.rows() == static_cast<Eigen::Index>(labels.size()), ErrorKind::ShapeMismatch,
            "feature rows and labels differ");
    require(n_classes >= 2, ErrorKind::InvalidParameter, "need at least two classes");
    for (int y : labels)
      require(y >= 0 && y < n_classes, ErrorKind::InvalidParameter, "label outside class range");
    std::vector<char> seen(labels.size(), 0);
    for (const auto* part : {&train, &validation, &test})
      for (auto i : *part) {
        require(i < labels.size() && !seen[i], ErrorKind::InvalidParameter, "splits overlap or index out of range");
        seen[i] = 1;
      }
  }
};

/// Shuffles 0..n-1 with `seed`; validation and test get floor(0.15 n) each, train the rest.
inline void assign_splits(Dataset& d, std::uint64_t seed) {
  const std::size_t n = d.n_samples();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_val = n * 15 / 100;
  const std::size_t n_test = n * 15 / 100;
  d.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  d.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val),
                idx.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  d.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), idx.end());
}

/// Gaussian clusters: class centers drawn from N(0, separation^2 I), samples are
/// center + noise * N(0, I). Labels cycle through the classes before shuffling.
inline Dataset make_synthetic_dataset(std::size_t n_samples, int n_features, int n_classes, double noise,
                                      std::uint64_t seed, double separation = 3.0) {
  require(n_classes >= 2, ErrorKind::InvalidParameter, "need at least two classes");
  require(n_features >= 1 && n_samples >= static_cast<std::size_t>(n_classes), ErrorKind::InvalidParameter,
          "invalid dataset size");
  require(noise >= 0.0 && separation > 0.0, ErrorKind::InvalidParameter, "noise must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd centers(n_classes, n_features);
  for (Eigen::Index c = 0; c < centers.rows(); ++c)
    for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(c, j) = separation * z(rng);
  Dataset d;
  d.n_classes = n_classes;
  d.features.resize(static_cast<Eigen::Index>(n_samples), n_features);
  d.labels.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(n_classes));
    d.labels[i] = y;
    for (int j = 0; j < n_features; ++j)
      d.features(static_cast<Eigen::Index>(i), j) = centers(y, j) + noise * z(rng);
  }
  assign_splits(d, rng());
  return d;
}

/// CSV with a header row; the last column is the integer label.
inline Dataset load_csv_dataset(const std::string& path, std::uint64_t seed) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::InvalidParameter, "cannot open dataset '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::InvalidParameter, "dataset has no header");
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        fail(ErrorKind::InvalidParameter, "non-numeric cell on line " + std::to_string(line_no));
      }
    }
    require(vals.size() >= 2, ErrorKind::InvalidParameter, "line " + std::to_string(line_no) + " has < 2 columns");
    const double label = vals.back();
    require(label >= 0.0 && label == std::floor(label), ErrorKind::InvalidParameter,
            "label on line " + std::to_string(line_no) + " is not a non-negative integer");
    labels.push_back(static_cast<int>(label));
    vals.pop_back();
    require(rows.empty() || rows.front().size() == vals.size(), ErrorKind::ShapeMismatch,
            "ragged row on line " + std::to_string(line_no));
    rows.push_back(std::move(vals));
  }
  require(!rows.empty(), ErrorKind::InvalidParameter, "dataset has no rows");
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  d.labels = std::move(labels);
  d.n_classes = std::max(2, *std::max_element(d.labels.begin(), d.labels.end()) + 1);
  assign_splits(d, seed);
  d.validate();
  return d;
}

}  // namespace penprior
