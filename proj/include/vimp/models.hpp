#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vimp/datagen.hpp"
#include "vimp/matrix.hpp"
#include "vimp/rng.hpp"

namespace vimp {

// Ordinary least squares with intercept and t-based inference.
struct LinearModel {
  double intercept = 0.0;
  std::vector<double> coefficients;  // p slopes
  std::vector<double> std_errors;    // p + 1, index 0 is the intercept
  std::vector<double> p_values;      // p + 1, two-sided, df = n - p - 1
  double residual_variance = 0.0;
  std::size_t df = 0;

  std::size_t p() const { return coefficients.size(); }
};

// Throws RankDeficient when the design is (numerically) collinear.
LinearModel fit_ols(const Dataset& data);

struct ForestConfig {
  int n_trees = 100;
  int mtry = 0;  // 0: max(1, floor(p / 3))
  int min_leaf = 5;
  int max_depth = 0;  // 0: unlimited

  int resolved_mtry(std::size_t p) const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf mean

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const;
};

struct ForestModel {
  std::vector<RegressionTree> trees;
  // in_bag[t][i] counts how often row i was drawn for tree t.
  std::vector<std::vector<std::uint16_t>> in_bag;
  ForestConfig config;
  std::size_t p = 0;
  std::size_t n_train = 0;
};

// Bagged CART regression forest. Split search is exact over sorted values;
// ties go to the lowest feature index, then the lowest threshold.
ForestModel fit_forest(const Dataset& data, const ForestConfig& cfg, const RngStream& rng);

std::vector<double> predict(const LinearModel& model, const Matrix& x);
std::vector<double> predict(const ForestModel& model, const Matrix& x);

struct OobPredictions {
  std::vector<double> values;
  std::vector<std::uint8_t> valid;  // 0 where the row was in-bag for every tree

  std::size_t valid_count() const;
};

// x must have the training rows in training order (possibly with some
// columns replaced, e.g. permuted or knockoff columns).
OobPredictions oob_predictions(const ForestModel& model, const Matrix& x);
OobPredictions oob_predictions(const ForestModel& model, const Dataset& data);

double mse(std::span<const double> y, std::span<const double> yhat);
std::vector<double> per_sample_losses(std::span<const double> y, std::span<const double> yhat);

}  // namespace vimp
