#include "vimp/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "vimp/error.hpp"
#include "vimp/special.hpp"

namespace vimp {

LinearModel fit_ols(const Dataset& data) {
  const std::size_t n = data.n();
  const std::size_t p = data.p();
  const std::size_t k = p + 1;
  if (data.y.size() != n) throw DimensionMismatch("fit_ols: y length differs from row count");
  if (n <= k) throw ValidationError("fit_ols: need n > p + 1 rows");

  Matrix xtx(k, k);
  Matrix xty(k, 1);
  std::vector<double> design(k);
  for (std::size_t i = 0; i < n; ++i) {
    design[0] = 1.0;
    auto row = data.x.row(i);
    std::copy(row.begin(), row.end(), design.begin() + 1);
    for (std::size_t a = 0; a < k; ++a) {
      xty(a, 0) += design[a] * data.y[i];
      for (std::size_t b = 0; b <= a; ++b) xtx(a, b) += design[a] * design[b];
    }
  }
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < a; ++b) xtx(b, a) = xtx(a, b);

  // Equilibrate so the pivot tolerance is scale-free.
  std::vector<double> scale(k);
  for (std::size_t a = 0; a < k; ++a) {
    if (!(xtx(a, a) > 0.0)) throw RankDeficient("fit_ols: all-zero design column");
    scale[a] = 1.0 / std::sqrt(xtx(a, a));
  }
  Matrix scaled(k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) scaled(a, b) = xtx(a, b) * (scale[a] * scale[b]);

  CholFactor factor;
  try {
    factor = cholesky(SymMatrix(std::move(scaled)));
  } catch (const NotPositiveDefinite& e) {
    throw RankDeficient(std::string("fit_ols: design matrix is rank deficient (") + e.what() + ")");
  }
  const Matrix scaled_inv = solve_with(factor, Matrix::identity(k));

  std::vector<double> beta(k, 0.0);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) beta[a] += scale[a] * scaled_inv(a, b) * scale[b] * xty(b, 0);

  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double fit = beta[0];
    auto row = data.x.row(i);
    for (std::size_t j = 0; j < p; ++j) fit += beta[j + 1] * row[j];
    const double r = data.y[i] - fit;
    rss += r * r;
  }

  LinearModel model;
  model.df = n - k;
  model.residual_variance = rss / static_cast<double>(model.df);
  model.intercept = beta[0];
  model.coefficients.assign(beta.begin() + 1, beta.end());
  model.std_errors.resize(k);
  model.p_values.resize(k);
  for (std::size_t a = 0; a < k; ++a) {
    const double var = model.residual_variance * scale[a] * scaled_inv(a, a) * scale[a];
    const double se = std::sqrt(std::max(var, 0.0));
    model.std_errors[a] = se;
    if (se == 0.0) {
      model.p_values[a] = beta[a] == 0.0 ? 1.0 : 0.0;
    } else {
      const double t = std::abs(beta[a] / se);
      model.p_values[a] = std::clamp(2.0 * student_t_cdf(-t, static_cast<double>(model.df)), 0.0, 1.0);
    }
  }
  return model;
}

int ForestConfig::resolved_mtry(std::size_t p) const {
  if (mtry > 0) return std::min<int>(mtry, static_cast<int>(p));
  return std::max(1, static_cast<int>(p / 3));
}

double RegressionTree::predict(std::span<const double> row) const {
  const TreeNode* node = &nodes[0];
  while (!node->is_leaf())
    node = &nodes[row[node->feature] <= node->threshold ? node->left : node->right];
  return node->value;
}

namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeGrower {
 public:
  TreeGrower(const Dataset& data, const ForestConfig& cfg, RngStream& rng)
      : data_(data), cfg_(cfg), rng_(rng), mtry_(cfg.resolved_mtry(data.p())) {
    features_.resize(data.p());
  }

  RegressionTree grow(std::vector<std::size_t> rows) {
    RegressionTree tree;
    tree.nodes.reserve(2 * rows.size() / std::max(cfg_.min_leaf, 1) + 1);
    build(tree, rows, 0);
    return tree;
  }

 private:
  int build(RegressionTree& tree, std::span<std::size_t> rows, int depth) {
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t r : rows) {
      const double y = data_.y[r];
      sum += y;
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
    const auto count = rows.size();
    auto make_leaf = [&] {
      tree.nodes[index].value = lo == hi ? lo : sum / static_cast<double>(count);
      return index;
    };

    const auto min_leaf = static_cast<std::size_t>(cfg_.min_leaf);
    if (count < 2 * min_leaf || lo == hi || (cfg_.max_depth > 0 && depth >= cfg_.max_depth))
      return make_leaf();

    const SplitChoice best = find_split(rows, sum);
    if (best.feature < 0) return make_leaf();

    const auto mid = std::partition(rows.begin(), rows.end(), [&](std::size_t r) {
      return data_.x(r, static_cast<std::size_t>(best.feature)) <= best.threshold;
    });
    const auto n_left = static_cast<std::size_t>(mid - rows.begin());
    const int left = build(tree, rows.first(n_left), depth + 1);
    const int right = build(tree, rows.subspan(n_left), depth + 1);
    TreeNode& node = tree.nodes[index];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    return index;
  }

  SplitChoice find_split(std::span<const std::size_t> rows, double total) {
    // Sample mtry candidate features without replacement, then scan them in
    // ascending index order so ties resolve to the lowest index.
    std::iota(features_.begin(), features_.end(), 0);
    const auto p = features_.size();
    for (std::size_t k = 0; k < static_cast<std::size_t>(mtry_); ++k) {
      const auto pick = k + static_cast<std::size_t>(rng_.below(p - k));
      std::swap(features_[k], features_[pick]);
    }
    std::sort(features_.begin(), features_.begin() + mtry_);

    const auto n = rows.size();
    const auto min_leaf = static_cast<std::size_t>(cfg_.min_leaf);
    const double parent_score = total * total / static_cast<double>(n);
    SplitChoice best;
    pairs_.resize(n);
    for (int c = 0; c < mtry_; ++c) {
      const auto f = features_[static_cast<std::size_t>(c)];
      for (std::size_t k = 0; k < n; ++k) pairs_[k] = {data_.x(rows[k], f), data_.y[rows[k]]};
      std::sort(pairs_.begin(), pairs_.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_sum += pairs_[k].second;
        const std::size_t n_left = k + 1;
        if (n_left < min_leaf) continue;
        if (n - n_left < min_leaf) break;
        const double a = pairs_[k].first;
        const double b = pairs_[k + 1].first;
        if (!(a < b)) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                            right_sum * right_sum / static_cast<double>(n - n_left) - parent_score;
        if (gain > best.gain) {
          double threshold = a + 0.5 * (b - a);
          if (!(threshold < b)) threshold = a;
          best = {static_cast<int>(f), threshold, gain};
        }
      }
    }
    return best;
  }

  const Dataset& data_;
  const ForestConfig& cfg_;
  RngStream& rng_;
  int mtry_;
  std::vector<std::size_t> features_;
  std::vector<std::pair<double, double>> pairs_;
};

}  // namespace

ForestModel fit_forest(const Dataset& data, const ForestConfig& cfg, const RngStream& rng) {
  const std::size_t n = data.n();
  if (cfg.n_trees < 1 || cfg.min_leaf < 1 || cfg.mtry < 0 || cfg.max_depth < 0)
    throw ValidationError("fit_forest: invalid forest configuration");
  if (data.y.size() != n) throw DimensionMismatch("fit_forest: y length differs from row count");
  if (n < static_cast<std::size_t>(cfg.min_leaf) || n == 0)
    throw ValidationError("fit_forest: fewer rows than min_leaf");
  if (n > std::numeric_limits<std::uint16_t>::max())
    throw ValidationError("fit_forest: at most 65535 training rows supported");

  ForestModel model;
  model.config = cfg;
  model.p = data.p();
  model.n_train = n;
  model.trees.reserve(static_cast<std::size_t>(cfg.n_trees));
  model.in_bag.reserve(static_cast<std::size_t>(cfg.n_trees));
  for (int t = 0; t < cfg.n_trees; ++t) {
    RngStream tree_rng = rng.substream(static_cast<std::uint64_t>(t));
    std::vector<std::uint16_t> counts(n, 0);
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) {
      r = static_cast<std::size_t>(tree_rng.below(n));
      ++counts[r];
    }
    TreeGrower grower(data, cfg, tree_rng);
    model.trees.push_back(grower.grow(std::move(rows)));
    model.in_bag.push_back(std::move(counts));
  }
  return model;
}

std::vector<double> predict(const LinearModel& model, const Matrix& x) {
  if (x.cols() != model.p()) throw DimensionMismatch("predict: column count differs from model");
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double v = model.intercept;
    auto row = x.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) v += model.coefficients[j] * row[j];
    out[i] = v;
  }
  return out;
}

std::vector<double> predict(const ForestModel& model, const Matrix& x) {
  if (x.cols() != model.p) throw DimensionMismatch("predict: column count differs from model");
  std::vector<double> out(x.rows(), 0.0);
  for (const auto& tree : model.trees)
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] += tree.predict(x.row(i));
  const auto trees = static_cast<double>(model.trees.size());
  for (double& v : out) v /= trees;
  return out;
}

std::size_t OobPredictions::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

OobPredictions oob_predictions(const ForestModel& model, const Matrix& x) {
  if (x.cols() != model.p) throw DimensionMismatch("oob_predictions: column count differs from model");
  if (x.rows() != model.n_train) throw DimensionMismatch("oob_predictions: expects the training rows");
  const std::size_t n = x.rows();
  std::vector<double> sums(n, 0.0);
  std::vector<std::uint32_t> counts(n, 0);
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    const auto& bag = model.in_bag[t];
    for (std::size_t i = 0; i < n; ++i) {
      if (bag[i] != 0) continue;
      sums[i] += model.trees[t].predict(x.row(i));
      ++counts[i];
    }
  }
  OobPredictions out{std::vector<double>(n, 0.0), std::vector<std::uint8_t>(n, 0)};
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] == 0) continue;
    out.values[i] = sums[i] / counts[i];
    out.valid[i] = 1;
  }
  return out;
}

OobPredictions oob_predictions(const ForestModel& model, const Dataset& data) {
  return oob_predictions(model, data.x);
}

double mse(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw DimensionMismatch("mse: length mismatch");
  if (y.empty()) throw ValidationError("mse: empty input");
  const auto losses = per_sample_losses(y, yhat);
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

std::vector<double> per_sample_losses(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw DimensionMismatch("per_sample_losses: length mismatch");
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - yhat[i];
    out[i] = r * r;
  }
  return out;
}

}  // namespace vimp
