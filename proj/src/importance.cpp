#include "vimp/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vimp/error.hpp"
#include "vimp/special.hpp"

namespace vimp {

std::string_view to_string(ImportanceMethod m) {
  switch (m) {
    case ImportanceMethod::kOls: return "ols";
    case ImportanceMethod::kPermutation: return "perm";
    case ImportanceMethod::kCpi: return "cpi";
  }
  return "unknown";
}

std::vector<double> ImportanceReport::importances() const {
  std::vector<double> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.importance);
  return out;
}

std::vector<double> ImportanceReport::ranks() const {
  std::vector<double> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.rank);
  return out;
}

std::vector<double> rank_features(std::span<const double> importances) {
  for (double v : importances)
    if (!std::isfinite(v)) throw NonFinite("rank_features: non-finite importance");
  const std::size_t p = importances.size();
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importances[a] > importances[b]; });
  std::vector<double> ranks(p);
  std::size_t start = 0;
  while (start < p) {
    std::size_t end = start + 1;
    while (end < p && importances[order[end]] == importances[order[start]]) ++end;
    // positions start..end-1 hold ranks start+1..end
    const double avg = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = avg;
    start = end;
  }
  return ranks;
}

namespace {

void assign_ranks(ImportanceReport& report) {
  const auto ranks = rank_features(report.importances());
  for (std::size_t j = 0; j < ranks.size(); ++j) report.features[j].rank = ranks[j];
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

void require_rows(std::size_t m) {
  if (m < kMinEvalRows)
    throw TooFewRows("importance needs at least " + std::to_string(kMinEvalRows) +
                     " evaluation rows, got " + std::to_string(m));
}

}  // namespace

ImportanceReport ols_importance(const LinearModel& model, std::span<const std::string> names,
                                bool rank_by_magnitude) {
  if (names.size() != model.p()) throw DimensionMismatch("ols_importance: name count differs from model");
  ImportanceReport report{ImportanceMethod::kOls, {}};
  std::vector<double> keys(model.p());
  for (std::size_t j = 0; j < model.p(); ++j) {
    report.features.push_back({names[j], model.coefficients[j], model.std_errors[j + 1],
                               model.p_values[j + 1], 0.0});
    keys[j] = rank_by_magnitude ? std::abs(model.coefficients[j]) : model.coefficients[j];
  }
  const auto ranks = rank_features(keys);
  for (std::size_t j = 0; j < ranks.size(); ++j) report.features[j].rank = ranks[j];
  return report;
}

LossEvaluator::LossEvaluator(Matrix x, std::vector<std::string> names, LossFn losses)
    : x_(std::move(x)), names_(std::move(names)), losses_(std::move(losses)) {
  if (names_.size() != x_.cols()) throw DimensionMismatch("LossEvaluator: name count differs from columns");
  baseline_ = losses_(x_);
}

LossEvaluator LossEvaluator::holdout(const LinearModel& model, const Dataset& eval) {
  return LossEvaluator(eval.x, eval.feature_names, [&model, y = eval.y](const Matrix& x) {
    return per_sample_losses(y, predict(model, x));
  });
}

LossEvaluator LossEvaluator::holdout(const ForestModel& model, const Dataset& eval) {
  return LossEvaluator(eval.x, eval.feature_names, [&model, y = eval.y](const Matrix& x) {
    return per_sample_losses(y, predict(model, x));
  });
}

LossEvaluator LossEvaluator::out_of_bag(const ForestModel& model, const Dataset& train) {
  if (train.n() != model.n_train) throw DimensionMismatch("out_of_bag: dataset is not the training set");
  return LossEvaluator(train.x, train.feature_names, [&model, y = train.y](const Matrix& x) {
    const auto oob = oob_predictions(model, x);
    std::vector<double> out;
    out.reserve(oob.values.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (!oob.valid[i]) continue;
      const double r = y[i] - oob.values[i];
      out.push_back(r * r);
    }
    return out;
  });
}

ImportanceReport permutation_importance(const LossEvaluator& eval, int n_perms, const RngStream& rng) {
  if (n_perms < 1) throw ValidationError("permutation_importance: n_perms must be >= 1");
  require_rows(eval.rows());
  const Matrix& x = eval.x();
  const double baseline = mean_of(eval.baseline());

  ImportanceReport report{ImportanceMethod::kPermutation, {}};
  Matrix shuffled = x;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    RngStream feature_rng = rng.substream(static_cast<std::uint64_t>(j));
    std::vector<double> column = x.column(j);
    std::vector<double> increases(static_cast<std::size_t>(n_perms));
    for (auto& inc : increases) {
      for (std::size_t i = column.size(); i > 1; --i)
        std::swap(column[i - 1], column[static_cast<std::size_t>(feature_rng.below(i))]);
      shuffled.set_column(j, column);
      inc = mean_of(eval.losses(shuffled)) - baseline;
    }
    shuffled.set_column(j, x.column(j));
    const double m = mean_of(increases);
    FeatureImportance f{eval.names()[j], m, std::nullopt, std::nullopt, 0.0};
    if (n_perms >= 2) f.std_err = sd_of(increases, m) / std::sqrt(static_cast<double>(n_perms));
    report.features.push_back(std::move(f));
  }
  assign_ranks(report);
  return report;
}

ImportanceReport permutation_importance(const LinearModel& model, const Dataset& eval, int n_perms,
                                        const RngStream& rng) {
  return permutation_importance(LossEvaluator::holdout(model, eval), n_perms, rng);
}

ImportanceReport permutation_importance(const ForestModel& model, const Dataset& train, int n_perms,
                                        const RngStream& rng) {
  return permutation_importance(LossEvaluator::out_of_bag(model, train), n_perms, rng);
}

std::vector<double> cpi_deltas(const LossEvaluator& eval, std::size_t j, const Matrix& x_tilde) {
  const Matrix& x = eval.x();
  if (x_tilde.rows() != x.rows() || x_tilde.cols() != x.cols())
    throw DimensionMismatch("cpi: knockoff matrix shape differs from evaluation features");
  if (j >= x.cols()) throw DimensionMismatch("cpi: feature index out of range");
  Matrix swapped = x;
  swapped.set_column(j, x_tilde.column(j));
  auto deltas = eval.losses(swapped);
  const auto& base = eval.baseline();
  for (std::size_t i = 0; i < deltas.size(); ++i) deltas[i] -= base[i];
  return deltas;
}

ImportanceReport cpi(const LossEvaluator& eval, const Matrix& x_tilde) {
  const std::size_t m = eval.rows();
  require_rows(m);
  ImportanceReport report{ImportanceMethod::kCpi, {}};
  for (std::size_t j = 0; j < eval.x().cols(); ++j) {
    const auto deltas = cpi_deltas(eval, j, x_tilde);
    const double mean = mean_of(deltas);
    const double sd = sd_of(deltas, mean);
    const double se = sd / std::sqrt(static_cast<double>(m));
    double p_value = 1.0;
    if (sd > 0.0) p_value = student_t_cdf(-mean / se, static_cast<double>(m - 1));
    report.features.push_back({eval.names()[j], mean, se, p_value, 0.0});
  }
  assign_ranks(report);
  return report;
}

ImportanceReport cpi(const LinearModel& model, const Dataset& eval, const KnockoffParams& kp,
                     RngStream& rng) {
  const Matrix x_tilde = sample_knockoffs(eval.x, kp, rng);
  return cpi(LossEvaluator::holdout(model, eval), x_tilde);
}

ImportanceReport cpi(const ForestModel& model, const Dataset& train, const KnockoffParams& kp,
                     RngStream& rng) {
  const Matrix x_tilde = sample_knockoffs(train.x, kp, rng);
  return cpi(LossEvaluator::out_of_bag(model, train), x_tilde);
}

}  // namespace vimp
