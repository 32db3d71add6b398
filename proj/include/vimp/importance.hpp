#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vimp/datagen.hpp"
#include "vimp/knockoffs.hpp"
#include "vimp/models.hpp"
#include "vimp/rng.hpp"

namespace vimp {

enum class ImportanceMethod { kOls, kPermutation, kCpi };

std::string_view to_string(ImportanceMethod m);

struct FeatureImportance {
  std::string name;
  double importance = 0.0;
  std::optional<double> std_err;
  std::optional<double> p_value;
  double rank = 0.0;  // 1 = most important, ties averaged
};

struct ImportanceReport {
  ImportanceMethod method = ImportanceMethod::kOls;
  std::vector<FeatureImportance> features;

  std::vector<double> importances() const;
  std::vector<double> ranks() const;
};

// Descending average ranks: the largest value gets rank 1, tied values share
// the mean of the positions they occupy. Throws NonFinite.
std::vector<double> rank_features(std::span<const double> importances);

// Importance = estimated slope; ranks on the signed value unless
// rank_by_magnitude is set.
ImportanceReport ols_importance(const LinearModel& model, std::span<const std::string> names,
                                bool rank_by_magnitude = false);

// Out-of-sample per-row losses of a fixed model, evaluated on the
// evaluation features or on a modified copy of them. Rows that cannot be
// scored (no out-of-bag tree) are dropped consistently.
class LossEvaluator {
 public:
  using LossFn = std::function<std::vector<double>(const Matrix&)>;

  LossEvaluator(Matrix x, std::vector<std::string> names, LossFn losses);

  // Squared loss on a held-out dataset. The model must outlive the evaluator.
  static LossEvaluator holdout(const LinearModel& model, const Dataset& eval);
  static LossEvaluator holdout(const ForestModel& model, const Dataset& eval);
  // Squared loss of out-of-bag predictions on the forest's training rows.
  static LossEvaluator out_of_bag(const ForestModel& model, const Dataset& train);

  const Matrix& x() const { return x_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t rows() const { return baseline_.size(); }
  const std::vector<double>& baseline() const { return baseline_; }
  std::vector<double> losses(const Matrix& x) const { return losses_(x); }

 private:
  Matrix x_;
  std::vector<std::string> names_;
  LossFn losses_;
  std::vector<double> baseline_;
};

inline constexpr std::size_t kMinEvalRows = 30;

// Mean loss increase over n_perms shuffles of one column at a time; std_err
// is the repeat standard deviation over sqrt(n_perms). No p-values.
ImportanceReport permutation_importance(const LossEvaluator& eval, int n_perms, const RngStream& rng);
ImportanceReport permutation_importance(const LinearModel& model, const Dataset& eval, int n_perms,
                                        const RngStream& rng);
ImportanceReport permutation_importance(const ForestModel& model, const Dataset& train, int n_perms,
                                        const RngStream& rng);

// Per-row loss differences after replacing column j by its knockoff column.
std::vector<double> cpi_deltas(const LossEvaluator& eval, std::size_t j, const Matrix& x_tilde);

// Conditional predictive impact: mean per-row loss increase from swapping
// in the knockoff column, with a one-sided paired t-test (df = m - 1).
ImportanceReport cpi(const LossEvaluator& eval, const Matrix& x_tilde);
ImportanceReport cpi(const LinearModel& model, const Dataset& eval, const KnockoffParams& kp,
                     RngStream& rng);
ImportanceReport cpi(const ForestModel& model, const Dataset& train, const KnockoffParams& kp,
                     RngStream& rng);

}  // namespace vimp
