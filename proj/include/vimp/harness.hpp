#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vimp/knockoffs.hpp"
#include "vimp/models.hpp"

namespace vimp {

enum class Method { kLm, kPermRf, kCpiLm, kCpiRf };

inline constexpr Method kAllMethods[] = {Method::kLm, Method::kPermRf, Method::kCpiLm, Method::kCpiRf};

std::string_view to_string(Method m);
Method parse_method(std::string_view name);  // throws ValidationError naming the bad token
std::vector<Method> parse_methods(std::string_view comma_list);

struct ExperimentConfig {
  std::vector<int> scenarios{1};
  std::vector<double> rho_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t n = 1000;
  int reps = 100;
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  std::uint64_t master_seed = 0;
  ForestConfig forest_cfg;
  double split_fraction = 0.5;  // training share for the linear model in cpi-lm
  int n_perms = 10;
  double noise_sd = std::sqrt(0.1);
  SConstruction s_construction = SConstruction::kBlockEqui;
  int threads = 1;  // 0: one per hardware thread

  void validate() const;
};

struct ReplicateResult {
  int scenario = 0;
  double rho = 0.0;
  int replicate = 0;
  Method method = Method::kLm;
  std::size_t feature_index = 0;
  std::string feature;  // empty on error rows
  std::optional<double> importance;
  std::optional<double> std_err;
  std::optional<double> p_value;
  std::optional<double> rank;
  std::string error;  // non-empty marks a failed (replicate, method)
};

struct SummaryResult {
  int scenario = 0;
  double rho = 0.0;
  Method method = Method::kLm;
  std::size_t feature_index = 0;
  std::string feature;
  double mean_importance = 0.0;
  double mean_rank = 0.0;
  std::optional<double> rejection_rate;  // share of replicates with p < 0.05
  int n_reps = 0;
};

struct ExperimentResult {
  std::vector<ReplicateResult> replicates;
  std::vector<SummaryResult> summary;
};

inline constexpr double kRejectionAlpha = 0.05;

std::vector<ReplicateResult> run_replicate(const ExperimentConfig& cfg, int scenario,
                                           std::size_t rho_index, int replicate);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Orders rows by (scenario, rho, method, feature index, replicate).
void sort_results(std::vector<ReplicateResult>& rows);
std::vector<SummaryResult> summarize(const std::vector<ReplicateResult>& sorted_rows);

struct ElbowRow {
  double rho = 0.0;
  double empirical_self_corr = 0.0;
  double theoretical_self_corr = 0.0;
  std::size_t n = 0;
};

// Bivariate Gaussian draws with correlation rho, equicorrelated knockoffs
// built from the true covariance (or the estimated one when
// estimate_covariance is set), and the measured corr(X1, X1~).
std::vector<ElbowRow> run_elbow(const std::vector<double>& rho_grid, std::size_t n,
                                std::uint64_t master_seed, bool estimate_covariance = false,
                                int threads = 1);

void write_results_csv(const std::vector<ReplicateResult>& rows, std::ostream& out);
void write_summary_csv(const std::vector<SummaryResult>& rows, std::ostream& out);
void write_elbow_csv(const std::vector<ElbowRow>& rows, std::ostream& out);

// Writes through a sibling temp file and renames it into place, so a failed
// writer never leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer);

// Runs fn(0..count-1) on up to `threads` workers (0: hardware concurrency).
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace vimp
