#include "vimp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>
#include <tuple>

#include "vimp/datagen.hpp"
#include "vimp/error.hpp"
#include "vimp/format.hpp"
#include "vimp/importance.hpp"

namespace vimp {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kLm: return "lm";
    case Method::kPermRf: return "perm-rf";
    case Method::kCpiLm: return "cpi-lm";
    case Method::kCpiRf: return "cpi-rf";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods)
    if (to_string(m) == name) return m;
  throw ValidationError("invalid method '" + std::string(name) +
                        "' (expected lm, perm-rf, cpi-lm or cpi-rf)");
}

std::vector<Method> parse_methods(std::string_view comma_list) {
  std::vector<Method> out;
  std::size_t start = 0;
  while (start <= comma_list.size()) {
    const auto end = std::min(comma_list.find(',', start), comma_list.size());
    const auto token = comma_list.substr(start, end - start);
    if (!token.empty()) {
      const Method m = parse_method(token);
      if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    start = end + 1;
  }
  if (out.empty()) throw ValidationError("method list is empty");
  return out;
}

void ExperimentConfig::validate() const {
  if (scenarios.empty()) throw ValidationError("no scenarios given");
  for (int s : scenarios)
    if (s < 1 || s > 4) throw ValidationError("scenario must be 1, 2, 3 or 4, got " + std::to_string(s));
  if (rho_grid.empty()) throw ValidationError("rho grid is empty");
  for (double r : rho_grid) validate_rho(r);
  if (methods.empty()) throw ValidationError("method list is empty");
  if (reps < 1) throw ValidationError("reps must be >= 1");
  if (n < 2 * kMinEvalRows) throw ValidationError("n must be at least 60");
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw ValidationError("split fraction must lie in (0, 1)");
  if (n_perms < 1) throw ValidationError("n_perms must be >= 1");
  if (!(noise_sd >= 0.0)) throw ValidationError("noise sd must be non-negative");
  if (forest_cfg.n_trees < 1 || forest_cfg.min_leaf < 1 || forest_cfg.mtry < 0 || forest_cfg.max_depth < 0)
    throw ValidationError("invalid forest configuration");
  if (threads < 0) throw ValidationError("threads must be >= 0");
}

namespace {

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> sd;

  explicit Standardizer(const Matrix& x) : mean(x.cols(), 0.0), sd(x.cols(), 0.0) {
    const auto n = static_cast<double>(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) mean[j] += x(i, j);
    for (double& m : mean) m /= n;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) sd[j] += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
    for (double& s : sd) {
      s = std::sqrt(s / (n - 1.0));
      if (!(s > 0.0)) throw DegenerateCovariance("constant feature column");
    }
  }

  Matrix forward(const Matrix& x) const {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean[j]) / sd[j];
    return out;
  }

  Matrix inverse(const Matrix& z) const {
    Matrix out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < z.cols(); ++j) out(i, j) = z(i, j) * sd[j] + mean[j];
    return out;
  }
};

// Knockoffs for `target` rows from a second-order model fit on the
// standardized `fit_rows`, mapped back to the raw feature scale.
Matrix knockoffs_for(const Matrix& fit_rows, const Matrix& target, SConstruction how, RngStream& rng) {
  const Standardizer z(fit_rows);
  const KnockoffParams kp = knockoff_params(estimate_gaussian(z.forward(fit_rows)), how);
  return z.inverse(sample_knockoffs(z.forward(target), kp, rng));
}

std::size_t method_index(Method m) {
  return static_cast<std::size_t>(std::find(std::begin(kAllMethods), std::end(kAllMethods), m) -
                                  std::begin(kAllMethods));
}

auto sort_key(const ReplicateResult& r) {
  return std::make_tuple(r.scenario, r.rho, method_index(r.method), r.feature_index, r.replicate);
}

}  // namespace

std::vector<ReplicateResult> run_replicate(const ExperimentConfig& cfg, int scenario,
                                           std::size_t rho_index, int replicate) {
  const double rho = cfg.rho_grid.at(rho_index);
  const RngStream rep_rng(mix_seed({cfg.master_seed, static_cast<std::uint64_t>(scenario),
                                    static_cast<std::uint64_t>(rho_index),
                                    static_cast<std::uint64_t>(replicate)}));

  std::vector<ReplicateResult> rows;
  auto fail_all = [&](const std::vector<Method>& methods, const std::string& what) {
    for (Method m : methods) {
      ReplicateResult r;
      r.scenario = scenario;
      r.rho = rho;
      r.replicate = replicate;
      r.method = m;
      r.error = what.empty() ? "error" : what;
      rows.push_back(std::move(r));
    }
  };

  ScenarioSpec spec = ScenarioSpec::make(scenario, rho);
  spec.noise_sd = cfg.noise_sd;
  Dataset data;
  try {
    RngStream data_rng = rep_rng.substream(0);
    data = generate_dataset(spec, cfg.n, data_rng);
  } catch (const Error& e) {
    fail_all(cfg.methods, e.what());
    return rows;
  }

  std::optional<ForestModel> forest;
  auto get_forest = [&]() -> const ForestModel& {
    if (!forest) forest = fit_forest(data, cfg.forest_cfg, rep_rng.substream(1));
    return *forest;
  };

  for (Method m : cfg.methods) {
    RngStream method_rng = rep_rng.substream(10 + method_index(m));
    try {
      ImportanceReport report;
      switch (m) {
        case Method::kLm:
          report = ols_importance(fit_ols(data), data.feature_names);
          break;
        case Method::kPermRf:
          report = permutation_importance(get_forest(), data, cfg.n_perms, method_rng);
          break;
        case Method::kCpiLm: {
          const auto n_train = static_cast<std::size_t>(std::floor(cfg.split_fraction * static_cast<double>(cfg.n)));
          const Dataset train = data.slice(0, n_train);
          const Dataset eval = data.slice(n_train, data.n());
          const LinearModel model = fit_ols(train);
          const Matrix x_tilde = knockoffs_for(train.x, eval.x, cfg.s_construction, method_rng);
          report = cpi(LossEvaluator::holdout(model, eval), x_tilde);
          break;
        }
        case Method::kCpiRf: {
          const ForestModel& model = get_forest();
          const Matrix x_tilde = knockoffs_for(data.x, data.x, cfg.s_construction, method_rng);
          report = cpi(LossEvaluator::out_of_bag(model, data), x_tilde);
          break;
        }
      }
      for (std::size_t j = 0; j < report.features.size(); ++j) {
        const auto& f = report.features[j];
        ReplicateResult r;
        r.scenario = scenario;
        r.rho = rho;
        r.replicate = replicate;
        r.method = m;
        r.feature_index = j;
        r.feature = f.name;
        r.importance = f.importance;
        r.std_err = f.std_err;
        r.p_value = f.p_value;
        r.rank = f.rank;
        rows.push_back(std::move(r));
      }
    } catch (const Error& e) {
      fail_all({m}, e.what());
    }
  }
  return rows;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void sort_results(std::vector<ReplicateResult>& rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return sort_key(a) < sort_key(b); });
}

std::vector<SummaryResult> summarize(const std::vector<ReplicateResult>& sorted_rows) {
  std::vector<SummaryResult> out;
  struct Acc {
    double importance = 0.0;
    double rank = 0.0;
    int rejections = 0;
    int with_p = 0;
    int count = 0;
  };
  std::size_t i = 0;
  while (i < sorted_rows.size()) {
    const auto& head = sorted_rows[i];
    if (!head.error.empty()) {
      ++i;
      continue;
    }
    Acc acc;
    std::size_t k = i;
    for (; k < sorted_rows.size(); ++k) {
      const auto& r = sorted_rows[k];
      if (r.scenario != head.scenario || r.rho != head.rho || r.method != head.method ||
          r.feature_index != head.feature_index || !r.error.empty())
        break;
      acc.importance += *r.importance;
      acc.rank += *r.rank;
      if (r.p_value) {
        ++acc.with_p;
        if (*r.p_value < kRejectionAlpha) ++acc.rejections;
      }
      ++acc.count;
    }
    SummaryResult s;
    s.scenario = head.scenario;
    s.rho = head.rho;
    s.method = head.method;
    s.feature_index = head.feature_index;
    s.feature = head.feature;
    s.mean_importance = acc.importance / acc.count;
    s.mean_rank = acc.rank / acc.count;
    if (acc.with_p == acc.count) s.rejection_rate = static_cast<double>(acc.rejections) / acc.count;
    s.n_reps = acc.count;
    out.push_back(std::move(s));
    i = k;
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  struct Cell {
    int scenario;
    std::size_t rho_index;
    int replicate;
  };
  std::vector<Cell> cells;
  for (int s : cfg.scenarios)
    for (std::size_t r = 0; r < cfg.rho_grid.size(); ++r)
      for (int rep = 0; rep < cfg.reps; ++rep) cells.push_back({s, r, rep});

  std::vector<std::vector<ReplicateResult>> per_cell(cells.size());
  parallel_for(cells.size(), cfg.threads, [&](std::size_t k) {
    per_cell[k] = run_replicate(cfg, cells[k].scenario, cells[k].rho_index, cells[k].replicate);
  });

  ExperimentResult result;
  for (auto& rows : per_cell)
    for (auto& r : rows) result.replicates.push_back(std::move(r));
  sort_results(result.replicates);
  result.summary = summarize(result.replicates);
  return result;
}

std::vector<ElbowRow> run_elbow(const std::vector<double>& rho_grid, std::size_t n,
                                std::uint64_t master_seed, bool estimate_covariance, int threads) {
  if (rho_grid.empty()) throw ValidationError("rho grid is empty");
  for (double r : rho_grid) validate_rho(r);
  if (n < 3) throw ValidationError("elbow needs n >= 3");

  std::vector<ElbowRow> rows(rho_grid.size());
  parallel_for(rho_grid.size(), threads, [&](std::size_t k) {
    const double rho = rho_grid[k];
    const RngStream base(mix_seed({master_seed, static_cast<std::uint64_t>(k)}));
    RngStream draw_rng = base.substream(0);
    RngStream knockoff_rng = base.substream(1);

    const double tail = std::sqrt(1.0 - rho * rho);
    Matrix x(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      const double z1 = draw_rng.normal();
      x(i, 0) = z1;
      x(i, 1) = rho * z1 + tail * draw_rng.normal();
    }
    const GaussianModel model = estimate_covariance
                                    ? estimate_gaussian(x)
                                    : GaussianModel{{0.0, 0.0}, SymMatrix{{1.0, rho}, {rho, 1.0}}};
    const KnockoffParams kp = knockoff_params(model, SConstruction::kEqui);
    const Matrix x_tilde = sample_knockoffs(x, kp, knockoff_rng);
    const auto diag = diagnostics(x, x_tilde);
    rows[k] = {rho, diag.per_feature_self_corr[0], theoretical_self_corr(rho), n};
  });
  return rows;
}

void write_results_csv(const std::vector<ReplicateResult>& rows, std::ostream& out) {
  out << "scenario,rho,replicate,method,feature,importance,std_err,p_value,rank,error\n";
  for (const auto& r : rows) {
    std::string error = r.error;
    std::replace_if(error.begin(), error.end(), [](char c) { return c == ',' || c == '\n' || c == '"'; }, ';');
    out << r.scenario << ',' << format_real(r.rho) << ',' << r.replicate << ',' << to_string(r.method)
        << ',' << r.feature << ',' << format_optional(r.importance) << ','
        << format_optional(r.std_err) << ',' << format_optional(r.p_value) << ','
        << format_optional(r.rank) << ',' << error << '\n';
  }
}

void write_summary_csv(const std::vector<SummaryResult>& rows, std::ostream& out) {
  out << "scenario,rho,method,feature,mean_importance,mean_rank,rejection_rate,n_reps\n";
  for (const auto& s : rows) {
    out << s.scenario << ',' << format_real(s.rho) << ',' << to_string(s.method) << ',' << s.feature
        << ',' << format_real(s.mean_importance) << ',' << format_real(s.mean_rank) << ','
        << format_optional(s.rejection_rate) << ',' << s.n_reps << '\n';
  }
}

void write_elbow_csv(const std::vector<ElbowRow>& rows, std::ostream& out) {
  out << "rho,empirical_self_corr,theoretical_self_corr,n\n";
  for (const auto& r : rows)
    out << format_real(r.rho) << ',' << format_real(r.empirical_self_corr) << ','
        << format_real(r.theoretical_self_corr) << ',' << r.n << '\n';
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    try {
      writer(out);
      out.flush();
      if (!out) throw Error("write to " + tmp.string() + " failed");
    } catch (...) {
      out.close();
      std::filesystem::remove(tmp);
      throw;
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace vimp
