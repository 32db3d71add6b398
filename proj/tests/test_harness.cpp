#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "vimp/error.hpp"
#include "vimp/harness.hpp"

using namespace vimp;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.scenarios = {1};
  cfg.rho_grid = {0.0, 0.5};
  cfg.n = 200;
  cfg.reps = 3;
  cfg.forest_cfg.n_trees = 15;
  cfg.n_perms = 2;
  cfg.master_seed = 17;
  return cfg;
}

std::string results_text(const ExperimentResult& r) {
  std::ostringstream out;
  write_results_csv(r.replicates, out);
  write_summary_csv(r.summary, out);
  return out.str();
}

}  // namespace

TEST_CASE("method names round trip") {
  for (Method m : kAllMethods) CHECK(parse_method(to_string(m)) == m);
  CHECK(parse_methods("lm,cpi-rf,lm") == std::vector<Method>{Method::kLm, Method::kCpiRf});
  CHECK_THROWS_WITH_AS(parse_method("bogus"), doctest::Contains("bogus"), ValidationError);
  CHECK_THROWS_AS(parse_methods(""), ValidationError);
  CHECK_THROWS_AS(parse_methods(","), ValidationError);
}

TEST_CASE("config validation") {
  ExperimentConfig cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.methods.clear();
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.reps = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.rho_grid = {0.2, 1.0};
  CHECK_THROWS_AS(bad.validate(), InvalidRho);
  bad = cfg;
  bad.scenarios = {5};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.split_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.rho_grid.clear();
  CHECK_THROWS_AS(run_experiment(bad), ValidationError);
}

TEST_CASE("run_replicate: lm on scenario 1 gives 10 rows with a rank permutation") {
  ExperimentConfig cfg = small_config();
  cfg.methods = {Method::kLm};
  const auto rows = run_replicate(cfg, 1, 0, 0);
  REQUIRE(rows.size() == 10);
  std::vector<double> ranks;
  for (const auto& r : rows) {
    CHECK(r.error.empty());
    ranks.push_back(*r.rank);
  }
  std::sort(ranks.begin(), ranks.end());
  for (std::size_t k = 0; k < 10; ++k) CHECK(ranks[k] == static_cast<double>(k + 1));
}

TEST_CASE("run_replicate: deterministic and independent of method subset for shared stages") {
  const ExperimentConfig cfg = small_config();
  const auto a = run_replicate(cfg, 1, 1, 2);
  const auto b = run_replicate(cfg, 1, 1, 2);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == 40);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].importance == b[k].importance);
    CHECK(a[k].p_value == b[k].p_value);
    CHECK(a[k].rank == b[k].rank);
  }
  // cpi-rf alone matches cpi-rf inside the full run: method streams are keyed, not sequential
  ExperimentConfig only = cfg;
  only.methods = {Method::kCpiRf};
  const auto c = run_replicate(only, 1, 1, 2);
  REQUIRE(c.size() == 10);
  for (std::size_t j = 0; j < 10; ++j) CHECK(c[j].importance == a[30 + j].importance);
}

TEST_CASE("run_replicate: scenario 3 and 4 expose 9 features led by the pair mean") {
  ExperimentConfig cfg = small_config();
  cfg.methods = {Method::kLm, Method::kCpiLm};
  for (int s : {3, 4}) {
    const auto rows = run_replicate(cfg, s, 0, 0);
    REQUIRE(rows.size() == 18);
    CHECK(rows[0].feature == "avg_x1_x2");
    CHECK(rows[1].feature == "x3");
    CHECK(rows[8].feature == "x10");
  }
}

TEST_CASE("run_experiment: row counts, sort order and summary shape") {
  ExperimentConfig cfg = small_config();
  cfg.scenarios = {1, 3};
  const auto res = run_experiment(cfg);
  // |scenarios| |rho| reps |methods| p
  CHECK(res.replicates.size() == 2 * 3 * 4 * 10 + 2 * 3 * 4 * 9);
  CHECK(res.summary.size() == 2 * 4 * 10 + 2 * 4 * 9);
  CHECK(std::is_sorted(res.replicates.begin(), res.replicates.end(), [](const auto& x, const auto& y) {
    return std::make_tuple(x.scenario, x.rho, static_cast<int>(x.method), x.feature_index, x.replicate) <
           std::make_tuple(y.scenario, y.rho, static_cast<int>(y.method), y.feature_index, y.replicate);
  }));
  for (const auto& s : res.summary) {
    CHECK(s.n_reps == 3);
    const double p = s.scenario == 3 ? 9.0 : 10.0;
    CHECK_UNARY(s.mean_rank >= 1.0 && s.mean_rank <= p);
    const bool has_p = s.method != Method::kPermRf;
    CHECK(s.rejection_rate.has_value() == has_p);
    if (s.rejection_rate) CHECK_UNARY(*s.rejection_rate >= 0.0 && *s.rejection_rate <= 1.0);
  }
}

TEST_CASE("run_experiment: byte-identical output regardless of thread count") {
  ExperimentConfig cfg = small_config();
  cfg.threads = 1;
  const auto one = results_text(run_experiment(cfg));
  cfg.threads = 8;
  const auto eight = results_text(run_experiment(cfg));
  CHECK(one == eight);
  cfg.master_seed = 18;
  CHECK(results_text(run_experiment(cfg)) != one);
}

TEST_CASE("summarize: independent re-aggregation of the replicate rows") {
  const auto res = run_experiment(small_config());
  std::map<std::tuple<int, double, int, std::string>, std::tuple<double, double, int, int>> acc;
  for (const auto& r : res.replicates) {
    auto& [imp, rank, rej, count] = acc[{r.scenario, r.rho, static_cast<int>(r.method), r.feature}];
    imp += *r.importance;
    rank += *r.rank;
    rej += (r.p_value && *r.p_value < 0.05) ? 1 : 0;
    ++count;
  }
  REQUIRE(acc.size() == res.summary.size());
  for (const auto& s : res.summary) {
    const auto& [imp, rank, rej, count] = acc.at({s.scenario, s.rho, static_cast<int>(s.method), s.feature});
    CHECK(s.n_reps == count);
    CHECK(s.mean_importance == doctest::Approx(imp / count).epsilon(1e-12));
    CHECK(s.mean_rank == doctest::Approx(rank / count).epsilon(1e-12));
    if (s.rejection_rate) CHECK(*s.rejection_rate == static_cast<double>(rej) / count);
  }
}

TEST_CASE("failed replicates become tagged rows and are excluded from the summary") {
  std::vector<ReplicateResult> rows;
  ReplicateResult ok;
  ok.scenario = 1;
  ok.method = Method::kLm;
  ok.feature = "x1";
  ok.importance = 2.0;
  ok.rank = 1.0;
  ok.p_value = 0.01;
  rows.push_back(ok);
  ReplicateResult bad;
  bad.scenario = 1;
  bad.method = Method::kLm;
  bad.replicate = 1;
  bad.error = "DegenerateCovariance: boom, with comma";
  rows.push_back(bad);
  sort_results(rows);
  const auto summary = summarize(rows);
  REQUIRE(summary.size() == 1);
  CHECK(summary[0].n_reps == 1);
  std::ostringstream out;
  write_results_csv(rows, out);
  std::istringstream in(out.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(std::count(line.begin(), line.end(), ',') == 9);
  }
  CHECK(lines == 3);
  CHECK(out.str().find(",,,,,,DegenerateCovariance") != std::string::npos);
}

TEST_CASE("CSV headers") {
  std::ostringstream r, s, e;
  write_results_csv({}, r);
  write_summary_csv({}, s);
  write_elbow_csv({}, e);
  CHECK(r.str() == "scenario,rho,replicate,method,feature,importance,std_err,p_value,rank,error\n");
  CHECK(s.str() == "scenario,rho,method,feature,mean_importance,mean_rank,rejection_rate,n_reps\n");
  CHECK(e.str() == "rho,empirical_self_corr,theoretical_self_corr,n\n");
}

TEST_CASE("run_elbow: theorem points and determinism") {
  const std::vector<double> grid{0.0, 0.75};
  const auto rows = run_elbow(grid, 100000, 7);
  REQUIRE(rows.size() == 2);
  CHECK(std::abs(rows[0].empirical_self_corr) < 0.02);
  CHECK(rows[0].theoretical_self_corr == 0.0);
  CHECK(std::abs(rows[1].empirical_self_corr - 0.5) < 0.02);
  CHECK(rows[1].theoretical_self_corr == 0.5);
  const auto again = run_elbow(grid, 100000, 7, false, 4);
  CHECK(again[1].empirical_self_corr == rows[1].empirical_self_corr);
  // the estimated-covariance mode tracks the same curve
  const auto est = run_elbow(grid, 100000, 7, true);
  CHECK(std::abs(est[1].empirical_self_corr - 0.5) < 0.02);
  CHECK_THROWS_AS(run_elbow({0.5, 1.0}, 100, 1), InvalidRho);
}

TEST_CASE("run_elbow: full grid stays within 0.02 of max(0, 2 rho - 1)") {
  std::vector<double> grid;
  for (int k = 0; k < 20; ++k) grid.push_back(0.05 * k);
  double worst = 0.0;
  for (const auto& r : run_elbow(grid, 100000, 3))
    worst = std::max(worst, std::abs(r.empirical_self_corr - r.theoretical_self_corr));
  CHECK(worst < 0.02);
}

TEST_CASE("write_file_atomic leaves no partial file when the writer throws") {
  const auto dir = std::filesystem::temp_directory_path() / "vimp_atomic_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "out.csv";
  std::filesystem::remove(path);
  CHECK_THROWS(write_file_atomic(path, [](std::ostream& o) {
    o << "partial\n";
    throw Error("writer failed");
  }));
  CHECK_FALSE(std::filesystem::exists(path));
  CHECK_FALSE(std::filesystem::exists(dir / "out.csv.tmp"));
  write_file_atomic(path, [](std::ostream& o) { o << "ok\n"; });
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "ok");
  std::filesystem::remove_all(dir);
}

TEST_CASE("parallel_for runs every index once and rethrows failures") {
  std::vector<int> hits(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 5) throw Error("x");
                  }),
                  Error);
}
