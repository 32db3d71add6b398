#include "vimp/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <string>

#include "vimp/datagen.hpp"
#include "vimp/error.hpp"
#include "vimp/format.hpp"
#include "vimp/harness.hpp"

namespace vimp::cli {

namespace {

double parse_real(std::string_view token) {
  const std::string s(token);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ValidationError("not a number: '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) throw ValidationError("not a number: '" + s + "'");
  return v;
}

double tidy(double v) { return std::round(v * 1e12) / 1e12; }

std::vector<int> parse_int_list(std::string_view text) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const auto token = text.substr(start, end - start);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size())
      throw ValidationError("not an integer: '" + std::string(token) + "'");
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

int resolve_threads(int flag_value, bool flag_given) {
  if (flag_given) return flag_value;
  if (const char* env = std::getenv("VI_SIM_THREADS"); env != nullptr && *env != '\0') {
    const auto v = parse_int_list(env);
    if (v.size() != 1 || v[0] < 0) throw ValidationError("VI_SIM_THREADS must be a non-negative integer");
    return v[0];
  }
  return 0;
}

struct RunFlags {
  std::string scenario = "1";
  std::string rho;
  std::string rho_grid;
  int reps = 100;
  std::size_t n = 1000;
  std::string methods = "lm,perm-rf,cpi-lm,cpi-rf";
  std::uint64_t seed = 0;
  std::string out;
  std::string summary_out;
  int threads = 0;
  int trees = 100;
  int mtry = 0;
  int min_leaf = 5;
  int max_depth = 0;
  int n_perms = 10;
  double split = 0.5;
  double noise_sd = std::sqrt(0.1);
  std::string s_method = "block-equi";
};

struct ElbowFlags {
  std::string rho_grid = "0:0.95:0.05";
  std::size_t n = 100000;
  std::uint64_t seed = 0;
  std::string out;
  bool estimate = false;
  int threads = 0;
  double tol = 0.02;
};

struct GenFlags {
  int scenario = 1;
  double rho = 0.0;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double noise_sd = std::sqrt(0.1);
  std::string out;
};

std::vector<double> rho_values(const RunFlags& f) {
  if (!f.rho.empty() && !f.rho_grid.empty()) throw ValidationError("give either --rho or --rho-grid, not both");
  if (!f.rho_grid.empty()) return parse_grid(f.rho_grid);
  if (!f.rho.empty()) return parse_grid(f.rho);
  throw ValidationError("one of --rho or --rho-grid is required");
}

int cmd_run(const RunFlags& f, int threads, std::ostream& out) {
  ExperimentConfig cfg;
  cfg.scenarios = parse_int_list(f.scenario);
  cfg.rho_grid = rho_values(f);
  cfg.reps = f.reps;
  cfg.n = f.n;
  cfg.methods = parse_methods(f.methods);
  cfg.master_seed = f.seed;
  cfg.threads = threads;
  cfg.forest_cfg = {f.trees, f.mtry, f.min_leaf, f.max_depth};
  cfg.n_perms = f.n_perms;
  cfg.split_fraction = f.split;
  cfg.noise_sd = f.noise_sd;
  if (f.s_method == "equi") {
    cfg.s_construction = SConstruction::kEqui;
  } else if (f.s_method == "block-equi") {
    cfg.s_construction = SConstruction::kBlockEqui;
  } else {
    throw ValidationError("--s-method must be equi or block-equi");
  }
  cfg.validate();

  const ExperimentResult result = run_experiment(cfg);
  write_file_atomic(f.out, [&](std::ostream& o) { write_results_csv(result.replicates, o); });
  write_file_atomic(f.summary_out, [&](std::ostream& o) { write_summary_csv(result.summary, o); });
  std::size_t failures = 0;
  for (const auto& r : result.replicates) failures += r.error.empty() ? 0 : 1;
  out << "wrote " << result.replicates.size() << " result rows (" << failures << " failed) to " << f.out
      << " and " << result.summary.size() << " summary rows to " << f.summary_out << '\n';
  return 0;
}

int cmd_elbow(const ElbowFlags& f, int threads, std::ostream& out) {
  const auto grid = parse_grid(f.rho_grid);
  const auto rows = run_elbow(grid, f.n, f.seed, f.estimate, threads);
  write_file_atomic(f.out, [&](std::ostream& o) { write_elbow_csv(rows, o); });
  out << "wrote " << rows.size() << " rows to " << f.out << '\n';
  return 0;
}

int cmd_theorem_check(const ElbowFlags& f, int threads, std::ostream& out) {
  if (!(f.tol > 0.0)) throw ValidationError("--tol must be positive");
  const auto rows = run_elbow(parse_grid(f.rho_grid), f.n, f.seed, f.estimate, threads);
  bool all_pass = true;
  double worst = 0.0;
  for (const auto& r : rows) {
    const double diff = std::abs(r.empirical_self_corr - r.theoretical_self_corr);
    const bool pass = diff < f.tol;
    all_pass = all_pass && pass;
    worst = std::max(worst, diff);
    out << fmt::format("rho={:<5} empirical={:+.5f} theoretical={:.5f} |diff|={:.5f} {}\n", format_real(r.rho),
                       r.empirical_self_corr, r.theoretical_self_corr, diff, pass ? "PASS" : "FAIL");
  }
  out << fmt::format("overall: {} (max |diff| = {:.5f}, tol = {}, n = {})\n", all_pass ? "PASS" : "FAIL", worst,
                     format_real(f.tol), f.n);
  return all_pass ? 0 : 1;
}

int cmd_gen_data(const GenFlags& f, std::ostream& out) {
  ScenarioSpec spec = ScenarioSpec::make(f.scenario, f.rho);
  spec.noise_sd = f.noise_sd;
  if (f.n == 0) throw ValidationError("--n must be positive");
  RngStream rng(mix_seed({f.seed}));
  const Dataset data = generate_dataset(spec, f.n, rng);
  write_file_atomic(f.out, [&](std::ostream& o) { write_dataset_csv(data, o); });
  out << "wrote " << data.n() << " rows to " << f.out << '\n';
  return 0;
}

}  // namespace

std::vector<double> parse_grid(std::string_view text) {
  if (text.find(':') == std::string_view::npos) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto end = std::min(text.find(',', start), text.size());
      out.push_back(parse_real(text.substr(start, end - start)));
      start = end + 1;
    }
    return out;
  }
  const auto c1 = text.find(':');
  const auto c2 = text.find(':', c1 + 1);
  if (c2 == std::string_view::npos || text.find(':', c2 + 1) != std::string_view::npos)
    throw ValidationError("grid must look like a:b:step, got '" + std::string(text) + "'");
  const double a = parse_real(text.substr(0, c1));
  const double b = parse_real(text.substr(c1 + 1, c2 - c1 - 1));
  const double step = parse_real(text.substr(c2 + 1));
  if (!(step > 0.0)) throw ValidationError("grid step must be positive");
  if (b < a) throw ValidationError("grid end is below grid start");
  const double span = (b - a) / step;
  auto count = static_cast<long>(std::floor(span + 1e-9));
  if (count > 100000) throw ValidationError("grid has too many points");
  std::vector<double> out;
  for (long k = 0; k <= count; ++k) out.push_back(tidy(a + static_cast<double>(k) * step));
  if (std::abs(a + static_cast<double>(count) * step - b) <= 1e-9) out.back() = b;
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Variable importance under feature correlation: simulation harness and knockoff diagnostics",
               "vimp"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "Run the scenario x rho x replicate simulation sweep");
  run_cmd->add_option("--scenario", run_flags.scenario, "Scenario id or comma list (1-4)")->capture_default_str();
  run_cmd->add_option("--rho", run_flags.rho, "Latent correlation value(s), comma separated");
  run_cmd->add_option("--rho-grid", run_flags.rho_grid, "Correlation grid a:b:step (inclusive)");
  run_cmd->add_option("--reps", run_flags.reps, "Replicates per (scenario, rho)")->capture_default_str();
  run_cmd->add_option("--n", run_flags.n, "Rows per replicate")->capture_default_str();
  run_cmd->add_option("--methods", run_flags.methods, "Comma list of lm, perm-rf, cpi-lm, cpi-rf")
      ->capture_default_str();
  run_cmd->add_option("--seed", run_flags.seed, "Master seed")->capture_default_str();
  run_cmd->add_option("--out", run_flags.out, "Per-replicate results CSV")->required();
  run_cmd->add_option("--summary-out", run_flags.summary_out, "Aggregated summary CSV")->required();
  run_cmd->add_option("--trees", run_flags.trees, "Trees per forest")->capture_default_str();
  run_cmd->add_option("--mtry", run_flags.mtry, "Candidate features per split (0: p/3)")->capture_default_str();
  run_cmd->add_option("--min-leaf", run_flags.min_leaf, "Minimum rows per leaf")->capture_default_str();
  run_cmd->add_option("--max-depth", run_flags.max_depth, "Maximum tree depth (0: unlimited)")
      ->capture_default_str();
  run_cmd->add_option("--n-perms", run_flags.n_perms, "Shuffles per feature for permutation importance")
      ->capture_default_str();
  run_cmd->add_option("--split", run_flags.split, "Training share for the cpi-lm linear model")
      ->capture_default_str();
  run_cmd->add_option("--noise-sd", run_flags.noise_sd, "Noise standard deviation")->capture_default_str();
  run_cmd->add_option("--s-method", run_flags.s_method, "Knockoff S construction: block-equi or equi")
      ->capture_default_str();
  auto* run_threads = run_cmd->add_option("--threads", run_flags.threads, "Worker threads (0: auto)");

  ElbowFlags elbow_flags;
  auto* elbow_cmd = app.add_subcommand("elbow", "Measure corr(X1, X1~) across a correlation grid");
  elbow_cmd->add_option("--rho-grid", elbow_flags.rho_grid, "Correlation grid a:b:step")->required();
  elbow_cmd->add_option("--n", elbow_flags.n, "Rows per grid point")->required();
  elbow_cmd->add_option("--seed", elbow_flags.seed, "Master seed")->required();
  elbow_cmd->add_option("--out", elbow_flags.out, "Output CSV")->required();
  elbow_cmd->add_flag("--estimate", elbow_flags.estimate, "Build knockoffs from the estimated covariance");
  auto* elbow_threads = elbow_cmd->add_option("--threads", elbow_flags.threads, "Worker threads (0: auto)");

  ElbowFlags check_flags;
  auto* check_cmd = app.add_subcommand("theorem-check", "Check the knockoff self-correlation elbow");
  check_cmd->add_option("--tol", check_flags.tol, "Allowed |empirical - theoretical|")->capture_default_str();
  check_cmd->add_option("--n", check_flags.n, "Rows per grid point")->capture_default_str();
  check_cmd->add_option("--seed", check_flags.seed, "Master seed")->capture_default_str();
  check_cmd->add_option("--rho-grid", check_flags.rho_grid, "Correlation grid a:b:step")->capture_default_str();
  check_cmd->add_flag("--estimate", check_flags.estimate, "Build knockoffs from the estimated covariance");
  auto* check_threads = check_cmd->add_option("--threads", check_flags.threads, "Worker threads (0: auto)");

  GenFlags gen_flags;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write one simulated dataset as CSV");
  gen_cmd->add_option("--scenario", gen_flags.scenario, "Scenario id (1-4)")->capture_default_str();
  gen_cmd->add_option("--rho", gen_flags.rho, "Latent correlation of x1 and x2")->capture_default_str();
  gen_cmd->add_option("--n", gen_flags.n, "Rows")->capture_default_str();
  gen_cmd->add_option("--seed", gen_flags.seed, "Seed")->capture_default_str();
  gen_cmd->add_option("--noise-sd", gen_flags.noise_sd, "Noise standard deviation")->capture_default_str();
  gen_cmd->add_option("--out", gen_flags.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run_flags, resolve_threads(run_flags.threads, run_threads->count() > 0), out);
    if (elbow_cmd->parsed())
      return cmd_elbow(elbow_flags, resolve_threads(elbow_flags.threads, elbow_threads->count() > 0), out);
    if (check_cmd->parsed())
      return cmd_theorem_check(check_flags, resolve_threads(check_flags.threads, check_threads->count() > 0), out);
    if (gen_cmd->parsed()) return cmd_gen_data(gen_flags, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace vimp::cli
