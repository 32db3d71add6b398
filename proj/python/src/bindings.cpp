#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vimp/datagen.hpp"
#include "vimp/error.hpp"
#include "vimp/harness.hpp"
#include "vimp/importance.hpp"
#include "vimp/knockoffs.hpp"
#include "vimp/models.hpp"

namespace py = pybind11;
using namespace vimp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw DimensionMismatch("expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw DimensionMismatch("expected a 1-d array");
  return {a.data(), a.data() + a.size()};
}

py::array_t<double> from_matrix(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> from_vector(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

SymMatrix to_sym(const Array& a) { return SymMatrix::symmetrized(to_matrix(a)); }

SConstruction parse_s_method(const std::string& name) {
  if (name == "equi") return SConstruction::kEqui;
  if (name == "block-equi") return SConstruction::kBlockEqui;
  throw ValidationError("s method must be 'equi' or 'block-equi', got '" + name + "'");
}

KnockoffParams make_params(const Array& cov, const std::optional<Array>& mean, const std::string& method,
                           const std::optional<Array>& s) {
  GaussianModel model{{}, to_sym(cov)};
  model.mean = mean ? to_vector(*mean) : std::vector<double>(model.cov.dim(), 0.0);
  if (s) return knockoff_params(model, to_vector(*s));
  return knockoff_params(model, parse_s_method(method));
}

Dataset make_dataset(const Array& x, const Array& y) {
  Dataset d;
  d.x = to_matrix(x);
  d.y = to_vector(y);
  for (std::size_t j = 0; j < d.x.cols(); ++j) d.feature_names.push_back("x" + std::to_string(j + 1));
  if (d.y.size() != d.x.rows()) throw DimensionMismatch("x and y have different row counts");
  return d;
}

py::list report_rows(const ImportanceReport& r) {
  py::list out;
  for (const auto& f : r.features) {
    py::dict row;
    row["feature"] = f.name;
    row["importance"] = f.importance;
    row["std_err"] = f.std_err ? py::cast(*f.std_err) : py::none();
    row["p_value"] = f.p_value ? py::cast(*f.p_value) : py::none();
    row["rank"] = f.rank;
    out.append(row);
  }
  return out;
}

py::dict linear_model_dict(const LinearModel& m) {
  py::dict d;
  d["intercept"] = m.intercept;
  d["coefficients"] = from_vector(m.coefficients);
  d["std_errors"] = from_vector(m.std_errors);
  d["p_values"] = from_vector(m.p_values);
  d["residual_variance"] = m.residual_variance;
  d["df"] = m.df;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core routines: numerics, simulated scenarios, models, knockoffs, importance and sweeps";

  static py::exception<Error> base_error(m, "VimpError", PyExc_RuntimeError);
  static py::exception<ValidationError> validation_error(m, "ValidationError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      py::set_error(validation_error, e.what());
    } catch (const Error& e) {
      py::set_error(base_error, e.what());
    }
  });

  m.def("min_eigenvalue", [](const Array& a) { return min_eigenvalue(to_sym(a)); }, py::arg("matrix"));
  m.def("cholesky", [](const Array& a) { return from_matrix(cholesky(SymMatrix(to_matrix(a))).lower); },
        py::arg("matrix"), "Lower Cholesky factor of an exactly symmetric positive definite matrix.");

  m.def("equi_s", [](const Array& cov) { return equi_s(to_sym(cov)); }, py::arg("cov"));
  m.def("block_equi_s", [](const Array& cov, double threshold) { return block_equi_s(to_sym(cov), threshold); },
        py::arg("cov"), py::arg("threshold") = 0.3);
  m.def("theoretical_self_corr", &theoretical_self_corr, py::arg("rho"));

  m.def(
      "estimate_gaussian",
      [](const Array& x) {
        const auto g = estimate_gaussian(to_matrix(x));
        return py::make_tuple(from_vector(g.mean), from_matrix(g.cov.matrix()));
      },
      py::arg("x"), "Sample mean and (minimally shrunk) covariance.");

  m.def(
      "knockoff_params",
      [](const Array& cov, const std::optional<Array>& mean, const std::string& method,
         const std::optional<Array>& s) {
        const auto kp = make_params(cov, mean, method, s);
        py::dict d;
        d["s"] = from_vector(kp.s);
        d["cond_coef"] = from_matrix(kp.cond_coef);
        d["cond_factor"] = from_matrix(kp.cond_factor);
        d["joint_cov"] = from_matrix(kp.joint_cov.matrix());
        return d;
      },
      py::arg("cov"), py::arg("mean") = py::none(), py::arg("method") = "equi", py::arg("s") = py::none());

  m.def(
      "sample_knockoffs",
      [](const Array& x, const Array& cov, const std::optional<Array>& mean, const std::string& method,
         const std::optional<Array>& s, std::uint64_t seed) {
        const auto kp = make_params(cov, mean, method, s);
        RngStream rng(seed);
        return from_matrix(sample_knockoffs(to_matrix(x), kp, rng));
      },
      py::arg("x"), py::arg("cov"), py::arg("mean") = py::none(), py::arg("method") = "equi",
      py::arg("s") = py::none(), py::arg("seed") = 0);

  m.def(
      "generate_dataset",
      [](int scenario, double rho, std::size_t n, std::uint64_t seed, std::optional<double> noise_sd) {
        auto spec = ScenarioSpec::make(scenario, rho);
        if (noise_sd) spec.noise_sd = *noise_sd;
        RngStream rng(mix_seed({seed}));
        const Dataset d = generate_dataset(spec, n, rng);
        py::dict out;
        out["x"] = from_matrix(d.x);
        out["y"] = from_vector(d.y);
        out["feature_names"] = d.feature_names;
        return out;
      },
      py::arg("scenario"), py::arg("rho"), py::arg("n"), py::arg("seed") = 0, py::arg("noise_sd") = py::none());

  m.def(
      "fit_ols", [](const Array& x, const Array& y) { return linear_model_dict(fit_ols(make_dataset(x, y))); },
      py::arg("x"), py::arg("y"));

  m.def(
      "rank_features", [](const std::vector<double>& v) { return rank_features(v); }, py::arg("importances"));

  m.def(
      "permutation_linear",
      [](const Array& x_train, const Array& y_train, const Array& x_eval, const Array& y_eval, int n_perms,
         std::uint64_t seed) {
        const LinearModel model = fit_ols(make_dataset(x_train, y_train));
        return report_rows(permutation_importance(model, make_dataset(x_eval, y_eval), n_perms, RngStream(seed)));
      },
      py::arg("x_train"), py::arg("y_train"), py::arg("x_eval"), py::arg("y_eval"), py::arg("n_perms") = 10,
      py::arg("seed") = 0, "Permutation importance of an OLS fit, scored on the evaluation rows.");

  m.def(
      "cpi_linear",
      [](const Array& x_train, const Array& y_train, const Array& x_eval, const Array& y_eval,
         const std::string& method, std::uint64_t seed) {
        const Dataset train = make_dataset(x_train, y_train);
        const LinearModel model = fit_ols(train);
        const auto kp = knockoff_params(estimate_gaussian(train.x), parse_s_method(method));
        RngStream rng(seed);
        return report_rows(cpi(model, make_dataset(x_eval, y_eval), kp, rng));
      },
      py::arg("x_train"), py::arg("y_train"), py::arg("x_eval"), py::arg("y_eval"), py::arg("method") = "block-equi",
      py::arg("seed") = 0, "CPI of an OLS fit with Gaussian knockoffs estimated from the training rows.");

  m.def(
      "run_elbow",
      [](const std::vector<double>& grid, std::size_t n, std::uint64_t seed, bool estimate, int threads) {
        std::vector<ElbowRow> rows;
        {
          py::gil_scoped_release release;
          rows = run_elbow(grid, n, seed, estimate, threads);
        }
        py::list out;
        for (const auto& r : rows) {
          py::dict d;
          d["rho"] = r.rho;
          d["empirical_self_corr"] = r.empirical_self_corr;
          d["theoretical_self_corr"] = r.theoretical_self_corr;
          d["n"] = r.n;
          out.append(d);
        }
        return out;
      },
      py::arg("rho_grid"), py::arg("n"), py::arg("seed") = 0, py::arg("estimate") = false, py::arg("threads") = 1);

  m.def(
      "run_experiment",
      [](const std::vector<int>& scenarios, const std::vector<double>& rho_grid, std::size_t n, int reps,
         const std::string& methods, std::uint64_t seed, int trees, int n_perms, const std::string& s_method,
         int threads) {
        ExperimentConfig cfg;
        cfg.scenarios = scenarios;
        cfg.rho_grid = rho_grid;
        cfg.n = n;
        cfg.reps = reps;
        cfg.methods = parse_methods(methods);
        cfg.master_seed = seed;
        cfg.forest_cfg.n_trees = trees;
        cfg.n_perms = n_perms;
        cfg.s_construction = parse_s_method(s_method);
        cfg.threads = threads;
        cfg.validate();
        ExperimentResult res;
        {
          py::gil_scoped_release release;
          res = run_experiment(cfg);
        }
        std::ostringstream results, summary;
        write_results_csv(res.replicates, results);
        write_summary_csv(res.summary, summary);
        py::list rows;
        for (const auto& s : res.summary) {
          py::dict d;
          d["scenario"] = s.scenario;
          d["rho"] = s.rho;
          d["method"] = std::string(to_string(s.method));
          d["feature"] = s.feature;
          d["mean_importance"] = s.mean_importance;
          d["mean_rank"] = s.mean_rank;
          d["rejection_rate"] = s.rejection_rate ? py::cast(*s.rejection_rate) : py::none();
          d["n_reps"] = s.n_reps;
          rows.append(d);
        }
        py::dict out;
        out["summary"] = rows;
        out["results_csv"] = results.str();
        out["summary_csv"] = summary.str();
        return out;
      },
      py::arg("scenarios"), py::arg("rho_grid"), py::arg("n") = 1000, py::arg("reps") = 100,
      py::arg("methods") = "lm,perm-rf,cpi-lm,cpi-rf", py::arg("seed") = 0, py::arg("trees") = 100,
      py::arg("n_perms") = 10, py::arg("s_method") = "block-equi", py::arg("threads") = 1);
}
