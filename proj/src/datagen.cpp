#include "vimp/datagen.hpp"

#include <ostream>

#include "vimp/error.hpp"
#include "vimp/format.hpp"
#include "vimp/special.hpp"

namespace vimp {

ScenarioSpec ScenarioSpec::make(int scenario_id, double rho) {
  validate_rho(rho);
  ScenarioSpec spec;
  spec.scenario_id = scenario_id;
  spec.rho = rho;
  switch (scenario_id) {
    case 1:
    case 3:
      spec.beta = {1, 1, 1, 1, 1, 0, 0.5, 0.8, 1.2, 1.5};
      break;
    case 2:
    case 4:
      spec.beta = {0, 1, 1, 1, 1, 0, 0.5, 0.8, 1.2, 1.5};
      break;
    default:
      throw ValidationError("scenario must be 1, 2, 3 or 4, got " + std::to_string(scenario_id));
  }
  spec.aggregate_first_two = scenario_id >= 3;
  return spec;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > n()) throw DimensionMismatch("Dataset::slice: bad row range");
  Dataset out;
  out.x = Matrix(end - begin, p());
  for (std::size_t i = begin; i < end; ++i) {
    auto src = x.row(i);
    std::copy(src.begin(), src.end(), out.x.row(i - begin).begin());
  }
  out.y.assign(y.begin() + static_cast<std::ptrdiff_t>(begin),
               y.begin() + static_cast<std::ptrdiff_t>(end));
  out.feature_names = feature_names;
  return out;
}

void validate_rho(double rho) {
  if (!(rho >= 0.0 && rho < 1.0))
    throw InvalidRho("rho must lie in [0, 1), got " + format_real(rho));
}

Matrix copula_sample(std::size_t n, double rho, RngStream& rng) {
  validate_rho(rho);
  if (n == 0) throw ValidationError("copula_sample: n must be positive");
  // Cholesky factor of the 2x2 latent correlation block.
  const double tail = std::sqrt(1.0 - rho * rho);
  Matrix u(n, kRawFeatures);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = u.row(i);
    const double z1 = rng.normal();
    const double z2 = rho * z1 + tail * rng.normal();
    row[0] = normal_cdf(z1);
    row[1] = normal_cdf(z2);
    for (std::size_t j = 2; j < kRawFeatures; ++j) row[j] = normal_cdf(rng.normal());
  }
  return u;
}

double scenario_target(const ScenarioSpec& spec, std::span<const double> x_row) {
  if (x_row.size() != kRawFeatures) throw DimensionMismatch("scenario_target expects 10 raw features");
  // Scenario 3 replaces x1 + x2 by their mean in the target. Scenario 4
  // keeps the scenario-2 target (x1 null, x2 active); only the observed
  // feature set changes.
  const bool mean_in_target = spec.aggregate_first_two && spec.beta[0] != 0.0;
  double f = 0.0;
  for (std::size_t j = 0; j < kRawFeatures; ++j) {
    const double coef = (mean_in_target && j < 2) ? 0.5 * spec.beta[j] : spec.beta[j];
    f += coef * x_row[j];
  }
  return f;
}

Dataset generate_dataset(const ScenarioSpec& spec, std::size_t n, RngStream& rng) {
  if (!(spec.noise_sd >= 0.0)) throw ValidationError("noise_sd must be non-negative");
  RngStream feature_rng = rng.substream(0);
  RngStream noise_rng = rng.substream(1);
  const Matrix raw = copula_sample(n, spec.rho, feature_rng);

  Dataset data;
  data.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double eps = spec.noise_sd > 0.0 ? spec.noise_sd * noise_rng.normal() : 0.0;
    data.y[i] = scenario_target(spec, raw.row(i)) + eps;
  }

  if (!spec.aggregate_first_two) {
    data.x = raw;
    for (std::size_t j = 0; j < kRawFeatures; ++j) data.feature_names.push_back("x" + std::to_string(j + 1));
    return data;
  }
  data.x = Matrix(n, kRawFeatures - 1);
  for (std::size_t i = 0; i < n; ++i) {
    auto src = raw.row(i);
    auto dst = data.x.row(i);
    dst[0] = 0.5 * (src[0] + src[1]);
    std::copy(src.begin() + 2, src.end(), dst.begin() + 1);
  }
  data.feature_names.push_back("avg_x1_x2");
  for (std::size_t j = 2; j < kRawFeatures; ++j) data.feature_names.push_back("x" + std::to_string(j + 1));
  return data;
}

void write_dataset_csv(const Dataset& data, std::ostream& out) {
  for (const auto& name : data.feature_names) out << name << ',';
  out << "y\n";
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (double v : data.x.row(i)) out << format_real(v) << ',';
    out << format_real(data.y[i]) << '\n';
  }
}

}  // namespace vimp
