#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "vimp/matrix.hpp"
#include "vimp/rng.hpp"

namespace vimp {

inline constexpr std::size_t kRawFeatures = 10;

struct ScenarioSpec {
  int scenario_id = 1;
  std::array<double, kRawFeatures> beta{};
  double rho = 0.0;  // latent Gaussian-copula correlation of x1 and x2
  double noise_sd = std::sqrt(0.1);
  bool aggregate_first_two = false;

  // The four simulation scenarios: 1 and 3 weight x1 like the other
  // controls, 2 and 4 make x1 a null feature; 3 and 4 observe only the
  // mean of x1 and x2.
  static ScenarioSpec make(int scenario_id, double rho);

  std::size_t num_features() const { return aggregate_first_two ? kRawFeatures - 1 : kRawFeatures; }
};

struct Dataset {
  Matrix x;
  std::vector<double> y;
  std::vector<std::string> feature_names;

  std::size_t n() const { return x.rows(); }
  std::size_t p() const { return x.cols(); }

  // Rows [begin, end) as a new dataset.
  Dataset slice(std::size_t begin, std::size_t end) const;
};

void validate_rho(double rho);

// n x 10 matrix of Uniform(0,1) features. Columns 0 and 1 share latent
// Gaussian correlation rho; the rest are independent.
Matrix copula_sample(std::size_t n, double rho, RngStream& rng);

// Noise-free response for one raw (pre-aggregation) row of 10 features.
double scenario_target(const ScenarioSpec& spec, std::span<const double> x_row);

Dataset generate_dataset(const ScenarioSpec& spec, std::size_t n, RngStream& rng);

// CSV with header `x1,...,x10,y` (or `avg_x1_x2,x3,...,y`), round-trip
// decimals, LF line endings.
void write_dataset_csv(const Dataset& data, std::ostream& out);

}  // namespace vimp
