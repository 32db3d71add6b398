#pragma once

// Second-order Gaussian model-X knockoffs.
//
// For (X, X~) ~ N(mu, G) with G = [[Sigma, Sigma - S], [Sigma - S, Sigma]]
// and S = diag(s), the knockoff given X = x is Gaussian with
//   mean  mu + A (x - mu),     A = (Sigma - S) Sigma^-1 = I - S Sigma^-1
//   cov   V = 2S - S Sigma^-1 S.
// G is PSD iff 2 Sigma - S is PSD (and S >= 0), which bounds how far the
// knockoff can move away from the original feature.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "vimp/matrix.hpp"
#include "vimp/rng.hpp"

namespace vimp {

struct GaussianModel {
  std::vector<double> mean;
  SymMatrix cov;
};

// Sample mean and unbiased covariance, shrunk toward its diagonal by the
// smallest delta on a doubling ladder (0, 1e-8, 2e-8, ... <= 1e-2) that
// makes lambda_min >= 1e-10.
GaussianModel estimate_gaussian(const Matrix& x);

// Equicorrelated S: s_corr = min(2 lambda_min(corr(Sigma)), 1) and
// s_j = s_corr * Sigma_jj.
std::vector<double> equi_s(const SymMatrix& cov);

// Equicorrelated S computed block by block. Features are grouped into
// connected components of |corr| > threshold, each block gets its own
// equicorrelated s, and the whole vector is then scaled by the largest
// gamma in [0, 1] keeping 2 Sigma - gamma S PSD. On a single block this is
// identical to equi_s.
std::vector<double> block_equi_s(const SymMatrix& cov, double threshold = 0.3);

enum class SConstruction { kEqui, kBlockEqui };

struct KnockoffParams {
  std::vector<double> mean;
  SymMatrix cov;
  std::vector<double> s;
  Matrix cond_coef;    // A = I - S Sigma^-1
  Matrix shrink_coef;  // S Sigma^-1, so the conditional mean is x - (S Sigma^-1)(x - mu)
  Matrix cond_factor;  // C with C C^T = V; zero rows/columns where V is degenerate
  SymMatrix joint_cov; // G, 2p x 2p

  std::size_t p() const { return s.size(); }
};

KnockoffParams knockoff_params(const GaussianModel& model,
                               SConstruction method = SConstruction::kEqui);
// Explicit S diagonal, e.g. s = 0 which makes every knockoff equal its original.
KnockoffParams knockoff_params(const GaussianModel& model, std::span<const double> s);

Matrix sample_knockoffs(const Matrix& x, const KnockoffParams& params, RngStream& rng);

// corr(X_j, X~_j) implied by the bivariate equicorrelated construction for
// corr(X_1, X_2) = rho: zero up to 0.5, then 2 rho - 1.
double theoretical_self_corr(double rho);

struct KnockoffDiagnostics {
  std::vector<double> per_feature_self_corr;
  // max |cov(X, X~) - (Sigma - S)| over the cross block; needs params.
  std::optional<double> cross_corr_error;
  // corr(X~_1, X~_2); needs p >= 2.
  std::optional<double> knockoff_pair_corr;
};

KnockoffDiagnostics diagnostics(const Matrix& x, const Matrix& x_tilde,
                                const KnockoffParams* params = nullptr);

// Sample covariance (divisor n - 1) of the column-wise concatenation [a, b].
Matrix joint_sample_cov(const Matrix& a, const Matrix& b);

}  // namespace vimp
