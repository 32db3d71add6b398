#include "vimp/knockoffs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vimp/datagen.hpp"
#include "vimp/error.hpp"

namespace vimp {

namespace {

constexpr double kMaxShrink = 1e-2;
constexpr double kFeasibilityTol = 1e-10;

// delta = 0, 1e-8, 2e-8, 4e-8, ..., last value <= kMaxShrink.
std::vector<double> shrink_ladder() {
  std::vector<double> ladder{0.0};
  for (double d = 1e-8; d <= kMaxShrink; d *= 2.0) ladder.push_back(d);
  return ladder;
}

Matrix shrink_toward_diagonal(const Matrix& m, double delta) {
  Matrix out = (1.0 - delta) * m;
  for (std::size_t i = 0; i < m.rows(); ++i) out(i, i) = m(i, i);
  return out;
}

SymMatrix correlation_of(const SymMatrix& cov) {
  const std::size_t p = cov.dim();
  Matrix r(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    if (!(cov(i, i) > 0.0)) throw DegenerateCovariance("feature " + std::to_string(i) + " has zero variance");
    for (std::size_t j = 0; j < p; ++j) r(i, j) = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
  }
  for (std::size_t i = 0; i < p; ++i) r(i, i) = 1.0;
  return SymMatrix::symmetrized(r);
}

// 2 Sigma - diag(s), expressed on the correlation scale.
double knockoff_slack(const SymMatrix& corr, std::span<const double> s_corr) {
  Matrix m = 2.0 * corr.matrix();
  for (std::size_t i = 0; i < s_corr.size(); ++i) m(i, i) -= s_corr[i];
  return min_eigenvalue(SymMatrix(std::move(m)));
}

void check_feasible(const SymMatrix& cov, std::span<const double> s) {
  const std::size_t p = cov.dim();
  Matrix two_sigma_minus_s = 2.0 * cov.matrix();
  double scale = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    if (s[j] < 0.0) throw DegenerateCovariance("knockoff S has a negative entry");
    if (s[j] > cov(j, j) * (1.0 + 1e-12))
      throw DegenerateCovariance("knockoff s_j exceeds var_j");
    two_sigma_minus_s(j, j) -= s[j];
    scale = std::max(scale, cov(j, j));
  }
  if (min_eigenvalue(SymMatrix(std::move(two_sigma_minus_s))) < -kFeasibilityTol * std::max(scale, 1.0))
    throw DegenerateCovariance("knockoff S violates 2*Sigma - S >= 0");
}

// Factor C with C C^T = V for a PSD V. Rows/columns with zero diagonal are
// identically zero in a PSD matrix and stay zero in C; the rest goes
// through cholesky with the diagonal shrinkage ladder as a fallback.
Matrix psd_factor(const Matrix& v) {
  const std::size_t p = v.rows();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < p; ++i) max_diag = std::max(max_diag, v(i, i));
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < p; ++i)
    if (v(i, i) > 1e-14 * std::max(max_diag, 1.0)) active.push_back(i);

  Matrix out(p, p);
  if (active.empty()) return out;
  Matrix sub(active.size(), active.size());
  for (std::size_t a = 0; a < active.size(); ++a)
    for (std::size_t b = 0; b < active.size(); ++b) sub(a, b) = v(active[a], active[b]);

  for (double delta : shrink_ladder()) {
    try {
      const CholFactor f = cholesky(SymMatrix::symmetrized(shrink_toward_diagonal(sub, delta)));
      for (std::size_t a = 0; a < active.size(); ++a)
        for (std::size_t b = 0; b <= a; ++b) out(active[a], active[b]) = f.lower(a, b);
      return out;
    } catch (const NotPositiveDefinite&) {
    }
  }
  throw DegenerateCovariance("knockoff conditional covariance could not be factored");
}

}  // namespace

GaussianModel estimate_gaussian(const Matrix& x) {
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  if (p == 0 || n <= p) throw ValidationError("estimate_gaussian: need n > p");
  std::vector<double> mean(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) mean[j] += x(i, j);
  for (double& m : mean) m /= static_cast<double>(n);

  Matrix cov(p, p);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = x.row(i);
    for (std::size_t a = 0; a < p; ++a) {
      const double da = row[a] - mean[a];
      for (std::size_t b = 0; b <= a; ++b) cov(a, b) += da * (row[b] - mean[b]);
    }
  }
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b <= a; ++b) {
      cov(a, b) /= static_cast<double>(n - 1);
      cov(b, a) = cov(a, b);
    }

  for (double delta : shrink_ladder()) {
    SymMatrix candidate(shrink_toward_diagonal(cov, delta));
    if (min_eigenvalue(candidate) >= 1e-10) return GaussianModel{std::move(mean), std::move(candidate)};
  }
  throw DegenerateCovariance("estimate_gaussian: covariance stays singular after shrinkage");
}

std::vector<double> equi_s(const SymMatrix& cov) {
  const SymMatrix corr = correlation_of(cov);
  const double s_corr = std::clamp(2.0 * min_eigenvalue(corr), 0.0, 1.0);
  std::vector<double> s(cov.dim());
  for (std::size_t j = 0; j < s.size(); ++j) s[j] = s_corr * cov(j, j);
  check_feasible(cov, s);
  return s;
}

std::vector<double> block_equi_s(const SymMatrix& cov, double threshold) {
  const SymMatrix corr = correlation_of(cov);
  const std::size_t p = cov.dim();

  // Connected components of the |corr| > threshold graph.
  std::vector<std::size_t> block(p);
  std::iota(block.begin(), block.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (block[i] != i) i = block[i] = block[block[i]];
    return i;
  };
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j)
      if (std::abs(corr(i, j)) > threshold) {
        const auto a = find(i);
        const auto b = find(j);
        if (a != b) block[std::max(a, b)] = std::min(a, b);
      }

  std::vector<double> s_corr(p, 1.0);
  for (std::size_t root = 0; root < p; ++root) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < p; ++i)
      if (find(i) == root) members.push_back(i);
    if (members.size() < 2) continue;
    Matrix sub(members.size(), members.size());
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t b = 0; b < members.size(); ++b) sub(a, b) = corr(members[a], members[b]);
    const double s_block = std::clamp(2.0 * min_eigenvalue(SymMatrix(std::move(sub))), 0.0, 1.0);
    for (auto m : members) s_corr[m] = s_block;
  }

  // Off-block correlations can make the block-wise choice infeasible; shrink
  // uniformly until 2R - gamma diag(s) is PSD.
  if (knockoff_slack(corr, s_corr) < -kFeasibilityTol) {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<double> scaled(p);
    for (int iter = 0; iter < 60; ++iter) {
      const double mid = 0.5 * (lo + hi);
      for (std::size_t j = 0; j < p; ++j) scaled[j] = mid * s_corr[j];
      (knockoff_slack(corr, scaled) >= 0.0 ? lo : hi) = mid;
    }
    for (double& v : s_corr) v *= lo;
  }

  std::vector<double> s(p);
  for (std::size_t j = 0; j < p; ++j) s[j] = s_corr[j] * cov(j, j);
  check_feasible(cov, s);
  return s;
}

KnockoffParams knockoff_params(const GaussianModel& model, SConstruction method) {
  const auto s = method == SConstruction::kEqui ? equi_s(model.cov) : block_equi_s(model.cov);
  return knockoff_params(model, s);
}

KnockoffParams knockoff_params(const GaussianModel& model, std::span<const double> s) {
  const std::size_t p = model.cov.dim();
  if (s.size() != p || model.mean.size() != p)
    throw DimensionMismatch("knockoff_params: s / mean length differs from covariance dimension");
  check_feasible(model.cov, s);

  const CholFactor sigma_chol = [&] {
    try {
      return cholesky(model.cov);
    } catch (const NotPositiveDefinite& e) {
      throw DegenerateCovariance(std::string("knockoff_params: covariance not PD (") + e.what() + ")");
    }
  }();
  // Sigma^-1 S, transposed, is S Sigma^-1 (both symmetric).
  Matrix s_diag(p, p);
  for (std::size_t j = 0; j < p; ++j) s_diag(j, j) = s[j];
  const Matrix shrink = solve_with(sigma_chol, s_diag).transpose();

  Matrix cond_coef = Matrix::identity(p) - shrink;
  Matrix v = 2.0 * s_diag - shrink * s_diag;

  Matrix g(2 * p, 2 * p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      const double c = model.cov(i, j);
      const double cross = i == j ? c - s[i] : c;
      g(i, j) = c;
      g(i + p, j + p) = c;
      g(i, j + p) = cross;
      g(i + p, j) = cross;
    }

  KnockoffParams params{model.mean,
                        model.cov,
                        std::vector<double>(s.begin(), s.end()),
                        std::move(cond_coef),
                        shrink,
                        psd_factor(SymMatrix::symmetrized(v).matrix()),
                        SymMatrix(std::move(g))};
  return params;
}

Matrix sample_knockoffs(const Matrix& x, const KnockoffParams& params, RngStream& rng) {
  const std::size_t p = params.p();
  if (x.cols() != p) throw DimensionMismatch("sample_knockoffs: column count differs from params");
  Matrix out(x.rows(), p);
  std::vector<double> centered(p);
  std::vector<double> z(p);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < p; ++j) centered[j] = row[j] - params.mean[j];
    for (double& v : z) v = rng.normal();
    for (std::size_t a = 0; a < p; ++a) {
      double shift = 0.0;
      for (std::size_t b = 0; b < p; ++b) shift += params.shrink_coef(a, b) * centered[b];
      double noise = 0.0;
      for (std::size_t b = 0; b <= a; ++b) noise += params.cond_factor(a, b) * z[b];
      dst[a] = row[a] - shift + noise;
    }
  }
  return out;
}

double theoretical_self_corr(double rho) {
  validate_rho(rho);
  return std::max(0.0, 2.0 * rho - 1.0);
}

Matrix joint_sample_cov(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionMismatch("joint_sample_cov: row counts differ");
  const std::size_t n = a.rows();
  const std::size_t p = a.cols() + b.cols();
  if (n < 2) throw ValidationError("joint_sample_cov: need at least two rows");
  auto at = [&](std::size_t i, std::size_t j) { return j < a.cols() ? a(i, j) : b(i, j - a.cols()); };
  std::vector<double> mean(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) mean[j] += at(i, j);
  for (double& m : mean) m /= static_cast<double>(n);
  Matrix cov(p, p);
  std::vector<double> d(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) d[j] = at(i, j) - mean[j];
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = 0; k <= j; ++k) cov(j, k) += d[j] * d[k];
  }
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t k = 0; k <= j; ++k) {
      cov(j, k) /= static_cast<double>(n - 1);
      cov(k, j) = cov(j, k);
    }
  return cov;
}

KnockoffDiagnostics diagnostics(const Matrix& x, const Matrix& x_tilde, const KnockoffParams* params) {
  if (x.rows() != x_tilde.rows() || x.cols() != x_tilde.cols())
    throw DimensionMismatch("diagnostics: x and x_tilde shapes differ");
  const std::size_t p = x.cols();
  const Matrix cov = joint_sample_cov(x, x_tilde);
  auto corr = [&](std::size_t i, std::size_t j) {
    if (!(cov(i, i) > 0.0) || !(cov(j, j) > 0.0))
      throw ZeroVariance("diagnostics: constant column");
    return std::clamp(cov(i, j) / std::sqrt(cov(i, i) * cov(j, j)), -1.0, 1.0);
  };

  KnockoffDiagnostics out;
  out.per_feature_self_corr.resize(p);
  for (std::size_t j = 0; j < p; ++j) out.per_feature_self_corr[j] = corr(j, j + p);
  if (p >= 2) out.knockoff_pair_corr = corr(p, p + 1);
  if (params != nullptr) {
    if (params->p() != p) throw DimensionMismatch("diagnostics: params dimension differs");
    double worst = 0.0;
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j)
        worst = std::max(worst, std::abs(cov(i, j + p) - params->joint_cov(i, j + p)));
    out.cross_corr_error = worst;
  }
  return out;
}

}  // namespace vimp
