#pragma once

// Two-stage least squares and ordinary least squares.

#include <Eigen/Dense>

#include "rpiv/dataset.hpp"
#include "rpiv/error.hpp"

namespace rpiv {

/// Relative singular-value cutoff below which a moment matrix is treated as
/// singular.
inline constexpr double kSingularTolerance = 1e-12;

/// 2SLS fit on one sample. `m_hat` is the p' x d' matrix with
/// beta_hat = m_hat * E_n[Z Y], and m_hat * E_n[Z X^T] = I.
struct TwoSlsFit {
  Vector beta_hat;
  Matrix m_hat;
  Vector residuals;
  Index sample_size = 0;
};

namespace detail {

/// True when sigma_min <= tol * scale (or the scale itself is zero).
inline bool nearly_singular(const Matrix& a, double scale) {
  const Eigen::JacobiSVD<Matrix> svd(a);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return true;
  return !(scale > 0.0) || sv(sv.size() - 1) <= kSingularTolerance * scale;
}

inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(a).singularValues()(0);
}

}  // namespace detail

inline TwoSlsFit fit_tsls(const Vector& y, const Matrix& x, const Matrix& z) {
  const Index n = y.size();
  if (x.rows() != n || z.rows() != n) throw DataError("fit_tsls: row counts of y, x, z differ");
  if (x.cols() < 1) throw DataError("fit_tsls: no regressors");
  if (z.cols() < x.cols()) throw RankError("fewer instruments than regressors (d' < p')");
  if (n <= z.cols()) throw RankError("sample size must exceed the number of instruments");

  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix szz = (z.transpose() * z) * inv_n;
  const Matrix szx = (z.transpose() * x) * inv_n;
  const Vector szy = (z.transpose() * y) * inv_n;

  if (detail::nearly_singular(szz, detail::spectral_norm(szz))) throw RankError("instrument Gram matrix singular");

  // b = E[ZZ^T]^{-1} E[ZX^T]; the projected Gram matrix is E[XZ^T] b.
  const Matrix b = szz.colPivHouseholderQr().solve(szx);
  const Matrix g = szx.transpose() * b;
  if (detail::nearly_singular(g, detail::spectral_norm(szx) * detail::spectral_norm(b)))
    throw RankError("rank condition failed (instruments irrelevant?)");

  TwoSlsFit fit;
  fit.m_hat = g.colPivHouseholderQr().solve(b.transpose());
  fit.beta_hat = fit.m_hat * szy;
  fit.residuals = y - x * fit.beta_hat;
  fit.sample_size = n;
  return fit;
}

inline TwoSlsFit fit_tsls(const AugmentedDataset& ds) { return fit_tsls(ds.y, ds.x, ds.z); }

/// Least-squares coefficients of y on the columns of x.
inline Vector fit_ols(const Vector& y, const Matrix& x) {
  if (x.rows() != y.size()) throw DataError("fit_ols: row counts differ");
  if (x.rows() <= x.cols()) throw RankError("fit_ols: need more observations than columns");
  const Eigen::JacobiSVD<Matrix> svd(x);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(sv.size() - 1) <= kSingularTolerance * sv(0)) throw RankError("singular Gram matrix");
  return x.colPivHouseholderQr().solve(y);
}

}  // namespace rpiv
