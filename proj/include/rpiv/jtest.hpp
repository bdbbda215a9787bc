#pragma once

// Sargan overidentification test and the squared-instrument augmentation
// used to make it applicable in just-identified models.

#include <boost/math/special_functions/gamma.hpp>

#include <string>

#include "rpiv/dataset.hpp"
#include "rpiv/error.hpp"
#include "rpiv/linear_iv.hpp"

namespace rpiv {

struct JTestOutcome {
  double statistic = 0.0;
  Index dof = 0;
  double p_value = 1.0;
  Index n = 0;
};

/// Upper tail of the chi-square distribution.
inline double chi_square_upper_tail(double statistic, Index dof) {
  if (dof < 1) throw DataError("chi-square needs at least one degree of freedom");
  if (!(statistic > 0.0)) return 1.0;
  return boost::math::gamma_q(0.5 * static_cast<double>(dof), 0.5 * statistic);
}

/// J = n * g^T E[ZZ^T]^{-1} g / E[R^2] with g = E[Z R], on the full sample.
inline JTestOutcome sargan(const AugmentedDataset& ds) {
  if (ds.d() <= ds.p()) throw RankError("just-identified: J-test undefined; augment instruments first");
  const TwoSlsFit fit = fit_tsls(ds);
  const double n = static_cast<double>(ds.n());
  const Vector g = ds.z.transpose() * fit.residuals / n;
  const Matrix szz = ds.z.transpose() * ds.z / n;
  const double mean_sq = fit.residuals.squaredNorm() / n;

  JTestOutcome out;
  out.dof = ds.d() - ds.p();
  out.n = ds.n();
  const double quad = g.dot(szz.colPivHouseholderQr().solve(g));
  out.statistic = mean_sq > 0.0 ? std::max(0.0, n * quad / mean_sq) : 0.0;
  out.p_value = chi_square_upper_tail(out.statistic, out.dof);
  return out;
}

/// Appends the elementwise square of instrument column `which` to z.
inline AugmentedDataset dieterle_augment(const AugmentedDataset& ds, Index which) {
  if (which < 0 || which >= ds.d()) throw DataError("instrument column index out of range");
  const Vector squared = ds.z.col(which).array().square();

  // Reject a square that lies in the span of the existing instruments
  // (intercept, binary columns, ...).
  const Vector coef = ds.z.colPivHouseholderQr().solve(squared);
  const double resid = (squared - ds.z * coef).norm();
  if (!(resid > 1e-10 * std::max(squared.norm(), 1.0))) throw RankError("augmentation adds collinear column");
  if (which >= ds.num_instruments) throw DataError("column '" + ds.z_names[static_cast<std::size_t>(which)] +
                                                   "' is not an excluded instrument");

  AugmentedDataset out = ds;
  out.z.conservativeResize(Eigen::NoChange, ds.d() + 1);
  out.z.col(ds.d()) = squared;
  out.z_names.push_back(ds.z_names[static_cast<std::size_t>(which)] + "^2");
  return out;
}

}  // namespace rpiv
