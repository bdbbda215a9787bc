#pragma once

// Test-only reference computations. Each one takes a different numerical
// route from the library code it checks (explicit stages, SVD
// pseudo-inverses, plain loops) and must not call into the library.

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <random>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix pinv(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector inv_s = svd.singularValues();
  for (Eigen::Index i = 0; i < inv_s.size(); ++i) inv_s(i) = inv_s(i) > 1e-14 * inv_s(0) ? 1.0 / inv_s(i) : 0.0;
  return svd.matrixV() * inv_s.asDiagonal() * svd.matrixU().transpose();
}

/// OLS coefficients via an explicit pseudo-inverse.
inline Vector ols_pinv(const Vector& y, const Matrix& x) { return pinv(x) * y; }

/// 2SLS done literally in two stages: project each column of X on the column
/// space of Z, then regress Y on the fitted values.
inline Vector tsls_two_stage(const Vector& y, const Matrix& x, const Matrix& z) {
  Matrix x_fitted(x.rows(), x.cols());
  const Matrix pz = pinv(z);
  for (Eigen::Index j = 0; j < x.cols(); ++j) x_fitted.col(j) = z * (pz * x.col(j));
  const Matrix gram = x_fitted.transpose() * x_fitted;
  return gram.ldlt().solve(x_fitted.transpose() * y);
}

/// A_w by explicit loops: A^T = -(1/n sum_i w_i X_i^T) M.
inline Vector correction_loop(const Vector& w, const Matrix& x, const Matrix& m) {
  const auto n = x.rows();
  std::vector<double> mean_wx(static_cast<std::size_t>(x.cols()), 0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) mean_wx[static_cast<std::size_t>(j)] += w(i) * x(i, j);
  for (auto& v : mean_wx) v /= static_cast<double>(n);
  Vector a(m.cols());
  for (Eigen::Index k = 0; k < m.cols(); ++k) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < m.rows(); ++j) s += mean_wx[static_cast<std::size_t>(j)] * m(j, k);
    a(k) = -s;
  }
  return a;
}

inline std::vector<double> scores_loop(const Vector& w, const Matrix& z, const Vector& r, const Vector& a) {
  std::vector<double> u(static_cast<std::size_t>(w.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    double az = 0.0;
    for (Eigen::Index k = 0; k < z.cols(); ++k) az += a(k) * z(i, k);
    u[static_cast<std::size_t>(i)] = (w(i) + az) * r(i);
  }
  return u;
}

/// Two-pass empirical variance (1/n normalization) of u_i = (w_i + a^T z_i) R_i.
inline double variance_two_pass(const Vector& w, const Matrix& z, const Vector& r, const Vector& a) {
  const auto u = scores_loop(w, z, r, a);
  double mean = 0.0;
  for (double v : u) mean += v;
  mean /= static_cast<double>(u.size());
  double ss = 0.0;
  for (double v : u) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(u.size());
}

inline double variance_hom_loop(const Vector& w, const Matrix& z, const Vector& r, const Vector& a) {
  const auto n = static_cast<double>(w.size());
  double s1 = 0.0, s2 = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    double az = 0.0;
    for (Eigen::Index k = 0; k < z.cols(); ++k) az += a(k) * z(i, k);
    s1 += (w(i) + az) * (w(i) + az);
    s2 += r(i) * r(i);
  }
  return (s1 / n) * (s2 / n);
}

/// Cluster variance by a double loop over clusters and their members.
inline double variance_cluster_loop(const Vector& w, const Matrix& z, const Vector& r, const Vector& a,
                                    const std::vector<std::int64_t>& ids) {
  const auto u = scores_loop(w, z, r, a);
  std::map<std::int64_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < ids.size(); ++i) members[ids[i]].push_back(i);
  const auto n = static_cast<double>(w.size());
  double sum_sq = 0.0, total_wr = 0.0;
  for (const auto& [g, idx] : members) {
    double s = 0.0;
    for (auto i : idx) {
      s += u[i];
      total_wr += w(static_cast<Eigen::Index>(i)) * r(static_cast<Eigen::Index>(i));
    }
    sum_sq += s * s;
  }
  const double groups = static_cast<double>(members.size());
  const double mean_wr = total_wr / n;
  return sum_sq / n - n / groups * mean_wr * mean_wr;
}

/// Random design with correlated regressors and instruments.
struct Instance {
  Vector y;
  Matrix x;
  Matrix z;
};

inline Instance random_instance(std::mt19937_64& gen, Eigen::Index n, Eigen::Index p, Eigen::Index d) {
  std::normal_distribution<double> normal;
  Instance inst;
  inst.z.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < d; ++k) inst.z(i, k) = normal(gen);
  Matrix pi(d, p);
  for (Eigen::Index k = 0; k < d; ++k)
    for (Eigen::Index j = 0; j < p; ++j) pi(k, j) = normal(gen) + (k == j ? 2.0 : 0.0);
  inst.x = inst.z * pi;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) inst.x(i, j) += normal(gen);
  inst.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = normal(gen);
    for (Eigen::Index j = 0; j < p; ++j) v += (j + 1) * 0.5 * inst.x(i, j);
    inst.y(i) = v;
  }
  return inst;
}

}  // namespace oracle
