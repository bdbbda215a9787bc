#pragma once

// Dataset representation, exogenous-control augmentation and the
// auxiliary/main sample split.

#include <Eigen/Dense>

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rpiv/error.hpp"
#include "rpiv/rng.hpp"

namespace rpiv {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ClusterLabels = std::vector<std::int64_t>;

struct ColumnNames {
  std::string response;
  std::vector<std::string> endogenous;
  std::vector<std::string> instruments;
  std::vector<std::string> controls;
  std::string cluster;
};

/// Raw data: response y, endogenous regressors x (n x p), instruments
/// z (n x d), optional exogenous controls (n x q) and cluster labels.
struct Dataset {
  Vector y;
  Matrix x;
  Matrix z;
  std::optional<Matrix> controls;
  std::optional<ClusterLabels> cluster_ids;
  ColumnNames names;

  Index n() const { return y.size(); }
  Index p() const { return x.cols(); }
  Index d() const { return z.cols(); }
  Index q() const { return controls ? controls->cols() : 0; }
};

/// Data after controls and an intercept have been appended to both x and z.
/// The first `num_endogenous` columns of x and `num_instruments` columns of z
/// are the original (excluded) variables.
struct AugmentedDataset {
  Vector y;
  Matrix x;
  Matrix z;
  std::optional<ClusterLabels> cluster_ids;
  std::vector<std::string> x_names;
  std::vector<std::string> z_names;
  Index num_endogenous = 0;
  Index num_instruments = 0;

  Index n() const { return y.size(); }
  Index p() const { return x.cols(); }
  Index d() const { return z.cols(); }
};

inline constexpr const char* kInterceptName = "(intercept)";

namespace detail {

inline void require_finite(const Eigen::Ref<const Matrix>& m, const char* what) {
  if (!m.allFinite()) throw DataError(std::string("non-finite value in ") + what);
}

inline std::string column_name(const std::vector<std::string>& names, Index j, const char* fallback) {
  if (j < static_cast<Index>(names.size())) return names[static_cast<std::size_t>(j)];
  return std::string(fallback) + std::to_string(j);
}

}  // namespace detail

/// Checks dimensions, finiteness and cluster-label coverage.
inline void validate(const Dataset& ds) {
  const Index n = ds.n();
  if (n < 1) throw DataError("dataset is empty");
  if (ds.x.rows() != n || ds.z.rows() != n) throw DataError("x and z must have one row per observation");
  if (ds.controls && ds.controls->rows() != n) throw DataError("controls must have one row per observation");
  if (ds.cluster_ids && static_cast<Index>(ds.cluster_ids->size()) != n)
    throw DataError("every observation needs exactly one cluster label");
  detail::require_finite(ds.y, "response");
  detail::require_finite(ds.x, "endogenous regressors");
  detail::require_finite(ds.z, "instruments");
  if (ds.controls) detail::require_finite(*ds.controls, "controls");
}

/// Appends the controls and an all-ones column to both x and z, in that order.
inline AugmentedDataset augment(const Dataset& ds) {
  validate(ds);
  const Index n = ds.n();
  const Index q = ds.q();

  if (ds.controls) {
    for (Index j = 0; j < q; ++j) {
      const auto col = ds.controls->col(j);
      if ((col.array() == col(0)).all())
        throw DataError("control column '" + detail::column_name(ds.names.controls, j, "control") +
                        "' is constant (collinear with the intercept)");
    }
  }

  AugmentedDataset out;
  out.y = ds.y;
  out.cluster_ids = ds.cluster_ids;
  out.num_endogenous = ds.p();
  out.num_instruments = ds.d();

  out.x.resize(n, ds.p() + q + 1);
  out.z.resize(n, ds.d() + q + 1);
  out.x.leftCols(ds.p()) = ds.x;
  out.z.leftCols(ds.d()) = ds.z;
  if (q > 0) {
    out.x.middleCols(ds.p(), q) = *ds.controls;
    out.z.middleCols(ds.d(), q) = *ds.controls;
  }
  out.x.col(ds.p() + q).setOnes();
  out.z.col(ds.d() + q).setOnes();

  for (Index j = 0; j < ds.p(); ++j) out.x_names.push_back(detail::column_name(ds.names.endogenous, j, "x"));
  for (Index j = 0; j < ds.d(); ++j) out.z_names.push_back(detail::column_name(ds.names.instruments, j, "z"));
  for (Index j = 0; j < q; ++j) {
    const auto name = detail::column_name(ds.names.controls, j, "control");
    out.x_names.push_back(name);
    out.z_names.push_back(name);
  }
  out.x_names.emplace_back(kInterceptName);
  out.z_names.emplace_back(kInterceptName);
  return out;
}

/// Rows `rows` of the dataset, in the given order.
inline AugmentedDataset subset(const AugmentedDataset& ds, std::span<const Index> rows) {
  AugmentedDataset out;
  const auto m = static_cast<Index>(rows.size());
  out.y.resize(m);
  out.x.resize(m, ds.p());
  out.z.resize(m, ds.d());
  if (ds.cluster_ids) out.cluster_ids.emplace(rows.size());
  for (Index r = 0; r < m; ++r) {
    const Index i = rows[static_cast<std::size_t>(r)];
    out.y(r) = ds.y(i);
    out.x.row(r) = ds.x.row(i);
    out.z.row(r) = ds.z.row(i);
    if (ds.cluster_ids) (*out.cluster_ids)[static_cast<std::size_t>(r)] = (*ds.cluster_ids)[static_cast<std::size_t>(i)];
  }
  out.x_names = ds.x_names;
  out.z_names = ds.z_names;
  out.num_endogenous = ds.num_endogenous;
  out.num_instruments = ds.num_instruments;
  return out;
}

struct SplitPlan {
  std::vector<Index> aux_indices;   // sorted ascending
  std::vector<Index> main_indices;  // sorted ascending
  std::uint64_t seed = 0;

  Index n_aux() const { return static_cast<Index>(aux_indices.size()); }
  Index n_main() const { return static_cast<Index>(main_indices.size()); }
};

/// Target auxiliary size min(n/2, e*n/log n), rounded half-to-even.
inline Index auxiliary_size(Index n) {
  if (n < 2) throw DataError("sample too small to split");
  const double dn = static_cast<double>(n);
  const double target = std::min(dn / 2.0, std::numbers::e * dn / std::log(dn));
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double rounded = std::nearbyint(target);
  std::fesetround(saved);
  return static_cast<Index>(rounded);
}

/// Splits {0..n-1} into auxiliary and main samples. With cluster labels,
/// whole clusters (in seeded random order) go to the auxiliary sample until
/// its size first reaches the target.
inline SplitPlan make_split(Index n, Index p_aug, const std::optional<ClusterLabels>& cluster_ids,
                            std::uint64_t seed) {
  if (n < 2 * (p_aug + 1)) throw DataError("sample too small to split");
  const Index target = auxiliary_size(n);
  RandomStream rng{seed, tag("sample-split")};

  std::vector<char> in_aux(static_cast<std::size_t>(n), 0);
  if (!cluster_ids) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    shuffle(order, rng);
    for (Index k = 0; k < target; ++k) in_aux[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1;
  } else {
    if (static_cast<Index>(cluster_ids->size()) != n)
      throw DataError("every observation needs exactly one cluster label");
    // Clusters in first-appearance order, then shuffled.
    std::unordered_map<std::int64_t, std::size_t> slot;
    std::vector<std::vector<Index>> members;
    for (Index i = 0; i < n; ++i) {
      const auto [it, inserted] = slot.try_emplace((*cluster_ids)[static_cast<std::size_t>(i)], members.size());
      if (inserted) members.emplace_back();
      members[it->second].push_back(i);
    }
    std::vector<std::size_t> order(members.size());
    for (std::size_t g = 0; g < order.size(); ++g) order[g] = g;
    shuffle(order, rng);
    Index filled = 0;
    for (std::size_t g : order) {
      if (filled >= target) break;
      for (Index i : members[g]) in_aux[static_cast<std::size_t>(i)] = 1;
      filled += static_cast<Index>(members[g].size());
    }
  }

  SplitPlan plan;
  plan.seed = seed;
  for (Index i = 0; i < n; ++i) (in_aux[static_cast<std::size_t>(i)] ? plan.aux_indices : plan.main_indices).push_back(i);
  if (plan.n_aux() < p_aug + 1 || plan.n_main() < p_aug + 1) throw DataError("sample too small to split");
  return plan;
}

inline SplitPlan make_split(const AugmentedDataset& ds, std::uint64_t seed) {
  return make_split(ds.n(), ds.p(), ds.cluster_ids, seed);
}

/// Raw-dataset overload; p' is the dimension after augmentation.
inline SplitPlan make_split(const Dataset& ds, std::uint64_t seed) {
  return make_split(ds.n(), ds.p() + ds.q() + 1, ds.cluster_ids, seed);
}

}  // namespace rpiv
