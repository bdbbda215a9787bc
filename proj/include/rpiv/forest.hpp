#pragma once

// Regression random forest: bootstrap-aggregated CART trees with
// axis-aligned splits chosen by variance reduction, random feature
// subsets per node, and hyperparameters selected by out-of-bag MSE.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <vector>

#include "rpiv/dataset.hpp"
#include "rpiv/error.hpp"
#include "rpiv/parallel.hpp"
#include "rpiv/rng.hpp"

namespace rpiv {

/// A fitted function from feature rows to real predictions.
class RegressionModel {
 public:
  virtual ~RegressionModel() = default;
  virtual Vector predict(const Matrix& features) const = 0;
};

struct ForestParams {
  int num_trees = 200;
  int min_leaf = 1;      // minimum bootstrap weight in each child
  int max_features = 0;  // features tried per split; 0 means all
  int max_depth = 0;     // 0 means unbounded
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  double predict_row(const Matrix& x, Index row) const {
    int k = 0;
    while (nodes_[static_cast<std::size_t>(k)].feature >= 0) {
      const auto& node = nodes_[static_cast<std::size_t>(k)];
      k = x(row, node.feature) <= node.threshold ? node.left : node.right;
    }
    return nodes_[static_cast<std::size_t>(k)].value;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t num_leaves() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& t) { return t.feature < 0; }));
  }

 private:
  std::vector<TreeNode> nodes_;
};

class ForestModel : public RegressionModel {
 public:
  ForestModel(std::vector<RegressionTree> trees, double offset, double oob_error, ForestParams params,
              std::uint64_t seed)
      : trees_(std::move(trees)), offset_(offset), oob_error_(oob_error), params_(params), seed_(seed) {}

  /// Equally weighted mean of the tree predictions.
  Vector predict(const Matrix& features) const override {
    Vector out(features.rows());
    const double inv_trees = 1.0 / static_cast<double>(trees_.size());
    for (Index i = 0; i < features.rows(); ++i) {
      double sum = 0.0;
      for (const auto& tree : trees_) sum += tree.predict_row(features, i);
      out(i) = offset_ + sum * inv_trees;
    }
    return out;
  }

  /// Mean squared out-of-bag error.
  double oob_error() const { return oob_error_; }
  const ForestParams& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<RegressionTree>& trees() const { return trees_; }

 private:
  std::vector<RegressionTree> trees_;
  double offset_;  // trees are fitted to targets minus this constant
  double oob_error_;
  ForestParams params_;
  std::uint64_t seed_;
};

namespace detail {

/// Grows one tree on a weighted (bootstrap-count) sample. Every feature keeps
/// its own array of in-bag rows sorted by that feature; a node owns the same
/// [begin, end) range in all of them, and splitting stable-partitions each
/// array so the ranges stay aligned.
class TreeGrower {
 public:
  TreeGrower(const Matrix& x, const std::vector<double>& y, const std::vector<std::vector<Index>>& presorted,
             const ForestParams& params)
      : x_(x), y_(y), presorted_(presorted), params_(params),
        p_(static_cast<int>(x.cols())),
        mtry_(params.max_features > 0 ? std::min(params.max_features, static_cast<int>(x.cols())) : static_cast<int>(x.cols())),
        sorted_(static_cast<std::size_t>(p_)),
        goes_left_(static_cast<std::size_t>(x.rows()), 0),
        pool_(static_cast<std::size_t>(p_)) {}

  RegressionTree grow(const std::vector<int>& weight, RandomStream& rng) {
    weight_.assign(weight.begin(), weight.end());
    weighted_y_.resize(weight.size());
    for (std::size_t i = 0; i < weight.size(); ++i) weighted_y_[i] = weight_[i] * y_[i];
    for (int f = 0; f < p_; ++f) {
      auto& col = sorted_[static_cast<std::size_t>(f)];
      col.clear();
      for (Index i : presorted_[static_cast<std::size_t>(f)])
        if (weight[static_cast<std::size_t>(i)] > 0) col.push_back(i);
    }
    std::iota(pool_.begin(), pool_.end(), 0);

    std::vector<TreeNode> nodes(1);
    struct Pending {
      int node;
      std::size_t begin, end;
      int depth;
    };
    std::vector<Pending> stack{{0, 0, sorted_.empty() ? 0 : sorted_[0].size(), 0}};
    while (!stack.empty()) {
      const Pending cur = stack.back();
      stack.pop_back();
      const auto split = try_split(cur.begin, cur.end, cur.depth, rng);
      if (!split.found) {
        nodes[static_cast<std::size_t>(cur.node)].value = split.leaf_value;
        continue;
      }
      const int left = static_cast<int>(nodes.size());
      nodes.emplace_back();
      nodes.emplace_back();
      auto& node = nodes[static_cast<std::size_t>(cur.node)];
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = left;
      node.right = left + 1;
      const std::size_t mid = cur.begin + split.left_count;
      stack.push_back({left + 1, mid, cur.end, cur.depth + 1});
      stack.push_back({left, cur.begin, mid, cur.depth + 1});
    }
    return RegressionTree(std::move(nodes));
  }

 private:
  struct Split {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    std::size_t left_count = 0;
    double leaf_value = 0.0;
  };

  Split try_split(std::size_t begin, std::size_t end, int depth, RandomStream& rng) {
    const double* w = weight_.data();
    const double* wy = weighted_y_.data();
    const double* y = y_.data();
    const Index* rows = sorted_[0].data();
    double total_w = 0.0, total_s = 0.0;
    double y_min = std::numeric_limits<double>::infinity(), y_max = -y_min;
    for (std::size_t k = begin; k < end; ++k) {
      const Index i = rows[k];
      total_w += w[i];
      total_s += wy[i];
      y_min = std::min(y_min, y[i]);
      y_max = std::max(y_max, y[i]);
    }
    Split best;
    best.leaf_value = y_min == y_max ? y_min : total_s / total_w;
    if (y_min == y_max) return best;
    if (total_w < 2.0 * params_.min_leaf) return best;
    if (params_.max_depth > 0 && depth >= params_.max_depth) return best;

    const double parent = total_s * total_s / total_w;
    double best_score = parent + 1e-12 * std::abs(parent) + 1e-300;
    const double min_leaf = params_.min_leaf;

    for (int t = 0; t < mtry_; ++t) {
      const auto pick = static_cast<std::size_t>(t) + static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(p_ - t)));
      std::swap(pool_[static_cast<std::size_t>(t)], pool_[pick]);
      const int f = pool_[static_cast<std::size_t>(t)];
      const Index* col = sorted_[static_cast<std::size_t>(f)].data();
      const double* xf = x_.col(f).data();
      double left_w = 0.0, left_s = 0.0;
      for (std::size_t k = begin; k + 1 < end; ++k) {
        const Index i = col[k];
        left_w += w[i];
        left_s += wy[i];
        const double here = xf[i];
        const double next = xf[col[k + 1]];
        if (!(here < next) || left_w < min_leaf) continue;
        const double right_w = total_w - left_w;
        if (right_w < min_leaf) break;
        const double right_s = total_s - left_s;
        const double score = left_s * left_s / left_w + right_s * right_s / right_w;
        if (score > best_score) {
          best_score = score;
          best.found = true;
          best.feature = f;
          double threshold = here + 0.5 * (next - here);
          if (!(threshold < next)) threshold = here;
          best.threshold = threshold;
          best.left_count = k + 1 - begin;
        }
      }
    }
    if (best.found) partition(begin, end, best);
    return best;
  }

  void partition(std::size_t begin, std::size_t end, const Split& split) {
    const auto& by_feature = sorted_[static_cast<std::size_t>(split.feature)];
    for (std::size_t k = begin; k < end; ++k)
      goes_left_[static_cast<std::size_t>(by_feature[k])] = k < begin + split.left_count ? 1 : 0;
    for (int f = 0; f < p_; ++f) {
      if (f == split.feature) continue;
      auto& col = sorted_[static_cast<std::size_t>(f)];
      scratch_.clear();
      std::size_t write = begin;
      for (std::size_t k = begin; k < end; ++k) {
        if (goes_left_[static_cast<std::size_t>(col[k])])
          col[write++] = col[k];
        else
          scratch_.push_back(col[k]);
      }
      std::copy(scratch_.begin(), scratch_.end(), col.begin() + static_cast<std::ptrdiff_t>(write));
    }
  }

  const Matrix& x_;
  const std::vector<double>& y_;
  const std::vector<std::vector<Index>>& presorted_;
  ForestParams params_;
  int p_;
  int mtry_;
  std::vector<double> weight_;
  std::vector<double> weighted_y_;
  std::vector<std::vector<Index>> sorted_;
  std::vector<char> goes_left_;
  std::vector<int> pool_;
  std::vector<Index> scratch_;
};

inline std::vector<std::vector<Index>> presort(const Matrix& x) {
  std::vector<std::vector<Index>> order(static_cast<std::size_t>(x.cols()));
  for (Index f = 0; f < x.cols(); ++f) {
    auto& o = order[static_cast<std::size_t>(f)];
    o.resize(static_cast<std::size_t>(x.rows()));
    std::iota(o.begin(), o.end(), Index{0});
    std::stable_sort(o.begin(), o.end(), [&](Index a, Index b) { return x(a, f) < x(b, f); });
  }
  return order;
}

inline void check_training_input(const Matrix& features, const Vector& targets) {
  if (features.rows() != targets.size()) throw DataError("forest: features and targets differ in length");
  if (features.cols() < 1) throw DataError("forest: at least one feature column required");
  if (targets.size() < 5) throw DataError("forest: at least 5 observations required");
  if (!features.allFinite() || !targets.allFinite()) throw DataError("forest: non-finite training data");
}

inline ForestModel train_forest_presorted(const Matrix& features, const Vector& targets,
                                          const std::vector<std::vector<Index>>& presorted, const ForestParams& params,
                                          std::uint64_t seed, unsigned threads) {
  if (params.num_trees < 1) throw DataError("forest: num_trees must be positive");
  if (params.min_leaf < 1) throw DataError("forest: min_leaf must be positive");
  const Index n = targets.size();
  const auto un = static_cast<std::size_t>(n);

  // Centering on the first target keeps constant responses exact.
  const double offset = targets(0);
  std::vector<double> centered(un);
  for (Index i = 0; i < n; ++i) centered[static_cast<std::size_t>(i)] = targets(i) - offset;

  const auto num_trees = static_cast<std::size_t>(params.num_trees);
  std::vector<RegressionTree> trees(num_trees);
  std::vector<std::vector<std::pair<Index, double>>> oob(num_trees);

  parallel_for(num_trees, threads, [&](std::size_t t) {
    RandomStream rng{seed, tag("forest-tree"), static_cast<std::uint64_t>(t)};
    std::vector<int> weight(un, 0);
    for (std::size_t k = 0; k < un; ++k) ++weight[static_cast<std::size_t>(rng.below(un))];
    TreeGrower grower(features, centered, presorted, params);
    trees[t] = grower.grow(weight, rng);
    for (Index i = 0; i < n; ++i)
      if (weight[static_cast<std::size_t>(i)] == 0) oob[t].emplace_back(i, trees[t].predict_row(features, i));
  });

  std::vector<double> oob_sum(un, 0.0);
  std::vector<int> oob_count(un, 0);
  for (const auto& per_tree : oob)
    for (const auto& [i, v] : per_tree) {
      oob_sum[static_cast<std::size_t>(i)] += v;
      ++oob_count[static_cast<std::size_t>(i)];
    }
  double sse = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < un; ++i) {
    if (oob_count[i] == 0) continue;
    const double err = oob_sum[i] / oob_count[i] - centered[i];
    sse += err * err;
    ++used;
  }
  const double oob_error = used ? sse / static_cast<double>(used) : std::numeric_limits<double>::infinity();
  return ForestModel(std::move(trees), offset, oob_error, params, seed);
}

}  // namespace detail

/// Trains a forest with fixed hyperparameters. Tree t draws its bootstrap
/// sample and feature subsets from the stream (seed, t), so the result does
/// not depend on `threads`.
inline ForestModel train_forest(const Matrix& features, const Vector& targets, const ForestParams& params,
                                std::uint64_t seed, unsigned threads = 1) {
  detail::check_training_input(features, targets);
  return detail::train_forest_presorted(features, targets, detail::presort(features), params, seed, threads);
}

/// Candidate grid: 200 trees, min_leaf in {1, 5, 10}, max_features in
/// {ceil(sqrt(d)), d}, unbounded depth.
inline std::vector<ForestParams> default_forest_grid(Index num_features) {
  const int d = static_cast<int>(num_features);
  const int sqrt_d = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
  std::vector<ForestParams> grid;
  for (int min_leaf : {1, 5, 10}) {
    grid.push_back({200, min_leaf, sqrt_d, 0});
    if (sqrt_d != d) grid.push_back({200, min_leaf, d, 0});
  }
  return grid;
}

/// Fits every grid candidate and keeps the one with the smallest OOB MSE.
/// Ties go to fewer trees, then shallower depth limit, then grid order.
inline ForestModel fit_forest(const Matrix& features, const Vector& targets, std::uint64_t seed,
                              const std::vector<ForestParams>& grid, unsigned threads = 1) {
  detail::check_training_input(features, targets);
  if (grid.empty()) throw DataError("forest: empty hyperparameter grid");
  const auto presorted = detail::presort(features);

  auto depth_key = [](int depth) { return depth > 0 ? depth : std::numeric_limits<int>::max(); };
  std::unique_ptr<ForestModel> best;
  for (const auto& params : grid) {
    auto candidate = std::make_unique<ForestModel>(
        detail::train_forest_presorted(features, targets, presorted, params, seed, threads));
    const bool better =
        !best || candidate->oob_error() < best->oob_error() ||
        (candidate->oob_error() == best->oob_error() &&
         (params.num_trees < best->params().num_trees ||
          (params.num_trees == best->params().num_trees && depth_key(params.max_depth) < depth_key(best->params().max_depth))));
    if (better) best = std::move(candidate);
  }
  return std::move(*best);
}

inline ForestModel fit_forest(const Matrix& features, const Vector& targets, std::uint64_t seed,
                              unsigned threads = 1) {
  return fit_forest(features, targets, seed, default_forest_grid(features.cols()), threads);
}

}  // namespace rpiv
