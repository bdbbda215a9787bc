#pragma once

// Learning the weight function on the auxiliary sample: 2SLS residuals,
// a nonlinear regression of those residuals on the instruments, and
// clipping of the fitted function to [-1, 1].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "rpiv/dataset.hpp"
#include "rpiv/error.hpp"
#include "rpiv/forest.hpp"
#include "rpiv/linear_iv.hpp"
#include "rpiv/rng.hpp"

namespace rpiv {

/// A learning method: fits a RegressionModel from features and targets.
/// Implementations must be deterministic given the seed.
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual std::shared_ptr<const RegressionModel> fit(const Matrix& features, const Vector& targets,
                                                     std::uint64_t seed) const = 0;
};

/// Random forest with OOB-tuned hyperparameters.
class ForestRegressor : public Regressor {
 public:
  explicit ForestRegressor(unsigned threads = 1, std::vector<ForestParams> grid = {})
      : threads_(threads), grid_(std::move(grid)) {}

  std::shared_ptr<const RegressionModel> fit(const Matrix& features, const Vector& targets,
                                             std::uint64_t seed) const override {
    const auto& grid = grid_.empty() ? default_forest_grid(features.cols()) : grid_;
    return std::make_shared<ForestModel>(fit_forest(features, targets, seed, grid, threads_));
  }

 private:
  unsigned threads_;
  std::vector<ForestParams> grid_;
};

/// Linear-interpolation quantile between order statistics ("type 7").
inline double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DataError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Clipping threshold K: the q-quantile of |predictions|, falling back to
/// max |prediction| when that quantile is zero. Returns 0 only when every
/// prediction is zero.
inline double clip_threshold(const Vector& in_sample_predictions, double clip_quantile) {
  if (!(clip_quantile > 0.0 && clip_quantile < 1.0)) throw DataError("clip quantile must lie in (0, 1)");
  std::vector<double> magnitude(static_cast<std::size_t>(in_sample_predictions.size()));
  for (Index i = 0; i < in_sample_predictions.size(); ++i)
    magnitude[static_cast<std::size_t>(i)] = std::abs(in_sample_predictions(i));
  const double k = empirical_quantile(magnitude, clip_quantile);
  if (k > 0.0) return k;
  return in_sample_predictions.size() ? in_sample_predictions.cwiseAbs().maxCoeff() : 0.0;
}

/// w(z) = sign(w0(z)) * min(|w0(z)|, K) / K, identically zero when K = 0.
class WeightFunction {
 public:
  WeightFunction(std::shared_ptr<const RegressionModel> base, double clip_k)
      : base_(std::move(base)), clip_k_(clip_k) {
    if (!(clip_k_ >= 0.0) || !std::isfinite(clip_k_)) throw DataError("clip threshold must be finite and >= 0");
  }

  static double clip(double raw, double k) {
    if (!(k > 0.0)) return 0.0;
    const double magnitude = std::min(std::abs(raw), k) / k;
    return raw > 0.0 ? magnitude : (raw < 0.0 ? -magnitude : 0.0);
  }

  Vector evaluate(const Matrix& z) const {
    if (is_zero()) return Vector::Zero(z.rows());
    return raw(z).unaryExpr([k = clip_k_](double v) { return clip(v, k); });
  }

  /// Unclipped base predictions w0(z).
  Vector raw(const Matrix& z) const { return base_->predict(z); }

  double clip_k() const { return clip_k_; }
  bool is_zero() const { return !(clip_k_ > 0.0); }
  const RegressionModel& base() const { return *base_; }

 private:
  std::shared_ptr<const RegressionModel> base_;
  double clip_k_;
};

/// Regresses the auxiliary-sample 2SLS residuals on the full augmented
/// instrument matrix and clips the fit at the `clip_quantile` quantile of
/// its absolute in-sample predictions.
inline WeightFunction learn_weight(const AugmentedDataset& aux, const Regressor& regressor, double clip_quantile,
                                   std::uint64_t seed) {
  const TwoSlsFit fit = fit_tsls(aux);
  auto model = regressor.fit(aux.z, fit.residuals, seed);
  const Vector in_sample = model->predict(aux.z);
  if (!in_sample.allFinite()) throw RankError("weight learner produced non-finite predictions");
  return WeightFunction(std::move(model), clip_threshold(in_sample, clip_quantile));
}

}  // namespace rpiv
