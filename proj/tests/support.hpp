#pragma once

// Small learners and dataset builders shared by the unit tests.

#include <memory>

#include "rpiv/dataset.hpp"
#include "rpiv/simulation.hpp"
#include "rpiv/weight_learner.hpp"

namespace support {

using rpiv::Index;
using rpiv::Matrix;
using rpiv::Vector;

/// Predicts a fixed linear function of the features.
class LinearModel : public rpiv::RegressionModel {
 public:
  explicit LinearModel(Vector coef) : coef_(std::move(coef)) {}
  Vector predict(const Matrix& features) const override { return features * coef_; }

 private:
  Vector coef_;
};

class ZeroRegressor : public rpiv::Regressor {
 public:
  std::shared_ptr<const rpiv::RegressionModel> fit(const Matrix& features, const Vector&,
                                                   std::uint64_t) const override {
    return std::make_shared<LinearModel>(Vector::Zero(features.cols()));
  }
};

/// Ignores the targets and returns a preset linear model.
class FixedLinearRegressor : public rpiv::Regressor {
 public:
  explicit FixedLinearRegressor(Vector coef) : coef_(std::move(coef)) {}
  std::shared_ptr<const rpiv::RegressionModel> fit(const Matrix&, const Vector&, std::uint64_t) const override {
    return std::make_shared<LinearModel>(coef_);
  }

 private:
  Vector coef_;
};

inline rpiv::AugmentedDataset simulated(rpiv::sim::Violation violation, double t, std::uint64_t seed, Index n = 400,
                                        rpiv::sim::Setting setting = rpiv::sim::Setting::JustHom) {
  rpiv::sim::SimSpec spec;
  spec.setting = setting;
  spec.n = n;
  spec.violation = violation;
  spec.strength = t;
  spec.master_seed = seed;
  return rpiv::augment(rpiv::sim::generate(spec, 0));
}

}  // namespace support
