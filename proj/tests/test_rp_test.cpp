#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rpiv/linear_iv.hpp"
#include "rpiv/rp_test.hpp"
#include "support.hpp"

namespace {

using namespace rpiv;

/// Main-sample quantities for one random instance: a fit plus arbitrary
/// bounded weights.
struct MainSample {
  Vector y;
  Matrix x;
  Matrix z;
  TwoSlsFit fit;
  Vector w;
  Vector a;
};

MainSample random_main(std::mt19937_64& gen, Index n, Index p, Index d) {
  auto inst = oracle::random_instance(gen, n, p, d);
  inst.z.col(d - 1).setOnes();  // intercept in the instrument block, as after augmentation
  inst.x.col(p - 1).setOnes();
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MainSample m{inst.y, inst.x, inst.z, fit_tsls(inst.y, inst.x, inst.z), Vector(n), Vector()};
  m.w = Vector::NullaryExpr(n, [&](Index) { return u(gen); });
  m.a = correction_vector(m.w, m.x, m.fit.m_hat);
  return m;
}

MainSample random_main(std::mt19937_64& gen) {
  const Index p = std::uniform_int_distribution<Index>(1, 4)(gen);
  const Index d = p + std::uniform_int_distribution<Index>(0, 2)(gen);
  const Index n = std::uniform_int_distribution<Index>(20, 200)(gen);
  return random_main(gen, n, p, d);
}

TEST(Numerator, Examples) {
  std::mt19937_64 gen(1);
  const MainSample m = random_main(gen, 50, 2, 3);
  EXPECT_EQ(numerator(Vector::Zero(50), m.fit.residuals), 0.0);
  const double scale = m.y.norm() / std::sqrt(50.0);
  EXPECT_LE(std::abs(numerator(Vector::Constant(50, 0.7), m.fit.residuals)), 1e-10 * scale);
  const Vector r = Vector::LinSpaced(4, 1.0, 4.0);
  const Vector w = (Vector(4) << 1.0, -1.0, 0.5, 0.0).finished();
  EXPECT_DOUBLE_EQ(numerator(w, r), (1.0 - 2.0 + 1.5) / 2.0);
  EXPECT_THROW(numerator(w, Vector::Ones(3)), DataError);
}

TEST(Numerator, LinearWeightsVanishWhenJustIdentified) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 30; ++trial) {
    const Index p = std::uniform_int_distribution<Index>(1, 4)(gen);
    const MainSample m = random_main(gen, 60, p, p);
    const Vector coef = Vector::Random(p);
    const Vector w = m.z * coef;
    const double scale = w.norm() * m.y.norm() / std::sqrt(60.0);
    EXPECT_LE(std::abs(numerator(w, m.fit.residuals)), 1e-10 * scale);
  }
}

TEST(CorrectionVector, Examples) {
  std::mt19937_64 gen(3);
  const MainSample m = random_main(gen, 40, 2, 3);
  EXPECT_EQ(correction_vector(Vector::Zero(40), m.x, m.fit.m_hat), Vector::Zero(3));
  EXPECT_EQ(correction_vector(m.w, Matrix::Zero(40, 2), m.fit.m_hat), Vector::Zero(3));
  EXPECT_THROW(correction_vector(Vector::Zero(39), m.x, m.fit.m_hat), DataError);
}

TEST(CorrectionVector, MatchesNaiveLoop) {
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 50; ++trial) {
    const MainSample m = random_main(gen, 60, 3, 4);
    const Vector expected = oracle::correction_loop(m.w, m.x, m.fit.m_hat);
    EXPECT_LE((m.a - expected).norm(), 1e-12 * std::max(1.0, expected.norm()));
  }
}

TEST(Variance, DegenerateInputsGiveZero) {
  std::mt19937_64 gen(5);
  const MainSample m = random_main(gen, 40, 2, 3);
  const Vector zero_r = Vector::Zero(40);
  std::vector<std::int64_t> ids(40);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i % 5);
  EXPECT_EQ(variance_het(m.w, m.z, zero_r, m.a), 0.0);
  EXPECT_EQ(variance_hom(m.w, m.z, zero_r, m.a), 0.0);
  EXPECT_EQ(variance_cluster(m.w, m.z, zero_r, m.a, ids), 0.0);
  EXPECT_EQ(variance_het(Vector::Zero(40), m.z, m.fit.residuals, Vector::Zero(3)), 0.0);
}

TEST(Variance, HomReducesToMeanSquaredResidual) {
  std::mt19937_64 gen(6);
  const MainSample m = random_main(gen, 40, 2, 3);
  const double expected = m.fit.residuals.squaredNorm() / 40.0;
  EXPECT_NEAR(variance_hom(Vector::Ones(40), m.z, m.fit.residuals, Vector::Zero(3)), expected, 1e-15 * expected);
}

TEST(Variance, MatchesOracles) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 100; ++trial) {
    const MainSample m = random_main(gen);
    const Vector& r = m.fit.residuals;
    const double het = variance_het(m.w, m.z, r, m.a);
    const double het_oracle = oracle::variance_two_pass(m.w, m.z, r, m.a);
    EXPECT_NEAR(het, het_oracle, 1e-10 * het_oracle);

    const double hom = variance_hom(m.w, m.z, r, m.a);
    const double hom_oracle = oracle::variance_hom_loop(m.w, m.z, r, m.a);
    EXPECT_NEAR(hom, hom_oracle, 1e-12 * hom_oracle);

    std::vector<std::int64_t> singletons(static_cast<std::size_t>(r.size()));
    for (std::size_t i = 0; i < singletons.size(); ++i) singletons[i] = static_cast<std::int64_t>(1000 - i);
    EXPECT_NEAR(variance_cluster(m.w, m.z, r, m.a, singletons), het, 1e-10 * het);
  }
}

TEST(Variance, ClusterMatchesDoubleLoop) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 100; ++trial) {
    const MainSample m = random_main(gen, 50, 2, 3);
    std::vector<std::int64_t> ids(50);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i % 10) * 3 - 7;
    std::shuffle(ids.begin(), ids.end(), gen);
    const double got = variance_cluster(m.w, m.z, m.fit.residuals, m.a, ids);
    const double expected = oracle::variance_cluster_loop(m.w, m.z, m.fit.residuals, m.a, ids);
    EXPECT_NEAR(got, std::max(expected, 0.0), 1e-12 * std::abs(expected) + 1e-15);
  }
}

TEST(Variance, ClusterErrors) {
  std::mt19937_64 gen(9);
  const MainSample m = random_main(gen, 30, 1, 2);
  const std::vector<std::int64_t> one(30, 4);
  EXPECT_THROW(variance_cluster(m.w, m.z, m.fit.residuals, m.a, one), DataError);
  const std::vector<std::int64_t> short_ids(29, 1);
  EXPECT_THROW(variance_cluster(m.w, m.z, m.fit.residuals, m.a, short_ids), DataError);
}

TEST(Identity, NumeratorRewritesWithAnyReferenceCoefficient) {
  std::mt19937_64 gen(10);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    const MainSample m = random_main(gen);
    const double lhs = m.w.dot(m.fit.residuals);
    for (int b = 0; b < 5; ++b) {
      const Vector beta0 = Vector::NullaryExpr(m.x.cols(), [&](Index) { return 3.0 * normal(gen); });
      const Vector e = m.y - m.x * beta0;
      const Vector u = m.w + m.z * m.a;
      const double rhs = u.dot(e);
      const double scale = u.cwiseAbs().dot(e.cwiseAbs()) + m.w.cwiseAbs().dot(m.fit.residuals.cwiseAbs());
      EXPECT_LE(std::abs(lhs - rhs), 1e-9 * scale);
    }
  }
}

TEST(Identity, HetVarianceNeverNegative) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const MainSample m = random_main(gen);
    EXPECT_GE(variance_het(m.w, m.z, m.fit.residuals, m.a), 0.0);
  }
}

TEST(PValue, Shape) {
  EXPECT_EQ(p_value_of(0.0), 0.5);
  double prev = 1.0;
  for (double s = -8.0; s <= 8.0; s += 0.01) {
    const double p = p_value_of(s);
    // Below -5 neighbouring values round to the same double near 1.
    if (s > -5.0)
      EXPECT_LT(p, prev);
    else
      EXPECT_LE(p, prev);
    EXPECT_GE(p, 0.0);
    prev = p;
  }
  EXPECT_LT(p_value_of(40.0), 1e-300);
}

TEST(PValue, FloorMonotonicity) {
  // For N >= 0 a larger floor can only shrink the statistic.
  std::mt19937_64 gen(12);
  std::exponential_distribution<double> expo(1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double n_val = expo(gen);
    const double sigma = expo(gen);
    const double g1 = expo(gen);
    const double g2 = g1 + expo(gen);
    EXPECT_LE(p_value_of(floored_statistic(n_val, sigma, g1)), p_value_of(floored_statistic(n_val, sigma, g2)));
  }
  EXPECT_EQ(floored_statistic(2.0, 0.5, 4.0), 1.0);
  EXPECT_EQ(floored_statistic(2.0, 4.0, 1.0), 0.5);
}

TEST(Aggregate, DoubledMedian) {
  const std::vector<double> same{0.3, 0.3, 0.3};
  EXPECT_DOUBLE_EQ(doubled_median(same), 0.6);
  const std::vector<double> even{0.4, 0.1, 0.2, 0.3};
  EXPECT_DOUBLE_EQ(doubled_median(even), 0.5);
  const std::vector<double> big{0.7, 0.9};
  EXPECT_EQ(doubled_median(big), 1.0);
  const std::vector<double> single{0.02};
  EXPECT_EQ(doubled_median(single), 0.04);
  EXPECT_THROW(median({}), DataError);
}

TestConfig config_with(std::shared_ptr<const Regressor> regressor, std::uint64_t seed) {
  TestConfig cfg;
  cfg.seed = seed;
  cfg.regressor = std::move(regressor);
  return cfg;
}

TEST(RunTest, ZeroWeightGivesOneHalf) {
  const AugmentedDataset ds = support::simulated(sim::Violation::None, 0.0, 1, 200);
  const TestOutcome o = run_test(ds, config_with(std::make_shared<support::ZeroRegressor>(), 3));
  EXPECT_EQ(o.numerator, 0.0);
  EXPECT_EQ(o.statistic, 0.0);
  EXPECT_EQ(o.p_value, 0.5);
  EXPECT_EQ(o.n_a + o.n_0, 200);
  EXPECT_EQ(o.n_a, auxiliary_size(200));
}

TEST(RunTest, OutcomeFieldsAreConsistent) {
  const AugmentedDataset ds = support::simulated(sim::Violation::ZSquared, 0.5, 2, 300);
  TestConfig cfg;
  cfg.seed = 8;
  const VarianceKind kinds[] = {VarianceKind::Heteroskedastic, VarianceKind::Homoskedastic};
  const auto outs = run_test(ds, cfg, kinds);
  ASSERT_EQ(outs.size(), 2U);
  for (const auto& o : outs) {
    EXPECT_GT(o.gamma, 0.0);
    EXPECT_GE(o.sigma_hat, 0.0);
    EXPECT_EQ(o.statistic, o.numerator / std::max(o.sigma_hat, std::sqrt(o.gamma)));
    EXPECT_EQ(o.p_value, 0.5 * std::erfc(o.statistic / std::sqrt(2.0)));
    EXPECT_FALSE(o.degenerate);
  }
  EXPECT_EQ(outs[0].numerator, outs[1].numerator);
  EXPECT_EQ(outs[0].variance_kind, VarianceKind::Heteroskedastic);
  EXPECT_EQ(outs[1].variance_kind, VarianceKind::Homoskedastic);
}

TEST(RunTest, GammaIsFractionOfMeanSquaredResidual) {
  const AugmentedDataset ds = support::simulated(sim::Violation::None, 0.0, 3, 200);
  TestConfig cfg = config_with(std::make_shared<support::ZeroRegressor>(), 4);
  cfg.gamma_frac = 0.2;
  const TestOutcome o = run_test(ds, cfg);
  const SplitPlan plan = make_split(ds, derive_key({4, tag("split")}));
  const AugmentedDataset main = subset(ds, plan.main_indices);
  const Vector r = oracle::tsls_two_stage(main.y, main.x, main.z);
  const double mean_sq = (main.y - main.x * r).squaredNorm() / static_cast<double>(main.n());
  EXPECT_NEAR(o.gamma, 0.2 * mean_sq, 1e-10 * mean_sq);
}

TEST(RunTest, IsDeterministic) {
  const AugmentedDataset ds = support::simulated(sim::Violation::None, 0.0, 4, 250);
  TestConfig cfg;
  cfg.seed = 99;
  const TestOutcome a = run_test(ds, cfg);
  cfg.threads = 3;
  const TestOutcome b = run_test(ds, cfg);
  EXPECT_EQ(a.numerator, b.numerator);
  EXPECT_EQ(a.sigma_hat, b.sigma_hat);
  EXPECT_EQ(a.p_value, b.p_value);
}

TEST(RunTest, ClusterKindNeedsLabels) {
  const AugmentedDataset ds = support::simulated(sim::Violation::None, 0.0, 5, 100);
  TestConfig cfg = config_with(std::make_shared<support::ZeroRegressor>(), 1);
  cfg.variance = VarianceKind::ClusterRobust;
  try {
    run_test(ds, cfg);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("cluster column required"), std::string::npos);
  }
}

TEST(RunTest, ExactFitIsFlaggedDegenerate) {
  AugmentedDataset ds = support::simulated(sim::Violation::None, 0.0, 6, 100);
  ds.y = ds.x * Vector::LinSpaced(ds.p(), 1.0, 2.0);
  const TestOutcome o = run_test(ds, config_with(std::make_shared<support::ZeroRegressor>(), 2));
  EXPECT_TRUE(o.degenerate || o.gamma < 1e-20);
  EXPECT_TRUE(std::isfinite(o.statistic));
}

TEST(RunAggregated, SingleSplitDoublesP) {
  const AugmentedDataset ds = support::simulated(sim::Violation::None, 0.0, 7, 200);
  TestConfig cfg;
  cfg.seed = 5;
  const AggregateOutcome agg = run_aggregated(ds, cfg, 1);
  ASSERT_EQ(agg.per_split.size(), 1U);
  EXPECT_EQ(agg.aggregated_p, std::min(1.0, 2.0 * agg.per_split[0].p_value));
  EXPECT_EQ(agg.per_split[0].seed, split_seed(5, 0));
  EXPECT_THROW(run_aggregated(ds, cfg, 0), DataError);
}

TEST(RunAggregated, ThreadCountDoesNotChangeResult) {
  const AugmentedDataset ds = support::simulated(sim::Violation::ZSquared, 0.3, 8, 200);
  TestConfig cfg;
  cfg.seed = 11;
  cfg.threads = 1;
  const AggregateOutcome a = run_aggregated(ds, cfg, 6);
  cfg.threads = 4;
  const AggregateOutcome b = run_aggregated(ds, cfg, 6);
  EXPECT_EQ(a.aggregated_p, b.aggregated_p);
  for (std::size_t s = 0; s < 6; ++s) EXPECT_EQ(a.per_split[s].p_value, b.per_split[s].p_value);
  std::vector<double> p;
  for (const auto& o : a.per_split) p.push_back(o.p_value);
  EXPECT_EQ(a.aggregated_p, doubled_median(p));
}

TEST(VarianceKindNames, RoundTrip) {
  for (auto k : {VarianceKind::Heteroskedastic, VarianceKind::Homoskedastic, VarianceKind::ClusterRobust})
    EXPECT_EQ(parse_variance_kind(to_string(k)), k);
  EXPECT_THROW(parse_variance_kind("robust"), DataError);
}

}  // namespace
