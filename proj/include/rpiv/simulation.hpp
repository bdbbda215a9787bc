#pragma once

// Monte-Carlo harness: the four simulation DGPs (just-/over-identified,
// homo-/heteroskedastic), the four violation terms, clustered noise, and
// rejection-rate experiments.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rpiv/dataset.hpp"
#include "rpiv/error.hpp"
#include "rpiv/jtest.hpp"
#include "rpiv/normal.hpp"
#include "rpiv/parallel.hpp"
#include "rpiv/rng.hpp"
#include "rpiv/rp_test.hpp"

namespace rpiv::sim {

enum class Setting { JustHom, JustHet, OverHom, OverHet };
enum class Violation { None, ZSquared, SignZ, MisspecSquared, MisspecSign };
enum class Method { RPHet, RPHom, RPCluster, OveridJ };

inline std::string_view to_string(Setting s) {
  switch (s) {
    case Setting::JustHom: return "just-hom";
    case Setting::JustHet: return "just-het";
    case Setting::OverHom: return "over-hom";
    case Setting::OverHet: return "over-het";
  }
  return "?";
}

inline std::string_view to_string(Violation v) {
  switch (v) {
    case Violation::None: return "none";
    case Violation::ZSquared: return "z-squared";
    case Violation::SignZ: return "sign-z";
    case Violation::MisspecSquared: return "misspec-squared";
    case Violation::MisspecSign: return "misspec-sign";
  }
  return "?";
}

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::RPHet: return "rp-het";
    case Method::RPHom: return "rp-hom";
    case Method::RPCluster: return "rp-cluster";
    case Method::OveridJ: return "overid-j";
  }
  return "?";
}

inline Setting parse_setting(std::string_view s) {
  for (auto v : {Setting::JustHom, Setting::JustHet, Setting::OverHom, Setting::OverHet})
    if (s == to_string(v)) return v;
  throw DataError("unknown setting '" + std::string(s) + "'");
}

inline Violation parse_violation(std::string_view s) {
  for (auto v : {Violation::None, Violation::ZSquared, Violation::SignZ, Violation::MisspecSquared,
                 Violation::MisspecSign})
    if (s == to_string(v)) return v;
  throw DataError("unknown violation '" + std::string(s) + "'");
}

inline Method parse_method(std::string_view s) {
  if (s == "het") return Method::RPHet;
  if (s == "hom") return Method::RPHom;
  if (s == "cluster") return Method::RPCluster;
  if (s == "j") return Method::OveridJ;
  for (auto v : {Method::RPHet, Method::RPHom, Method::RPCluster, Method::OveridJ})
    if (s == to_string(v)) return v;
  throw DataError("unknown method '" + std::string(s) + "'");
}

inline bool is_overidentified(Setting s) { return s == Setting::OverHom || s == Setting::OverHet; }
inline bool is_heteroskedastic(Setting s) { return s == Setting::JustHet || s == Setting::OverHet; }

struct SimSpec {
  Setting setting = Setting::JustHom;
  Index n = 400;
  Violation violation = Violation::None;
  double strength = 0.0;          // t
  double cluster_strength = 0.0;  // s in [0, 1]
  Index cluster_size = 0;         // 0 disables clusters
  int reps = 1000;
  double alpha = 0.05;
  std::uint64_t master_seed = 0;
  double clip_quantile = 0.9;
  double gamma_frac = 0.05;
};

inline void validate(const SimSpec& spec) {
  if (spec.n < 2) throw DataError("sample size must be at least 2");
  if (spec.reps < 1) throw DataError("reps must be at least 1");
  if (!(spec.strength >= 0.0) || !std::isfinite(spec.strength)) throw DataError("violation strength must be >= 0");
  if (!(spec.cluster_strength >= 0.0 && spec.cluster_strength <= 1.0))
    throw DataError("cluster strength must lie in [0, 1]");
  if (spec.cluster_size < 0) throw DataError("cluster size must be >= 0");
  if (spec.cluster_strength > 0.0 && spec.cluster_size == 0)
    throw DataError("cluster strength > 0 requires a cluster size");
  if (spec.cluster_size > 0 && spec.n % spec.cluster_size != 0)
    throw DataError("n must be divisible by the cluster size");
  if (!(spec.alpha > 0.0 && spec.alpha < 1.0)) throw DataError("alpha must lie in (0, 1)");
}

/// N(0,1) draws for one DGP variable. Observation i gets the idiosyncratic
/// draw S_i, or s * R_{g(i)} + (1 - s) * S_i when clusters are enabled.
class NoiseSource {
 public:
  NoiseSource(const SimSpec& spec, std::uint64_t rep, std::string_view variable)
      : idio_{spec.master_seed, rep, tag(variable), tag("idiosyncratic")},
        shared_{spec.master_seed, rep, tag(variable), tag("shared")},
        s_(spec.cluster_strength),
        cluster_size_(spec.cluster_size) {}

  double operator()(Index i) const {
    const double own = draw(idio_, static_cast<std::uint64_t>(i));
    if (cluster_size_ == 0) return own;
    const double common = draw(shared_, static_cast<std::uint64_t>(i / cluster_size_));
    return s_ * common + (1.0 - s_) * own;
  }

 private:
  static double draw(const RandomStream& stream, std::uint64_t index) {
    return normal_quantile(RandomStream::to_open_unit(stream.at(index)));
  }

  RandomStream idio_;
  RandomStream shared_;
  double s_;
  Index cluster_size_;
};

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// One simulated dataset. C1 and C2 are returned as exogenous controls.
inline Dataset generate(const SimSpec& spec, std::uint64_t rep) {
  validate(spec);
  const Index n = spec.n;
  const NoiseSource c1_src(spec, rep, "C1"), c2_src(spec, rep, "C2"), h_src(spec, rep, "H"),
      delta_src(spec, rep, "delta"), eta_src(spec, rep, "eta"), z_src(spec, rep, "Z"), z2_src(spec, rep, "Z2");
  const bool over = is_overidentified(spec.setting);
  const bool het = is_heteroskedastic(spec.setting);
  const double t = spec.strength;

  Dataset ds;
  ds.y.resize(n);
  ds.x.resize(n, 1);
  ds.z.resize(n, over ? 2 : 1);
  ds.controls = Matrix(n, 2);
  for (Index i = 0; i < n; ++i) {
    const double c1 = c1_src(i);
    const double c2 = c2_src(i);
    const double h = h_src(i);
    const double delta = sign(h) + 0.5 * delta_src(i);
    const double eta = h + 0.5 * eta_src(i);
    const double z1 = 0.5 * c1 - 0.5 * c2 + z_src(i);
    const double z2 = over ? z2_src(i) : 0.0;
    const double x = over ? z1 - 0.5 * z2 - 0.5 * c1 + delta : z1 - 0.5 * c1 + delta;
    const double noise = het ? eta * z1 * z1 : eta;
    double y = 2.0 - x - 0.5 * c1 + c2 + noise;

    const double structural = -x - 0.5 * c1 + c2;
    switch (spec.violation) {
      case Violation::None: break;
      case Violation::ZSquared: y += t * z1 * z1; break;
      case Violation::SignZ: y += t * sign(z1); break;
      case Violation::MisspecSquared: y += t * structural * structural; break;
      case Violation::MisspecSign: y += t * sign(structural); break;
    }

    ds.y(i) = y;
    ds.x(i, 0) = x;
    ds.z(i, 0) = z1;
    if (over) ds.z(i, 1) = z2;
    (*ds.controls)(i, 0) = c1;
    (*ds.controls)(i, 1) = c2;
  }
  if (spec.cluster_size > 0) {
    ClusterLabels ids(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i / spec.cluster_size;
    ds.cluster_ids = std::move(ids);
  }
  ds.names.response = "Y";
  ds.names.endogenous = {"X"};
  ds.names.instruments = over ? std::vector<std::string>{"Z1", "Z2"} : std::vector<std::string>{"Z"};
  ds.names.controls = {"C1", "C2"};
  if (spec.cluster_size > 0) ds.names.cluster = "cluster";
  return ds;
}

struct MethodResult {
  Method method = Method::RPHet;
  int rejections = 0;
  int successes = 0;
  int failures = 0;
  double rate = 0.0;  // over successful replications
  double se = 0.0;    // sqrt(rate (1 - rate) / reps)
  std::vector<double> p_values;  // per replication, NaN on failure
};

struct RejectionReport {
  SimSpec spec;
  std::vector<MethodResult> results;

  const MethodResult& result(Method m) const {
    for (const auto& r : results)
      if (r.method == m) return r;
    throw DataError("method '" + std::string(to_string(m)) + "' not in report");
  }
};

/// Seed of the residual prediction test in replication `rep`.
inline std::uint64_t replication_seed(std::uint64_t master, std::uint64_t rep) {
  return derive_key({master, rep, tag("rp-test")});
}

/// Simulates spec.reps datasets and records each method's p-value and
/// rejection at spec.alpha. The RP methods of one replication share a split
/// and weight function. Estimation failures are counted per method and
/// excluded from the rate.
inline RejectionReport rejection_experiment(const SimSpec& spec, std::span<const Method> methods,
                                            unsigned threads = 1) {
  validate(spec);
  if (methods.empty()) throw DataError("no methods requested");
  std::vector<VarianceKind> kinds;
  bool want_j = false;
  for (auto m : methods) {
    switch (m) {
      case Method::RPHet: kinds.push_back(VarianceKind::Heteroskedastic); break;
      case Method::RPHom: kinds.push_back(VarianceKind::Homoskedastic); break;
      case Method::RPCluster:
        if (spec.cluster_size == 0) throw DataError("rp-cluster requires a cluster size");
        kinds.push_back(VarianceKind::ClusterRobust);
        break;
      case Method::OveridJ: want_j = true; break;
    }
  }

  const auto reps = static_cast<std::size_t>(spec.reps);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  // p[rep][k]: k indexes `methods`
  std::vector<std::vector<double>> p(reps, std::vector<double>(methods.size(), nan));
  const auto forest = std::make_shared<ForestRegressor>(1);

  parallel_for(reps, threads, [&](std::size_t r) {
    const AugmentedDataset ds = augment(generate(spec, r));
    std::vector<double> rp(kinds.size(), nan);
    if (!kinds.empty()) {
      TestConfig cfg;
      cfg.clip_quantile = spec.clip_quantile;
      cfg.gamma_frac = spec.gamma_frac;
      cfg.seed = replication_seed(spec.master_seed, r);
      cfg.regressor = forest;
      try {
        const auto outcomes = run_test(ds, cfg, kinds);
        for (std::size_t k = 0; k < outcomes.size(); ++k) rp[k] = outcomes[k].p_value;
      } catch (const DataError&) {
      } catch (const RankError&) {
      }
    }
    double j = nan;
    if (want_j) {
      try {
        j = is_overidentified(spec.setting) ? sargan(ds).p_value : sargan(dieterle_augment(ds, 0)).p_value;
      } catch (const DataError&) {
      } catch (const RankError&) {
      }
    }
    std::size_t next_rp = 0;
    for (std::size_t k = 0; k < methods.size(); ++k) p[r][k] = methods[k] == Method::OveridJ ? j : rp[next_rp++];
  });

  RejectionReport report;
  report.spec = spec;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    MethodResult res;
    res.method = methods[k];
    for (std::size_t r = 0; r < reps; ++r) {
      const double pv = p[r][k];
      res.p_values.push_back(pv);
      if (std::isnan(pv)) {
        ++res.failures;
        continue;
      }
      ++res.successes;
      if (pv <= spec.alpha) ++res.rejections;
    }
    res.rate = res.successes ? static_cast<double>(res.rejections) / res.successes : 0.0;
    res.se = std::sqrt(res.rate * (1.0 - res.rate) / spec.reps);
    report.results.push_back(std::move(res));
  }
  return report;
}

/// One rejection experiment per strength. Every point reuses the template's
/// master seed, so the curve is built from common random numbers and the
/// t = 0 point reproduces the size experiment exactly.
inline std::vector<RejectionReport> power_curve(const SimSpec& tmpl, std::span<const double> strengths,
                                                std::span<const Method> methods, unsigned threads = 1) {
  std::vector<RejectionReport> out;
  for (double t : strengths) {
    SimSpec spec = tmpl;
    spec.strength = t;
    out.push_back(rejection_experiment(spec, methods, threads));
  }
  return out;
}

}  // namespace rpiv::sim
