#pragma once

// Machine-readable reports: JSON with a fixed key order and tidy CSV.

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "rpiv/jtest.hpp"
#include "rpiv/rp_test.hpp"
#include "rpiv/simulation.hpp"

#ifndef RPIV_VERSION_STRING
#define RPIV_VERSION_STRING "0.1.0"
#endif

namespace rpiv {

inline constexpr const char* kVersion = RPIV_VERSION_STRING;

using Json = nlohmann::ordered_json;

namespace detail {

/// Shortest decimal that round-trips; "nan" for NaN.
inline std::string format_shortest(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline Json nullable(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace detail

inline Json to_json(const TestOutcome& o, std::size_t index) {
  Json j;
  j["split"] = index;
  j["seed"] = o.seed;
  j["n_a"] = o.n_a;
  j["n_0"] = o.n_0;
  j["numerator"] = o.numerator;
  j["sigma_hat"] = o.sigma_hat;
  j["gamma"] = o.gamma;
  j["statistic"] = o.statistic;
  j["p_value"] = o.p_value;
  j["degenerate"] = o.degenerate;
  return j;
}

inline void write_test_csv(std::ostream& out, const AggregateOutcome& agg, VarianceKind kind) {
  out << "variance,split,seed,n_a,n_0,numerator,sigma_hat,gamma,statistic,p_value,degenerate\n";
  for (std::size_t s = 0; s < agg.per_split.size(); ++s) {
    const auto& o = agg.per_split[s];
    out << to_string(kind) << ',' << s << ',' << o.seed << ',' << o.n_a << ',' << o.n_0 << ','
        << detail::format_shortest(o.numerator) << ',' << detail::format_shortest(o.sigma_hat) << ','
        << detail::format_shortest(o.gamma) << ',' << detail::format_shortest(o.statistic) << ','
        << detail::format_shortest(o.p_value) << ',' << (o.degenerate ? "true" : "false") << '\n';
  }
  out << to_string(kind) << ",aggregate,,,,,,,," << detail::format_shortest(agg.aggregated_p) << ",\n";
}

inline Json to_json(const JTestOutcome& o) {
  Json j;
  j["statistic"] = o.statistic;
  j["dof"] = o.dof;
  j["p_value"] = o.p_value;
  j["n"] = o.n;
  return j;
}

inline void write_jtest_csv(std::ostream& out, const JTestOutcome& o) {
  out << "statistic,dof,p_value,n\n"
      << detail::format_shortest(o.statistic) << ',' << o.dof << ',' << detail::format_shortest(o.p_value) << ','
      << o.n << '\n';
}

namespace sim {

inline Json to_json(const SimSpec& spec) {
  Json j;
  j["setting"] = to_string(spec.setting);
  j["n"] = spec.n;
  j["violation"] = to_string(spec.violation);
  j["strength"] = spec.strength;
  j["cluster_strength"] = spec.cluster_strength;
  j["cluster_size"] = spec.cluster_size;
  j["reps"] = spec.reps;
  j["alpha"] = spec.alpha;
  j["seed"] = spec.master_seed;
  j["clip_quantile"] = spec.clip_quantile;
  j["gamma_frac"] = spec.gamma_frac;
  return j;
}

inline Json to_json(const MethodResult& r) {
  Json j;
  j["method"] = to_string(r.method);
  j["rate"] = r.rate;
  j["se"] = r.se;
  j["rejections"] = r.rejections;
  j["successes"] = r.successes;
  j["failures"] = r.failures;
  return j;
}

inline Json to_json(const RejectionReport& report) {
  Json j;
  j["strength"] = report.spec.strength;
  Json methods = Json::array();
  for (const auto& r : report.results) methods.push_back(to_json(r));
  j["methods"] = std::move(methods);
  return j;
}

/// Tidy CSV: one row per (strength, method).
inline void write_reports_csv(std::ostream& out, const std::vector<RejectionReport>& reports) {
  out << "setting,n,violation,strength,s,method,rate,se,reps,failures\n";
  for (const auto& rep : reports)
    for (const auto& r : rep.results)
      out << to_string(rep.spec.setting) << ',' << rep.spec.n << ',' << to_string(rep.spec.violation) << ','
          << rpiv::detail::format_shortest(rep.spec.strength) << ','
          << rpiv::detail::format_shortest(rep.spec.cluster_strength) << ',' << to_string(r.method) << ','
          << rpiv::detail::format_shortest(r.rate) << ',' << rpiv::detail::format_shortest(r.se) << ','
          << rep.spec.reps << ',' << r.failures << '\n';
}

}  // namespace sim

}  // namespace rpiv
