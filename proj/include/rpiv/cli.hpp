#pragma once

// Command-line front end: `test`, `jtest` and `simulate` subcommands.
//
// Exit codes: 0 success, 2 data or usage error, 3 rank/identification
// error, 1 anything unexpected. Diagnostics go to the error stream; reports
// go to --out when given, otherwise to the output stream.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rpiv/csv.hpp"
#include "rpiv/dataset.hpp"
#include "rpiv/error.hpp"
#include "rpiv/jtest.hpp"
#include "rpiv/parallel.hpp"
#include "rpiv/report.hpp"
#include "rpiv/rp_test.hpp"
#include "rpiv/simulation.hpp"

namespace rpiv::cli {

enum ExitCode : int { kOk = 0, kUnexpected = 1, kDataError = 2, kRankError = 3 };

struct RunConfig {
  std::string subcommand;
  std::string data_path;
  std::string response;
  std::vector<std::string> endogenous;
  std::vector<std::string> instruments;
  std::vector<std::string> controls;
  std::string cluster_col;
  std::string variance = "het";
  int splits = 50;
  double clip_quantile = 0.9;
  double gamma_frac = 0.05;
  std::uint64_t seed = 0;
  std::string out_path;
  std::string format = "json";
  unsigned threads = 0;  // 0: RPIV_THREADS, else hardware count
  std::string augment_square;

  // simulate
  std::string setting = "just-hom";
  Index n = 400;
  int reps = 1000;
  std::string violation = "none";
  std::vector<double> strengths{0.0};
  double cluster_strength = 0.0;
  Index cluster_size = -1;  // -1: 4 when clustering is requested, else 0
  double alpha = 0.05;
  std::vector<std::string> methods{"het", "hom", "j"};
};

namespace detail {

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RPIV_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return default_thread_count();
}

inline void emit(const RunConfig& cfg, const std::string& body, std::ostream& out) {
  if (cfg.out_path.empty()) {
    out << body;
    return;
  }
  std::ofstream file(cfg.out_path, std::ios::binary | std::ios::trunc);
  if (!file) throw DataError("cannot write '" + cfg.out_path + "'");
  file << body;
}

inline ColumnRoles roles_from(const RunConfig& cfg) {
  ColumnRoles roles;
  roles.response = cfg.response;
  roles.endogenous = cfg.endogenous;
  roles.instruments = cfg.instruments;
  roles.controls = cfg.controls;
  if (!cfg.cluster_col.empty()) roles.cluster = cfg.cluster_col;
  return roles;
}

inline Json data_echo(const RunConfig& cfg) {
  Json j;
  j["data"] = cfg.data_path;
  j["response"] = cfg.response;
  j["endogenous"] = cfg.endogenous;
  j["instruments"] = cfg.instruments;
  j["controls"] = cfg.controls;
  j["cluster_col"] = cfg.cluster_col.empty() ? Json(nullptr) : Json(cfg.cluster_col);
  return j;
}

inline Json header(const char* command) {
  Json j;
  j["tool"] = "rpiv";
  j["version"] = kVersion;
  j["command"] = command;
  return j;
}

}  // namespace detail

inline int cmd_test(const RunConfig& cfg, std::ostream& out) {
  const VarianceKind kind = parse_variance_kind(cfg.variance);
  if (kind == VarianceKind::ClusterRobust && cfg.cluster_col.empty()) throw DataError("cluster column required");
  if (cfg.splits < 1) throw DataError("--splits must be at least 1");

  const Dataset raw = load_csv(cfg.data_path, detail::roles_from(cfg));
  const AugmentedDataset ds = augment(raw);

  TestConfig tc;
  tc.variance = kind;
  tc.clip_quantile = cfg.clip_quantile;
  tc.gamma_frac = cfg.gamma_frac;
  tc.seed = cfg.seed;
  tc.threads = detail::resolve_threads(cfg.threads);
  const AggregateOutcome agg = run_aggregated(ds, tc, cfg.splits);

  std::ostringstream body;
  if (cfg.format == "csv") {
    write_test_csv(body, agg, kind);
  } else {
    Json j = detail::header("test");
    Json c = detail::data_echo(cfg);
    c["variance"] = to_string(kind);
    c["splits"] = cfg.splits;
    c["clip_quantile"] = cfg.clip_quantile;
    c["gamma_frac"] = cfg.gamma_frac;
    c["seed"] = cfg.seed;
    j["config"] = std::move(c);
    Json dims;
    dims["n"] = raw.n();
    dims["p"] = raw.p();
    dims["d"] = raw.d();
    dims["q"] = raw.q();
    dims["p_aug"] = ds.p();
    dims["d_aug"] = ds.d();
    j["dimensions"] = std::move(dims);
    j["aggregated_p"] = agg.aggregated_p;
    Json splits = Json::array();
    for (std::size_t s = 0; s < agg.per_split.size(); ++s) splits.push_back(to_json(agg.per_split[s], s));
    j["splits"] = std::move(splits);
    body << j.dump(2) << '\n';
  }
  detail::emit(cfg, body.str(), out);
  return kOk;
}

inline int cmd_jtest(const RunConfig& cfg, std::ostream& out) {
  RunConfig data_cfg = cfg;
  data_cfg.cluster_col.clear();
  AugmentedDataset ds = augment(load_csv(cfg.data_path, detail::roles_from(data_cfg)));
  if (!cfg.augment_square.empty()) {
    const auto it = std::find(ds.z_names.begin(), ds.z_names.end(), cfg.augment_square);
    if (it == ds.z_names.end()) throw DataError("--augment-square: '" + cfg.augment_square + "' is not an instrument");
    ds = dieterle_augment(ds, static_cast<Index>(it - ds.z_names.begin()));
  }
  const JTestOutcome res = sargan(ds);

  std::ostringstream body;
  if (cfg.format == "csv") {
    write_jtest_csv(body, res);
  } else {
    Json j = detail::header("jtest");
    Json c = detail::data_echo(data_cfg);
    c["augment_square"] = cfg.augment_square.empty() ? Json(nullptr) : Json(cfg.augment_square);
    j["config"] = std::move(c);
    j["result"] = to_json(res);
    body << j.dump(2) << '\n';
  }
  detail::emit(cfg, body.str(), out);
  return kOk;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  sim::SimSpec spec;
  spec.setting = sim::parse_setting(cfg.setting);
  spec.violation = sim::parse_violation(cfg.violation);
  spec.n = cfg.n;
  spec.reps = cfg.reps;
  spec.cluster_strength = cfg.cluster_strength;
  spec.alpha = cfg.alpha;
  spec.master_seed = cfg.seed;
  spec.clip_quantile = cfg.clip_quantile;
  spec.gamma_frac = cfg.gamma_frac;

  std::vector<sim::Method> methods;
  for (const auto& m : cfg.methods) methods.push_back(sim::parse_method(m));
  const bool wants_clusters =
      cfg.cluster_strength > 0.0 || std::find(methods.begin(), methods.end(), sim::Method::RPCluster) != methods.end();
  spec.cluster_size = cfg.cluster_size >= 0 ? cfg.cluster_size : (wants_clusters ? 4 : 0);
  if (cfg.strengths.empty()) throw DataError("--strengths must list at least one value");
  sim::validate(spec);

  const auto reports = sim::power_curve(spec, cfg.strengths, methods, detail::resolve_threads(cfg.threads));

  std::ostringstream body;
  if (cfg.format == "csv") {
    sim::write_reports_csv(body, reports);
  } else {
    Json j = detail::header("simulate");
    Json c = sim::to_json(spec);
    c.erase("strength");
    c["strengths"] = cfg.strengths;
    Json names = Json::array();
    for (auto m : methods) names.push_back(sim::to_string(m));
    c["methods"] = std::move(names);
    j["config"] = std::move(c);
    Json results = Json::array();
    for (const auto& r : reports) results.push_back(sim::to_json(r));
    j["results"] = std::move(results);
    body << j.dump(2) << '\n';
  }
  detail::emit(cfg, body.str(), out);
  return kOk;
}

/// Parses `args` (without the program name) and runs the subcommand.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Residual prediction test for well-specified linear IV models", "rpiv"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  const std::vector<std::string> formats{"json", "csv"};
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", cfg.out_path, "Report path (stdout when omitted)");
    sub->add_option("--format", cfg.format, "Report format")->check(CLI::IsMember(formats));
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", cfg.data_path, "Input CSV")->required();
    sub->add_option("--response", cfg.response, "Response column")->required();
    sub->add_option("--endogenous", cfg.endogenous, "Endogenous regressor columns")->required()->delimiter(',');
    sub->add_option("--instruments", cfg.instruments, "Instrument columns")->required()->delimiter(',');
    sub->add_option("--controls", cfg.controls, "Exogenous control columns")->delimiter(',');
  };

  auto* test = app.add_subcommand("test", "Run the residual prediction test on a CSV dataset");
  add_data(test);
  add_common(test);
  test->add_option("--cluster-col", cfg.cluster_col, "Cluster label column");
  test->add_option("--variance", cfg.variance, "Variance estimator")
      ->check(CLI::IsMember({"het", "hom", "cluster"}));
  test->add_option("--splits", cfg.splits, "Number of random splits (doubled-median aggregation)");
  test->add_option("--clip-quantile", cfg.clip_quantile, "Quantile of |w0| used as clipping threshold")
      ->check(CLI::Range(0.0, 1.0));
  test->add_option("--gamma-frac", cfg.gamma_frac, "Variance floor as a fraction of the mean squared residual");
  test->add_option("--seed", cfg.seed, "Master seed");
  test->add_option("--threads", cfg.threads, "Worker threads (default: $RPIV_THREADS or hardware count)");

  auto* jtest = app.add_subcommand("jtest", "Sargan overidentification test");
  add_data(jtest);
  add_common(jtest);
  jtest->add_option("--augment-square", cfg.augment_square, "Append the square of this instrument");

  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo rejection-rate study");
  add_common(simulate);
  simulate->add_option("--setting", cfg.setting, "DGP")
      ->check(CLI::IsMember({"just-hom", "just-het", "over-hom", "over-het"}));
  simulate->add_option("--n", cfg.n, "Sample size");
  simulate->add_option("--reps", cfg.reps, "Replications per strength");
  simulate->add_option("--violation", cfg.violation, "Violation term")
      ->check(CLI::IsMember({"none", "z-squared", "sign-z", "misspec-squared", "misspec-sign"}));
  simulate->add_option("--strengths", cfg.strengths, "Violation strengths t")->delimiter(',');
  simulate->add_option("--cluster-strength", cfg.cluster_strength, "Within-cluster dependence s in [0, 1]");
  simulate->add_option("--cluster-size", cfg.cluster_size, "Observations per cluster");
  simulate->add_option("--alpha", cfg.alpha, "Significance level");
  simulate->add_option("--methods", cfg.methods, "Subset of het,hom,cluster,j")
      ->delimiter(',')
      ->check(CLI::IsMember({"het", "hom", "cluster", "j", "rp-het", "rp-hom", "rp-cluster", "overid-j"}));
  simulate->add_option("--clip-quantile", cfg.clip_quantile, "Quantile of |w0| used as clipping threshold")
      ->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--gamma-frac", cfg.gamma_frac, "Variance floor fraction");
  simulate->add_option("--seed", cfg.seed, "Master seed");
  simulate->add_option("--threads", cfg.threads, "Worker threads (default: $RPIV_THREADS or hardware count)");

  std::vector<std::string> argv_storage{"rpiv"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "rpiv: " << e.what() << '\n';
    return kDataError;
  }

  try {
    if (test->parsed()) {
      cfg.subcommand = "test";
      return cmd_test(cfg, out);
    }
    if (jtest->parsed()) {
      cfg.subcommand = "jtest";
      return cmd_jtest(cfg, out);
    }
    cfg.subcommand = "simulate";
    return cmd_simulate(cfg, out);
  } catch (const DataError& e) {
    err << "rpiv: " << e.what() << '\n';
    return kDataError;
  } catch (const RankError& e) {
    err << "rpiv: " << e.what() << '\n';
    return kRankError;
  } catch (const std::exception& e) {
    err << "rpiv: unexpected error: " << e.what() << '\n';
    return kUnexpected;
  }
}

}  // namespace rpiv::cli
