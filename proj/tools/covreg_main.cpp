// covreg: covariance regression command line tool.
//
// Subcommands:
//   simulate  run a Monte Carlo study from a TOML/JSON config
//   fit       fit a covariance regression model to a dataset file
//   assess    compute model assessment statistics (Cp, RCp, OCV)

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "covreg/assess.hpp"
#include "covreg/dataset_io.hpp"
#include "covreg/simulate.hpp"

using namespace covreg;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitValidation = 2;
constexpr int kExitQuality = 3;

int default_workers() {
  if (const char* env = std::getenv("COVREG_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1) return w;
  }
  return 1;
}

ParamVector parse_beta_list(const std::string& csv) {
  std::vector<double> vals;
  std::string token;
  std::istringstream is(csv);
  while (std::getline(is, token, ',')) {
    try {
      vals.push_back(std::stod(token));
    } catch (const std::exception&) {
      throw ValidationError("beta0", "cannot parse '" + token + "'");
    }
  }
  if (vals.empty()) throw ValidationError("beta0", "empty list");
  ParamVector b(static_cast<Eigen::Index>(vals.size()));
  for (size_t i = 0; i < vals.size(); ++i) b[i] = vals[i];
  return b;
}

ordered_json interval_json(const std::vector<ConfidenceInterval>& cis) {
  ordered_json lower = ordered_json::array(), upper = ordered_json::array();
  for (const auto& ci : cis) {
    lower.push_back(ci.lower);
    upper.push_back(ci.upper);
  }
  ordered_json j;
  j["lower"] = std::move(lower);
  j["upper"] = std::move(upper);
  return j;
}

ordered_json matrix_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json vector_json(const Vector& v) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

void print_metrics_table(const SimReport& report) {
  std::printf("%-6s %-6s", "est", "stat");
  for (size_t k = 0; k < report.estimators.front().components.size(); ++k) {
    std::printf(" %9s", ("beta" + std::to_string(k + 1)).c_str());
  }
  std::printf("\n");
  for (const EstimatorSummary& e : report.estimators) {
    const char* stats[3] = {"BIAS", "SD", "RMSE"};
    for (int s = 0; s < 3; ++s) {
      std::printf("%-6s %-6s", s == 0 ? to_string(e.kind).c_str() : "", stats[s]);
      for (const ComponentStats& c : e.components) {
        const double v = s == 0 ? c.bias : (s == 1 ? c.sd : c.rmse);
        std::printf(" %9.3f", v);
      }
      std::printf("\n");
    }
    std::printf("%-6s %-6s S-Error %.3f  F-Error %.3f\n", "", "",
                e.mean_s_error, e.mean_f_error);
  }
}

struct SimulateArgs {
  std::string config_path;
  std::string out_dir = "covreg_out";
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

int cmd_simulate(const SimulateArgs& args, const SimConfig& from_flags,
                 bool config_is_json) {
  SimConfig cfg = from_flags;
  if (config_is_json) {
    cfg = io::sim_config_from_json(io::read_file(args.config_path));
  }
  if (args.seed) cfg.seed = *args.seed;
  if (args.workers) cfg.workers = *args.workers;
  if (cfg.workers < 1) cfg.workers = default_workers();
  cfg.validate();

  SimReport report = simulate::run_study(cfg);
  io::write_report(report, args.out_dir);
  if (!report.estimators.empty()) print_metrics_table(report);
  if (report.test_errors.available) {
    if (cfg.x_setting == XSetting::FixedX) {
      std::printf("ErrF %.4f (se %.4f)\n", report.test_errors.err_fixed,
                  report.test_errors.se_fixed);
    } else {
      std::printf("ErrS %.4f  ErrR %.4f  gap %.4f (se %.4f)\n",
                  report.test_errors.err_same, report.test_errors.err_random,
                  report.test_errors.gap_random_same, report.test_errors.se_gap);
    }
  }
  for (const CriterionSummary& c : report.criteria) {
    std::printf("%-8s mean %.4f  bias vs ErrS %+.4f  bias vs ErrR %+.4f\n",
                c.name.c_str(), c.mean, c.bias_vs_same, c.bias_vs_random);
  }
  if (report.failures > 0) {
    std::fprintf(stderr, "note: %d of %d replications failed\n", report.failures,
                 cfg.reps);
  }
  std::printf("report written to %s\n", args.out_dir.c_str());
  return kExitOk;
}

struct FitArgs {
  std::string dataset_path;
  std::string estimator = "ols";
  std::string weight = "auto";
  std::string beta0_csv;
  double mu4 = 0.0;
  double level = 0.95;
  std::string out_path = "fit.json";
  bool no_constraint = false;
};

int cmd_fit(const FitArgs& args) {
  io::LoadedDataset loaded = io::load_dataset(args.dataset_path);
  for (const std::string& w : loaded.warnings) {
    std::fprintf(stderr, "warning: %s\n", w.c_str());
  }
  const Dataset& data = loaded.data;

  FitOptions opts;
  opts.constrain_pd = !args.no_constraint;

  std::optional<ParamVector> beta0;
  if (!args.beta0_csv.empty()) beta0 = parse_beta_list(args.beta0_csv);
  if (beta0 && beta0->size() != data.family.K) {
    throw ValidationError("beta0", "expected " + std::to_string(data.family.K) +
                                       " components");
  }

  FitResult fit;
  AvarEstimate avar;
  if (args.estimator == "qmle") {
    fit = estimate::fit_qmle(data, opts);
    avar = inference::avar_qmle(data, fit.beta);
  } else if (args.estimator == "ols") {
    fit = estimate::fit_ols(data, opts);
    avar = inference::avar_wls(data, fit.beta, WeightSpec::identity());
  } else if (args.estimator == "gls") {
    if (!beta0 || args.mu4 < 1.0) {
      throw ValidationError("beta0",
                            "gls requires --beta0 and --mu4 (the true "
                            "parameter and error fourth moment)");
    }
    ErrorMoments m = ErrorMoments::pooled(args.mu4);
    fit = estimate::fit_gls(data, *beta0, m, opts);
    avar = inference::avar_wls(data, fit.beta, WeightSpec::known_v(*beta0, m));
  } else if (args.estimator == "fgls") {
    fit = estimate::fit_fgls(data, opts);
    avar = inference::avar_wls(data, fit.beta, fit.weight_used);
  } else {
    throw ValidationError("estimator", "must be qmle, ols, gls, or fgls");
  }

  auto cis = inference::confint(fit, avar, args.level, data.n(), data.p());
  Matrix eps = inference::residuals(data, fit.beta);
  ErrorMoments mu4 = condvar::estimate_mu4(eps);

  ordered_json j;
  j["schema"] = 1;
  j["estimator"] = args.estimator;
  j["n"] = data.n();
  j["p"] = data.p();
  j["K"] = data.family.K;
  j["beta_hat"] = vector_json(fit.beta);
  j["converged"] = fit.converged;
  j["iters"] = fit.iters;
  j["objective"] = fit.objective;
  j["constrained_active"] = fit.constrained_active;
  j["avar"] = matrix_json(avar.avar);
  Vector se(fit.beta.size());
  const double np = double(data.n()) * data.p();
  for (Eigen::Index k = 0; k < fit.beta.size(); ++k) {
    se[k] = std::sqrt(std::max(avar.avar(k, k), 0.0) / np);
  }
  j["se"] = vector_json(se);
  j["confint"] = interval_json(cis);
  j["confint"]["level"] = args.level;
  ordered_json res;
  res["mean"] = eps.mean();
  res["variance"] = eps.array().square().mean();
  res["mu4"] = mu4.mu4[0];
  res["min"] = eps.minCoeff();
  res["max"] = eps.maxCoeff();
  j["residuals"] = std::move(res);
  io::write_file(args.out_path, j.dump(1));

  std::printf("%-5s %12s %10s %22s\n", "k", "estimate", "se",
              ("[" + std::to_string(int(args.level * 100)) + "% interval]").c_str());
  for (Eigen::Index k = 0; k < fit.beta.size(); ++k) {
    std::printf("%-5lld %12.5f %10.5f   [%9.5f, %9.5f]\n",
                static_cast<long long>(k + 1), fit.beta[k], se[k], cis[k].lower,
                cis[k].upper);
  }
  std::printf("converged: %s  iters: %d  written to %s\n",
              fit.converged ? "yes" : "no", fit.iters, args.out_path.c_str());
  return kExitOk;
}

struct AssessArgs {
  std::string dataset_path;
  std::vector<std::string> criteria{"cp", "rcp", "ocv"};
  std::string weight = "identity";
  std::string beta0_csv;
  double mu4 = 0.0;
  std::vector<std::string> candidates;
  std::string rank_by;
  std::string out_dir = "covreg_out";
  bool refit_weight_per_fold = false;
};

std::vector<int> parse_candidate(const std::string& csv, int K) {
  std::vector<int> idx;
  std::istringstream is(csv);
  std::string token;
  while (std::getline(is, token, ',')) {
    int k = 0;
    try {
      k = std::stoi(token);
    } catch (const std::exception&) {
      throw ValidationError("candidates", "cannot parse '" + token + "'");
    }
    if (k < 1 || k > K) {
      throw ValidationError("candidates",
                            "design index " + std::to_string(k) + " out of range");
    }
    idx.push_back(k - 1);
  }
  if (idx.empty()) throw ValidationError("candidates", "empty candidate");
  return idx;
}

Dataset subset_design(const Dataset& data, const std::vector<int>& idx) {
  Dataset out;
  out.family = ModelFamily{FamilyKind::Linear, static_cast<int>(idx.size()),
                           data.family.p};
  out.Y = data.Y;
  out.X.reserve(data.X.size());
  for (const CovariateSet& x : data.X) {
    CovariateSet s;
    s.family = FamilyKind::Linear;
    for (int k : idx) s.designs.push_back(x.designs[k]);
    out.X.push_back(std::move(s));
  }
  return out;
}

int cmd_assess(const AssessArgs& args) {
  io::LoadedDataset loaded = io::load_dataset(args.dataset_path);
  for (const std::string& w : loaded.warnings) {
    std::fprintf(stderr, "warning: %s\n", w.c_str());
  }
  const Dataset& data = loaded.data;

  bool wants_cp = false, wants_ocv = false;
  for (const std::string& c : args.criteria) {
    if (c == "cp" || c == "rcp") wants_cp = true;
    else if (c == "ocv") wants_ocv = true;
    else throw ValidationError("criteria", "unknown criterion '" + c + "'");
  }
  if (wants_cp && data.family.kind != FamilyKind::Linear) {
    throw ValidationError("criteria", "criterion requires linear family");
  }

  std::optional<ParamVector> beta0;
  if (!args.beta0_csv.empty()) beta0 = parse_beta_list(args.beta0_csv);

  WeightSpec weight_spec = WeightSpec::identity();
  if (args.weight == "known_v") {
    if (!beta0 || args.mu4 < 1.0) {
      throw ValidationError("beta0", "known_v weight requires --beta0 and --mu4");
    }
    weight_spec = WeightSpec::known_v(*beta0, ErrorMoments::pooled(args.mu4));
  } else if (args.weight == "estimated") {
    weight_spec = WeightSpec::estimated_v();
  } else if (args.weight != "identity") {
    throw ValidationError("weight", "must be identity, known_v, or estimated");
  }
  const bool known_v_source = beta0.has_value() && args.mu4 >= 1.0;

  std::vector<std::vector<int>> candidate_sets;
  if (args.candidates.empty()) {
    std::vector<int> all(data.family.K);
    for (int k = 0; k < data.family.K; ++k) all[k] = k;
    candidate_sets.push_back(std::move(all));
  } else {
    if (data.family.kind != FamilyKind::Linear) {
      throw ValidationError("candidates", "candidates require a linear family");
    }
    for (const std::string& c : args.candidates) {
      candidate_sets.push_back(parse_candidate(c, data.family.K));
    }
  }

  FitOptions opts;
  ordered_json out_candidates = ordered_json::array();
  std::vector<double> rank_values;
  const std::string rank_by =
      args.rank_by.empty() ? args.criteria.front() : args.rank_by;

  for (const std::vector<int>& idx : candidate_sets) {
    const Dataset cand = data.family.kind == FamilyKind::Linear
                             ? subset_design(data, idx)
                             : data;

    // Resolve the loss weight on the full dataset (it describes the loss,
    // not the candidate design).
    WeightSpec resolved = weight_spec;
    if (resolved.kind == WeightSpec::Kind::EstimatedV && !resolved.resolved()) {
      FitResult pilot = estimate::fit_ols(cand, opts);
      resolved.beta_for_v = pilot.beta;
      resolved.moments =
          condvar::estimate_mu4(inference::residuals(cand, pilot.beta));
    }
    std::vector<Weight> weights =
        resolved.kind == WeightSpec::Kind::EstimatedV
            ? condvar::build_weights(
                  WeightSpec::known_v(resolved.beta_for_v, resolved.moments),
                  cand)
            : condvar::build_weights(resolved, data);

    ordered_json jc;
    ordered_json designs = ordered_json::array();
    for (int k : idx) designs.push_back(k + 1);
    jc["designs"] = std::move(designs);

    double rank_value = 0.0;
    if (data.family.kind == FamilyKind::Linear) {
      FitResult fit = estimate::fit_wls_with_weights(cand, weights, opts, resolved);

      std::vector<condvar::CondCov> v_source;
      bool estimated_flag = false;
      if (wants_cp) {
        if (known_v_source) {
          // V from the user-supplied truth, evaluated on the full design.
          for (const CovariateSet& x : data.X) {
            v_source.emplace_back(model::eval(data.family, *beta0, x),
                                  ErrorMoments::pooled(args.mu4));
          }
        } else {
          estimated_flag = true;
          FitResult pilot = estimate::fit_ols(cand, opts);
          ErrorMoments mu4 =
              condvar::estimate_mu4(inference::residuals(cand, pilot.beta));
          for (const CovariateSet& x : cand.X) {
            v_source.emplace_back(model::eval(cand.family, pilot.beta, x), mu4);
          }
        }
      }

      assess::AssessOptions aopts;
      aopts.with_ocv = wants_ocv;
      aopts.refit_weight_per_fold = args.refit_weight_per_fold;
      if (wants_cp) {
        assess::AssessmentReport rep =
            assess::assess_linear(cand, fit, weights, v_source, estimated_flag, aopts);
        jc["train_error"] = rep.train_error;
        jc["u"] = rep.u;
        jc["cp"] = rep.cp;
        jc["vtilde_err_r"] = rep.vtilde_err_r;
        jc["rcp"] = rep.rcp;
        jc["estimated_v"] = rep.estimated_v;
        if (rep.ocv) jc["ocv"] = *rep.ocv;
        if (rank_by == "cp") rank_value = rep.cp;
        else if (rank_by == "rcp") rank_value = rep.rcp;
        else if (rank_by == "ocv" && rep.ocv) rank_value = *rep.ocv;
      } else {
        jc["train_error"] = assess::train_error(cand, weights, fit.beta);
        if (wants_ocv) {
          const double v = assess::ocv(cand, weights, aopts);
          jc["ocv"] = v;
          rank_value = v;
        }
      }
      jc["beta_hat"] = vector_json(fit.beta);
    } else {
      // Nonlinear family: OCV only.
      FitResult fit = estimate::fit_wls_with_weights(data, weights, opts, resolved);
      assess::AssessOptions aopts;
      const double v = assess::ocv(data, weights, aopts);
      jc["train_error"] = assess::train_error(data, weights, fit.beta);
      jc["ocv"] = v;
      jc["beta_hat"] = vector_json(fit.beta);
      rank_value = v;
    }
    rank_values.push_back(rank_value);
    out_candidates.push_back(std::move(jc));
  }

  std::vector<int> order(candidate_sets.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return rank_values[a] < rank_values[b];
  });

  ordered_json j;
  j["schema"] = 1;
  j["weight"] = args.weight;
  j["criteria"] = args.criteria;
  j["rank_by"] = rank_by;
  j["candidates"] = std::move(out_candidates);
  ordered_json jorder = ordered_json::array();
  for (int i : order) jorder.push_back(i);
  j["ranking"] = std::move(jorder);

  std::filesystem::create_directories(args.out_dir);
  const std::filesystem::path base(args.out_dir);
  io::write_file((base / "assess.json").string(), j.dump(1));

  std::ostringstream csv;
  csv << "candidate,designs";
  for (const std::string& c : args.criteria) csv << ',' << c;
  csv << "\n";
  for (size_t i = 0; i < candidate_sets.size(); ++i) {
    csv << i << ",\"";
    for (size_t k = 0; k < candidate_sets[i].size(); ++k) {
      if (k) csv << ' ';
      csv << candidate_sets[i][k] + 1;
    }
    csv << '"';
    for (const std::string& c : args.criteria) {
      const auto& jc = j["candidates"][i];
      csv << ',';
      if (jc.contains(c)) csv << jc[c].dump();
    }
    csv << "\n";
  }
  io::write_file((base / "assess.csv").string(), csv.str());

  for (size_t pos = 0; pos < order.size(); ++pos) {
    const auto& jc = j["candidates"][order[pos]];
    std::printf("#%zu candidate %d  %s = %s\n", pos + 1, order[pos],
                rank_by.c_str(),
                jc.contains(rank_by) ? jc[rank_by].dump().c_str() : "-");
  }
  std::printf("assessment written to %s\n", args.out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"covariance regression toolkit"};
  app.require_subcommand(1);

  // --- simulate ---------------------------------------------------------
  SimulateArgs sim_args;
  SimConfig sim_cfg;
  sim_cfg.workers = 0;  // sentinel: fall back to COVREG_WORKERS / 1
  std::string sim_model = "A", sim_setting = "random", sim_errors = "mixture";
  std::string sim_criteria_weight = "known_v";
  std::vector<std::string> sim_estimators;
  std::uint64_t sim_seed_flag = 0;
  int sim_workers_flag = 0;

  CLI::App* sim = app.add_subcommand("simulate", "run a Monte Carlo study");
  sim->add_option("config", sim_args.config_path,
                  "study config file (.toml or .json)");
  sim->set_config("--config-file");
  sim->add_option("--model", sim_model, "A, B, or A_misspecified");
  sim->add_option("--n", sim_cfg.n, "sample size");
  sim->add_option("--p", sim_cfg.p, "response dimension");
  sim->add_option("--reps", sim_cfg.reps, "number of replications");
  sim->add_option("--setting", sim_setting, "fixed or random");
  sim->add_option("--errors", sim_errors, "normal or mixture");
  sim->add_option("--estimators", sim_estimators,
                  "subset of qmle, ols, gls, fgls")
      ->expected(0, -1);
  sim->add_option("--criteria", sim_cfg.criteria,
                  "subset of cp, cp_hat, rcp, rcp_hat, ocv")
      ->expected(0, -1);
  sim->add_option("--criteria-weight", sim_criteria_weight,
                  "known_v or identity");
  sim->add_option("--max-failure-rate", sim_cfg.max_failure_rate,
                  "abort threshold for failed replications");
  sim->add_flag("--no-test-errors{false}", sim_cfg.with_test_errors,
                "skip the expected-test-error estimates");
  CLI::Option* seed_opt = sim->add_option("--seed", sim_seed_flag, "master seed");
  CLI::Option* workers_opt =
      sim->add_option("--workers", sim_workers_flag, "worker threads");
  sim->add_option("--out", sim_args.out_dir, "output directory");

  // --- fit ---------------------------------------------------------------
  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "fit a model to a dataset");
  fit->add_option("dataset", fit_args.dataset_path, "dataset JSON file")
      ->required();
  fit->add_option("--estimator", fit_args.estimator, "qmle, ols, gls, or fgls");
  fit->add_option("--beta0", fit_args.beta0_csv,
                  "true parameter (comma separated; gls only)");
  fit->add_option("--mu4", fit_args.mu4, "true error fourth moment (gls only)");
  fit->add_option("--level", fit_args.level, "confidence level");
  fit->add_option("--out", fit_args.out_path, "output JSON path");
  fit->add_flag("--unconstrained", fit_args.no_constraint,
                "drop the positive definiteness constraint");

  // --- assess -------------------------------------------------------------
  AssessArgs assess_args;
  CLI::App* ass = app.add_subcommand("assess", "model assessment statistics");
  ass->add_option("dataset", assess_args.dataset_path, "dataset JSON file")
      ->required();
  ass->add_option("--criteria", assess_args.criteria, "subset of cp, rcp, ocv");
  ass->add_option("--weight", assess_args.weight,
                  "identity, known_v, or estimated");
  ass->add_option("--beta0", assess_args.beta0_csv,
                  "true parameter for known-V statistics");
  ass->add_option("--mu4", assess_args.mu4, "true error fourth moment");
  ass->add_option("--candidates", assess_args.candidates,
                  "design subsets to rank, e.g. 1,2,3 (repeatable)");
  ass->add_option("--rank-by", assess_args.rank_by,
                  "criterion used for ranking (default: first)");
  ass->add_option("--out", assess_args.out_dir, "output directory");
  ass->add_flag("--refit-weight-per-fold", assess_args.refit_weight_per_fold,
                "re-estimate the plug-in weight inside each OCV fold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (sim->parsed()) {
      bool config_is_json = false;
      if (!sim_args.config_path.empty()) {
        if (sim_args.config_path.size() > 5 &&
            sim_args.config_path.substr(sim_args.config_path.size() - 5) ==
                ".json") {
          config_is_json = true;
        } else {
          // Re-parse the subcommand with the TOML file as the config source.
          std::vector<std::string> cfg_args = {"--config-file",
                                               sim_args.config_path};
          sim->clear();
          std::vector<const char*> argv2;
          argv2.push_back("simulate");
          for (const std::string& s : cfg_args) argv2.push_back(s.c_str());
          // Keep explicit flags by appending them after the config option.
          for (int i = 2; i < argc; ++i) argv2.push_back(argv[i]);
          std::vector<char*> raw;
          for (const char* s : argv2) raw.push_back(const_cast<char*>(s));
          sim->parse(static_cast<int>(raw.size()), raw.data());
        }
      }
      // Map string flags into the config struct.
      if (sim_model == "A") sim_cfg.model = SimModel::A;
      else if (sim_model == "B") sim_cfg.model = SimModel::B;
      else if (sim_model == "A_misspecified") sim_cfg.model = SimModel::AMisspecified;
      else throw ValidationError("model", "must be A, B, or A_misspecified");
      if (sim_setting == "random") sim_cfg.x_setting = XSetting::RandomX;
      else if (sim_setting == "fixed") sim_cfg.x_setting = XSetting::FixedX;
      else throw ValidationError("setting", "must be fixed or random");
      if (sim_errors == "normal") sim_cfg.error_law = ErrorLawKind::StandardNormal;
      else if (sim_errors == "mixture") sim_cfg.error_law = ErrorLawKind::NormalMixture;
      else throw ValidationError("errors", "must be normal or mixture");
      if (sim_criteria_weight == "known_v") {
        sim_cfg.criteria_weight = WeightSpec::Kind::KnownV;
      } else if (sim_criteria_weight == "identity") {
        sim_cfg.criteria_weight = WeightSpec::Kind::Identity;
      } else {
        throw ValidationError("criteria_weight", "must be known_v or identity");
      }
      // CLI11 renders empty config arrays as one empty string.
      std::erase(sim_estimators, "");
      std::erase(sim_cfg.criteria, "");
      sim_cfg.estimators.clear();
      for (const std::string& e : sim_estimators) {
        if (e == "qmle") sim_cfg.estimators.push_back(EstimatorKind::QMLE);
        else if (e == "ols") sim_cfg.estimators.push_back(EstimatorKind::OLS);
        else if (e == "gls") sim_cfg.estimators.push_back(EstimatorKind::GLS);
        else if (e == "fgls") sim_cfg.estimators.push_back(EstimatorKind::FGLS);
        else throw ValidationError("estimators", "unknown estimator '" + e + "'");
      }
      if (seed_opt->count() > 0) sim_args.seed = sim_seed_flag;
      if (workers_opt->count() > 0) sim_args.workers = sim_workers_flag;
      if (sim_cfg.workers == 0) sim_cfg.workers = default_workers();
      return cmd_simulate(sim_args, sim_cfg, config_is_json);
    }
    if (fit->parsed()) return cmd_fit(fit_args);
    if (ass->parsed()) return cmd_assess(assess_args);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const DimensionMismatch& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const StudyQualityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitQuality;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInternal;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitInternal;
  }
  return kExitOk;
}
