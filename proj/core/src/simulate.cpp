#include "covreg/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace covreg {

std::string to_string(ErrorLawKind law) {
  return law == ErrorLawKind::StandardNormal ? "normal" : "mixture";
}

std::string to_string(XSetting s) {
  return s == XSetting::FixedX ? "fixed" : "random";
}

std::string to_string(SimModel m) {
  switch (m) {
    case SimModel::A: return "A";
    case SimModel::B: return "B";
    case SimModel::AMisspecified: return "A_misspecified";
  }
  return "?";
}

void SimConfig::validate() const {
  if (n < 1) throw ValidationError("n", "must be >= 1");
  if (p < 2) throw ValidationError("p", "must be >= 2");
  if (reps < 1) throw ValidationError("reps", "must be >= 1");
  if (workers < 1) throw ValidationError("workers", "must be >= 1");
  if (!(max_failure_rate >= 0.0 && max_failure_rate <= 1.0)) {
    throw ValidationError("max_failure_rate", "must lie in [0,1]");
  }
  for (const std::string& c : criteria) {
    if (c != "cp" && c != "cp_hat" && c != "rcp" && c != "rcp_hat" && c != "ocv") {
      throw ValidationError("criteria", "unknown criterion '" + c + "'");
    }
  }
  if (criteria_weight != WeightSpec::Kind::KnownV &&
      criteria_weight != WeightSpec::Kind::Identity) {
    throw ValidationError("criteria_weight", "must be known_v or identity");
  }
}

namespace simulate {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct RepOutcome {
  bool failed = false;
  std::string message;
  std::vector<ParamVector> beta;
  std::vector<double> s_err;
  std::vector<double> f_err;
  double te_same = kNaN;    // Fixed-X runs store ErrF here
  double te_random = kNaN;  // Random-X only
  std::vector<double> crit;
};

struct RepInputs {
  const SimConfig* config = nullptr;
  ParamVector beta0;
  ModelFamily family;
  // Shared Fixed-X realization (empty under Random-X).
  std::vector<CovariateSet> fixed_truth;
  std::vector<CovariateSet> fixed_fitted;
};

struct DrawnCovariates {
  std::vector<CovariateSet> truth;
  std::vector<CovariateSet> fitted;
};

DrawnCovariates draw_covariates(SimModel mdl, int n, int p, std::mt19937_64& rng) {
  DrawnCovariates out;
  switch (mdl) {
    case SimModel::A:
      out.truth = gen_model_a(n, p, rng);
      out.fitted = out.truth;
      break;
    case SimModel::B:
      out.truth = gen_model_b(n, p, rng);
      out.fitted = out.truth;
      break;
    case SimModel::AMisspecified: {
      MisspecifiedDraw d = gen_misspecified_a(n, p, rng);
      out.truth = std::move(d.truth);
      out.fitted = std::move(d.fitted);
      break;
    }
  }
  return out;
}

struct TruthPieces {
  std::vector<SymMatrix> cov;
  std::vector<SymMatrix> sqrt;
};

TruthPieces true_covariances(const ModelFamily& family, const ParamVector& beta0,
                             const std::vector<CovariateSet>& truth_x) {
  TruthPieces out;
  out.cov.reserve(truth_x.size());
  out.sqrt.reserve(truth_x.size());
  for (const CovariateSet& x : truth_x) {
    SymMatrix c = model::eval(family, beta0, x);
    out.cov.push_back(c);
    out.sqrt.push_back(numkit::sym_sqrt(c));
  }
  return out;
}

std::vector<Weight> loss_weights(const SimConfig& cfg, const ErrorLaw& law,
                                 const std::vector<SymMatrix>& true_cov) {
  std::vector<Weight> w;
  w.reserve(true_cov.size());
  for (const SymMatrix& c : true_cov) {
    if (cfg.criteria_weight == WeightSpec::Kind::KnownV) {
      w.push_back(Weight::inverse_cond_cov(c, law.moments()));
    } else {
      w.push_back(Weight::identity(c.dim()));
    }
  }
  return w;
}

RepOutcome run_rep(const RepInputs& in, int rep) {
  const SimConfig& cfg = *in.config;
  const ErrorLaw law{cfg.error_law};
  RepOutcome out;
  try {
    // Covariates: one shared realization under Fixed-X, fresh otherwise.
    DrawnCovariates xs;
    if (cfg.x_setting == XSetting::FixedX) {
      xs.truth = in.fixed_truth;
      xs.fitted = in.fixed_fitted;
    } else {
      std::mt19937_64 rng = make_stream(cfg.seed, rep, Purpose::TrainCovariates);
      xs = draw_covariates(cfg.model, cfg.n, cfg.p, rng);
    }
    TruthPieces truth = true_covariances(in.family, in.beta0, xs.truth);

    Dataset data;
    data.family = in.family;
    data.X = xs.fitted;
    data.Y = Matrix(cfg.n, cfg.p);
    {
      std::mt19937_64 rng = make_stream(cfg.seed, rep, Purpose::TrainNoise);
      for (int i = 0; i < cfg.n; ++i) {
        data.Y.row(i) = draw_response(truth.sqrt[i], law, rng).transpose();
      }
    }

    FitOptions opts = cfg.fit;
    opts.on_nonconvergence = FitOptions::OnNonconvergence::Throw;

    const bool need_loss = !cfg.criteria.empty() || cfg.with_test_errors;
    const bool need_gls =
        std::find(cfg.estimators.begin(), cfg.estimators.end(),
                  EstimatorKind::GLS) != cfg.estimators.end();
    std::vector<Weight> weights;
    if (need_loss || (need_gls && cfg.criteria_weight == WeightSpec::Kind::KnownV)) {
      weights = loss_weights(cfg, law, truth.cov);
    }

    WeightSpec known_spec = WeightSpec::known_v(in.beta0, law.moments());
    std::vector<Weight> gls_weights;
    if (need_gls) {
      if (cfg.criteria_weight == WeightSpec::Kind::KnownV && need_loss) {
        gls_weights = weights;  // same pseudoinverse; built once per rep
      } else {
        std::vector<Weight> w;
        w.reserve(truth.cov.size());
        for (const SymMatrix& c : truth.cov) {
          w.push_back(Weight::inverse_cond_cov(c, law.moments()));
        }
        gls_weights = std::move(w);
      }
    }

    std::optional<FitResult> ols_fit;
    std::optional<FitResult> gls_fit;
    for (EstimatorKind kind : cfg.estimators) {
      FitResult fit;
      switch (kind) {
        case EstimatorKind::QMLE:
          fit = estimate::fit_qmle(data, opts);
          break;
        case EstimatorKind::OLS:
          fit = estimate::fit_ols(data, opts);
          ols_fit = fit;
          break;
        case EstimatorKind::GLS:
          fit = estimate::fit_wls_with_weights(data, gls_weights, opts, known_spec);
          fit.estimator = EstimatorKind::GLS;
          gls_fit = fit;
          break;
        case EstimatorKind::FGLS:
          fit = estimate::fit_fgls(data, opts);
          break;
        case EstimatorKind::WLS:
          throw ValidationError("estimators", "plain wls is not a study estimator");
      }
      auto [s_err, f_err] = inference::cov_errors_vs(data, fit.beta, truth.cov);
      out.beta.push_back(fit.beta);
      out.s_err.push_back(s_err);
      out.f_err.push_back(f_err);
    }

    if (!need_loss) return out;

    // The assessed model: WLS under the loss weight (GLS fit for known-V,
    // OLS fit for the identity weight).
    FitResult crit_fit;
    if (cfg.criteria_weight == WeightSpec::Kind::KnownV) {
      crit_fit = gls_fit ? *gls_fit
                         : estimate::fit_wls_with_weights(data, weights, opts,
                                                          known_spec);
    } else {
      crit_fit = ols_fit ? *ols_fit : estimate::fit_ols(data, opts);
    }

    // Same-X (or Fixed-X) test draw: training covariates, fresh noise.
    {
      std::mt19937_64 rng = make_stream(cfg.seed, rep, Purpose::TestNoise);
      Dataset test;
      test.family = in.family;
      test.X = xs.fitted;
      test.Y = Matrix(cfg.n, cfg.p);
      for (int i = 0; i < cfg.n; ++i) {
        test.Y.row(i) = draw_response(truth.sqrt[i], law, rng).transpose();
      }
      out.te_same = assess::test_error(test, weights, crit_fit.beta);
    }

    // Random-X test draw: fresh covariates and responses, m = n.
    if (cfg.x_setting == XSetting::RandomX) {
      std::mt19937_64 xrng = make_stream(cfg.seed, rep, Purpose::TestCovariates);
      DrawnCovariates xs0 = draw_covariates(cfg.model, cfg.n, cfg.p, xrng);
      TruthPieces truth0 = true_covariances(in.family, in.beta0, xs0.truth);
      std::vector<Weight> w0 = loss_weights(cfg, law, truth0.cov);
      std::mt19937_64 rng = make_stream(cfg.seed, rep, Purpose::TestNoiseRandom);
      Dataset test;
      test.family = in.family;
      test.X = xs0.fitted;
      test.Y = Matrix(cfg.n, cfg.p);
      for (int i = 0; i < cfg.n; ++i) {
        test.Y.row(i) = draw_response(truth0.sqrt[i], law, rng).transpose();
      }
      out.te_random = assess::test_error(test, w0, crit_fit.beta);
    }

    if (cfg.criteria.empty()) return out;

    const double tr = assess::train_error(data, weights, crit_fit.beta);

    std::vector<condvar::CondCov> v_true;
    v_true.reserve(cfg.n);
    for (const SymMatrix& c : truth.cov) {
      v_true.emplace_back(c, law.moments());
    }

    bool need_known = false, need_hat = false;
    for (const std::string& c : cfg.criteria) {
      if (c == "cp" || c == "rcp") need_known = true;
      if (c == "cp_hat" || c == "rcp_hat") need_hat = true;
    }

    double u_known = kNaN, v_known = kNaN;
    if (need_known) {
      assess::WeightedLinearData wd =
          assess::prepare_weighted_design(data, weights, v_true);
      u_known = assess::u_stat(wd);
      v_known = assess::vtilde_err_r(wd);
    }

    double u_hat = kNaN, v_hat = kNaN;
    if (need_hat) {
      FitResult pilot = ols_fit ? *ols_fit : estimate::fit_ols(data, opts);
      Matrix eps = inference::residuals(data, pilot.beta);
      ErrorMoments mu4 = condvar::estimate_mu4(eps);
      std::vector<condvar::CondCov> v_plug;
      v_plug.reserve(cfg.n);
      for (int i = 0; i < cfg.n; ++i) {
        v_plug.emplace_back(model::eval(in.family, pilot.beta, data.X[i]), mu4);
      }
      assess::WeightedLinearData wd =
          assess::prepare_weighted_design(data, weights, v_plug);
      u_hat = assess::u_stat(wd);
      v_hat = assess::vtilde_err_r(wd);
    }

    for (const std::string& c : cfg.criteria) {
      double value = kNaN;
      if (c == "cp") value = tr + u_known;
      else if (c == "rcp") value = tr + 0.5 * u_known + v_known;
      else if (c == "cp_hat") value = tr + u_hat;
      else if (c == "rcp_hat") value = tr + 0.5 * u_hat + v_hat;
      else if (c == "ocv") value = assess::ocv(data, weights);
      out.crit.push_back(value);
    }
  } catch (const Error& e) {
    out.failed = true;
    out.message = e.what();
  }
  return out;
}

struct Welford {
  // Plain accumulators; aggregation is sequential in rep order.
  double sum = 0.0;
  double sumsq = 0.0;
  int count = 0;
  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++count;
  }
  double mean() const { return count ? sum / count : kNaN; }
  /// Population variance (divisor = count).
  double var() const {
    if (!count) return kNaN;
    const double m = mean();
    return std::max(0.0, sumsq / count - m * m);
  }
  double sd() const { return std::sqrt(var()); }
  /// Standard error of the mean (sample variance divisor).
  double se() const {
    if (count < 2) return 0.0;
    return std::sqrt(var() * count / (count - 1.0) / count);
  }
};

}  // namespace

ParamVector default_beta0() {
  ParamVector b(5);
  b << 5.0, 1.4, 1.4, 1.4, 1.4;
  return b;
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t rep,
                            Purpose purpose) {
  std::uint64_t state = seed;
  splitmix64(state);
  state ^= 0x51b0944f1a5ca3b7ULL * (rep + 1);
  splitmix64(state);
  state ^= 0x3c79ac492ba7b653ULL * static_cast<std::uint64_t>(purpose);
  const std::uint64_t s = splitmix64(state);
  return std::mt19937_64(s);
}

namespace {

CovariateSet model_a_observation(int p, std::mt19937_64& rng) {
  std::bernoulli_distribution bern(1.0 / p);
  CovariateSet x;
  x.family = FamilyKind::Linear;
  x.designs.push_back(SymMatrix::identity(p));
  {
    Matrix m = Matrix::Zero(p, p);
    for (int r = 0; r < p; ++r) {
      for (int c = r + 1; c < p; ++c) {
        m(r, c) = m(c, r) = bern(rng) ? 1.0 : 0.0;
      }
    }
    x.designs.push_back(SymMatrix::trusted(std::move(m)));
  }
  for (int k = 3; k <= 5; ++k) {
    const double bound = std::pow(p, 1.0 + (k - 3) / 6.0);
    std::uniform_real_distribution<double> unif(0.0, bound);
    Matrix m = Matrix::Zero(p, p);
    for (int r = 0; r < p; ++r) {
      for (int c = r + 1; c < p; ++c) {
        const double d = unif(rng);
        m(r, c) = m(c, r) = std::exp(-d * d);
      }
    }
    x.designs.push_back(SymMatrix::trusted(std::move(m)));
  }
  return x;
}

CovariateSet model_a_observation_pd(int p, std::mt19937_64& rng, double pd_floor,
                                    const ModelFamily& fam,
                                    const ParamVector& beta0) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    CovariateSet x = model_a_observation(p, rng);
    if (pd_floor < 0.0) return x;
    if (numkit::min_eigenvalue(model::eval(fam, beta0, x)) > pd_floor) return x;
  }
  throw Error("Model A rejection sampling failed to find a PD draw");
}

}  // namespace

std::vector<CovariateSet> gen_model_a(int n, int p, std::mt19937_64& rng,
                                      double pd_floor) {
  if (p < 2) throw ValidationError("p", "Model A requires p >= 2");
  const ModelFamily fam{FamilyKind::Linear, 5, p};
  const ParamVector beta0 = default_beta0();
  std::vector<CovariateSet> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.push_back(model_a_observation_pd(p, rng, pd_floor, fam, beta0));
  }
  return out;
}

std::vector<CovariateSet> gen_model_b(int n, int p, std::mt19937_64& rng) {
  std::vector<CovariateSet> out;
  out.reserve(n);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(p)));
  for (int i = 0; i < n; ++i) {
    std::vector<Vector> vs;
    vs.reserve(4);
    for (int k = 2; k <= 5; ++k) {
      Vector v(p);
      for (int j = 0; j < p; ++j) v[j] = normal(rng);
      vs.push_back(std::move(v));
    }
    out.push_back(model::from_vectors(vs, /*intercept=*/true).second);
  }
  return out;
}

MisspecifiedDraw gen_misspecified_a(int n, int p, std::mt19937_64& rng,
                                    double pd_floor) {
  MisspecifiedDraw out;
  out.truth = gen_model_a(n, p, rng, pd_floor);
  out.fitted = out.truth;
  for (CovariateSet& x : out.fitted) {
    const Matrix sq = x.designs[4].mat().array().square();
    x.designs[4] = SymMatrix::trusted(sq);
  }
  return out;
}

double sample_error(const ErrorLaw& law, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  if (law.kind == ErrorLawKind::StandardNormal) return normal(rng);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double sigma = unif(rng) < 0.1 ? std::sqrt(5.0) : std::sqrt(5.0 / 9.0);
  return sigma * normal(rng);
}

Vector draw_errors(int p, const ErrorLaw& law, std::mt19937_64& rng) {
  Vector eps(p);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (law.kind == ErrorLawKind::StandardNormal) {
    for (int j = 0; j < p; ++j) eps[j] = normal(rng);
    return eps;
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int j = 0; j < p; ++j) {
    const double sigma = unif(rng) < 0.1 ? std::sqrt(5.0) : std::sqrt(5.0 / 9.0);
    eps[j] = sigma * normal(rng);
  }
  return eps;
}

Vector draw_response(const SymMatrix& sqrt_c, const ErrorLaw& law,
                     std::mt19937_64& rng) {
  return sqrt_c.mat() * draw_errors(sqrt_c.dim(), law, rng);
}

Vector draw_response(const ModelFamily& family, const ParamVector& beta0,
                     const CovariateSet& x, const ErrorLaw& law,
                     std::mt19937_64& rng) {
  return draw_response(numkit::sym_sqrt(model::eval(family, beta0, x)), law, rng);
}

SimReport run_study(const SimConfig& config) {
  config.validate();
  RepInputs in;
  in.config = &config;
  in.beta0 = default_beta0();
  in.family = ModelFamily{FamilyKind::Linear, 5, config.p};

  if (config.x_setting == XSetting::FixedX) {
    std::mt19937_64 rng = make_stream(config.seed, 0, Purpose::FixedCovariates);
    DrawnCovariates xs = draw_covariates(config.model, config.n, config.p, rng);
    in.fixed_truth = std::move(xs.truth);
    in.fixed_fitted = std::move(xs.fitted);
  }

  std::vector<RepOutcome> outcomes(config.reps);
  {
    std::atomic<int> next{0};
    const int workers = std::min(config.workers, config.reps);
    auto run = [&]() {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= config.reps) return;
        outcomes[r] = run_rep(in, r);
      }
    };
    if (workers <= 1) {
      run();
    } else {
      std::vector<std::thread> pool;
      pool.reserve(workers);
      for (int w = 0; w < workers; ++w) pool.emplace_back(run);
      for (std::thread& t : pool) t.join();
    }
  }

  SimReport report;
  report.config = config;
  report.beta0 = in.beta0;
  report.sd_degenerate = config.reps == 1;

  const int E = static_cast<int>(config.estimators.size());
  const int K = in.family.K;
  const int C = static_cast<int>(config.criteria.size());

  std::vector<std::vector<Welford>> comp(E, std::vector<Welford>(K));
  std::vector<std::vector<Welford>> sqdev(E, std::vector<Welford>(K));
  std::vector<Welford> s_err(E), f_err(E);
  Welford te_same, te_random, te_gap;
  std::vector<Welford> crit_mean(C), crit_vs_same(C), crit_vs_random(C);

  for (int r = 0; r < config.reps; ++r) {
    const RepOutcome& o = outcomes[r];
    if (o.failed) {
      ++report.failures;
      report.failure_messages.push_back("rep " + std::to_string(r) + ": " +
                                        o.message);
      continue;
    }
    ++report.reps_completed;
    for (int e = 0; e < E; ++e) {
      for (int k = 0; k < K; ++k) {
        comp[e][k].add(o.beta[e][k]);
        const double d = o.beta[e][k] - in.beta0[k];
        sqdev[e][k].add(d * d);
      }
      s_err[e].add(o.s_err[e]);
      f_err[e].add(o.f_err[e]);
    }
    if (!std::isnan(o.te_same)) te_same.add(o.te_same);
    if (!std::isnan(o.te_random)) {
      te_random.add(o.te_random);
      te_gap.add(o.te_random - o.te_same);
    }
    for (int c = 0; c < C; ++c) {
      crit_mean[c].add(o.crit[c]);
      if (!std::isnan(o.te_same)) crit_vs_same[c].add(o.crit[c] - o.te_same);
      if (!std::isnan(o.te_random)) {
        crit_vs_random[c].add(o.crit[c] - o.te_random);
      }
    }
  }

  if (report.failures > config.max_failure_rate * config.reps) {
    throw StudyQualityError(report.failures, config.reps);
  }

  for (int e = 0; e < E; ++e) {
    EstimatorSummary es;
    es.kind = config.estimators[e];
    es.components.resize(K);
    for (int k = 0; k < K; ++k) {
      es.components[k].bias = comp[e][k].mean() - in.beta0[k];
      es.components[k].sd = comp[e][k].sd();
      es.components[k].rmse = std::sqrt(sqdev[e][k].mean());
    }
    es.mean_s_error = s_err[e].mean();
    es.mean_f_error = f_err[e].mean();
    report.estimators.push_back(std::move(es));
  }

  if (te_same.count > 0) {
    report.test_errors.available = true;
    if (config.x_setting == XSetting::FixedX) {
      report.test_errors.err_fixed = te_same.mean();
      report.test_errors.se_fixed = te_same.se();
    } else {
      report.test_errors.err_same = te_same.mean();
      report.test_errors.se_same = te_same.se();
      report.test_errors.err_random = te_random.mean();
      report.test_errors.se_random = te_random.se();
      report.test_errors.gap_random_same = te_gap.mean();
      report.test_errors.se_gap = te_gap.se();
    }
  }

  for (int c = 0; c < C; ++c) {
    CriterionSummary cs;
    cs.name = config.criteria[c];
    cs.mean = crit_mean[c].mean();
    cs.mc_se = crit_mean[c].se();
    cs.bias_vs_same = crit_vs_same[c].mean();
    cs.se_bias_vs_same = crit_vs_same[c].se();
    if (crit_vs_random[c].count > 0) {
      cs.bias_vs_random = crit_vs_random[c].mean();
      cs.se_bias_vs_random = crit_vs_random[c].se();
    } else {
      cs.bias_vs_random = kNaN;
      cs.se_bias_vs_random = kNaN;
    }
    report.criteria.push_back(std::move(cs));
  }

  return report;
}

}  // namespace simulate
}  // namespace covreg
