#ifndef COVREG_SIMULATE_HPP
#define COVREG_SIMULATE_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "covreg/assess.hpp"
#include "covreg/inference.hpp"

namespace covreg {

enum class ErrorLawKind { StandardNormal, NormalMixture };

/// Error distribution of the standardized coordinates.  The mixture
/// 0.9 N(0, 5/9) + 0.1 N(0, 5) has unit variance and fourth moment 25/3.
struct ErrorLaw {
  ErrorLawKind kind = ErrorLawKind::StandardNormal;

  double mu4() const {
    return kind == ErrorLawKind::StandardNormal ? 3.0 : 25.0 / 3.0;
  }
  ErrorMoments moments() const { return ErrorMoments::pooled(mu4()); }
};

enum class XSetting { FixedX, RandomX };
enum class SimModel { A, B, AMisspecified };

std::string to_string(ErrorLawKind law);
std::string to_string(XSetting s);
std::string to_string(SimModel m);

struct SimConfig {
  SimModel model = SimModel::A;
  int n = 50;
  int p = 5;
  int reps = 500;
  XSetting x_setting = XSetting::RandomX;
  ErrorLawKind error_law = ErrorLawKind::NormalMixture;
  std::vector<EstimatorKind> estimators;
  /// Any of: cp, cp_hat, rcp, rcp_hat, ocv.
  std::vector<std::string> criteria;
  /// Loss weight for the criteria and test errors: the pseudo-inverse of
  /// the true conditional covariance, or the identity.
  WeightSpec::Kind criteria_weight = WeightSpec::Kind::KnownV;
  /// Also estimate the expected test errors when no criteria are requested.
  bool with_test_errors = true;
  std::uint64_t seed = 0;
  int workers = 1;
  double max_failure_rate = 0.05;
  FitOptions fit;

  void validate() const;
};

struct ComponentStats {
  double bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
};

struct EstimatorSummary {
  EstimatorKind kind = EstimatorKind::OLS;
  std::vector<ComponentStats> components;
  double mean_s_error = 0.0;
  double mean_f_error = 0.0;
};

struct CriterionSummary {
  std::string name;
  double mean = 0.0;
  double mc_se = 0.0;
  /// Paired bias against the empirical Same-X / Random-X test errors.
  double bias_vs_same = 0.0;
  double se_bias_vs_same = 0.0;
  double bias_vs_random = 0.0;
  double se_bias_vs_random = 0.0;
};

struct TestErrorSummary {
  bool available = false;
  /// Fixed-X runs fill err_fixed; Random-X runs fill err_same and err_random.
  double err_fixed = 0.0;
  double err_same = 0.0;
  double err_random = 0.0;
  double se_fixed = 0.0;
  double se_same = 0.0;
  double se_random = 0.0;
  /// Paired gap mean(TeR - TeS) and its Monte Carlo standard error.
  double gap_random_same = 0.0;
  double se_gap = 0.0;
};

struct SimReport {
  SimConfig config;
  ParamVector beta0;
  int reps_completed = 0;
  int failures = 0;
  std::vector<std::string> failure_messages;  // one per failed rep
  bool sd_degenerate = false;                 // reps == 1
  std::vector<EstimatorSummary> estimators;
  TestErrorSummary test_errors;
  std::vector<CriterionSummary> criteria;
};

namespace simulate {

/// True parameter of the simulation models: (5, 1.4, 1.4, 1.4, 1.4).
ParamVector default_beta0();

/// RNG stream purposes; streams are keyed by (seed, rep, purpose) so that
/// adding estimators or criteria never perturbs other draws.
enum class Purpose : std::uint64_t {
  FixedCovariates = 1,
  TrainCovariates = 2,
  TrainNoise = 3,
  TestCovariates = 4,
  TestNoise = 5,
  TestNoiseRandom = 6,
};

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t rep, Purpose purpose);

/// Model A designs: X1 = I, X2 symmetric Bernoulli(1/p) with zero diagonal,
/// X3..X5 symmetric exp(-d^2) entries with d ~ U(0, p^{1+(k-3)/6}).
/// A small fraction of raw draws makes C_{beta0} indefinite or barely
/// definite, where the response draw Y = C^{1/2} eps is undefined or the
/// true weight V^- unbounded; such observations are redrawn until
/// min eig C_{beta0}(X) > pd_floor, one tenth of the intercept eigenvalue
/// (about 4.6% of raw draws at p = 5; disable with pd_floor < 0).
std::vector<CovariateSet> gen_model_a(int n, int p, std::mt19937_64& rng,
                                      double pd_floor = 0.5);

/// Model B designs: rank-one x x' blocks from N(0, 1/p) vectors plus an
/// identity intercept.
std::vector<CovariateSet> gen_model_b(int n, int p, std::mt19937_64& rng);

struct MisspecifiedDraw {
  std::vector<CovariateSet> truth;   // uses X5
  std::vector<CovariateSet> fitted;  // X5 replaced by its elementwise square
};

MisspecifiedDraw gen_misspecified_a(int n, int p, std::mt19937_64& rng,
                                    double pd_floor = 0.5);

double sample_error(const ErrorLaw& law, std::mt19937_64& rng);
Vector draw_errors(int p, const ErrorLaw& law, std::mt19937_64& rng);

/// Y = C^{1/2} eps for a precomputed square root.
Vector draw_response(const SymMatrix& sqrt_c, const ErrorLaw& law,
                     std::mt19937_64& rng);

Vector draw_response(const ModelFamily& family, const ParamVector& beta0,
                     const CovariateSet& x, const ErrorLaw& law,
                     std::mt19937_64& rng);

/// Runs the Monte Carlo study.  Deterministic for a fixed seed and config
/// regardless of worker count.  Throws StudyQualityError when more than
/// max_failure_rate of the replications fail.
SimReport run_study(const SimConfig& config);

}  // namespace simulate
}  // namespace covreg

#endif  // COVREG_SIMULATE_HPP
