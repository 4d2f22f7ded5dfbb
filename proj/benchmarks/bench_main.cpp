#include <benchmark/benchmark.h>

#include <random>

#include "covreg/assess.hpp"
#include "covreg/estimate.hpp"
#include "covreg/inference.hpp"
#include "covreg/simulate.hpp"

using namespace covreg;

namespace {

Dataset model_a_dataset(int n, int p, std::uint64_t seed) {
  std::mt19937_64 xg = simulate::make_stream(seed, 0, simulate::Purpose::TrainCovariates);
  std::mt19937_64 ng = simulate::make_stream(seed, 0, simulate::Purpose::TrainNoise);
  Dataset d;
  d.family = ModelFamily{FamilyKind::Linear, 5, p};
  d.X = simulate::gen_model_a(n, p, xg);
  d.Y = Matrix(n, p);
  ErrorLaw law{ErrorLawKind::NormalMixture};
  ParamVector beta0 = simulate::default_beta0();
  for (int i = 0; i < n; ++i) {
    d.Y.row(i) = simulate::draw_response(d.family, beta0, d.X[i], law, ng).transpose();
  }
  return d;
}

void BM_SymSqrt(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  std::mt19937_64 g(7);
  std::normal_distribution<double> nd;
  Matrix a(p, p);
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < p; ++c) a(r, c) = nd(g);
  SymMatrix c((a * a.transpose() + p * Matrix::Identity(p, p)).eval());
  for (auto _ : state) {
    benchmark::DoNotOptimize(numkit::sym_sqrt(c));
  }
}
BENCHMARK(BM_SymSqrt)->Arg(5)->Arg(25);

void BM_InverseWeightQuadform(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  std::mt19937_64 g(8);
  std::normal_distribution<double> nd;
  Matrix a(p, p);
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < p; ++c) a(r, c) = nd(g);
  SymMatrix c((a * a.transpose() + p * Matrix::Identity(p, p)).eval());
  Weight w = Weight::inverse_cond_cov(c, ErrorMoments::pooled(25.0 / 3.0));
  Matrix r = a + a.transpose();
  for (auto _ : state) {
    benchmark::DoNotOptimize(w.quadform_sym(r));
  }
}
BENCHMARK(BM_InverseWeightQuadform)->Arg(5)->Arg(25);

void BM_FitOls(benchmark::State& state) {
  Dataset d = model_a_dataset(static_cast<int>(state.range(0)),
                              static_cast<int>(state.range(1)), 11);
  FitOptions opts;
  opts.on_nonconvergence = FitOptions::OnNonconvergence::Return;
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate::fit_ols(d, opts));
  }
}
BENCHMARK(BM_FitOls)->Args({50, 5})->Args({100, 25});

void BM_FitGls(benchmark::State& state) {
  Dataset d = model_a_dataset(static_cast<int>(state.range(0)),
                              static_cast<int>(state.range(1)), 12);
  FitOptions opts;
  opts.on_nonconvergence = FitOptions::OnNonconvergence::Return;
  ErrorLaw law{ErrorLawKind::NormalMixture};
  ParamVector beta0 = simulate::default_beta0();
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate::fit_gls(d, beta0, law.moments(), opts));
  }
}
BENCHMARK(BM_FitGls)->Args({50, 5})->Args({100, 25});

void BM_FitQmle(benchmark::State& state) {
  Dataset d = model_a_dataset(static_cast<int>(state.range(0)),
                              static_cast<int>(state.range(1)), 13);
  FitOptions opts;
  opts.on_nonconvergence = FitOptions::OnNonconvergence::Return;
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate::fit_qmle(d, opts));
  }
}
BENCHMARK(BM_FitQmle)->Args({50, 5})->Args({100, 25});

void BM_AvarWls(benchmark::State& state) {
  Dataset d = model_a_dataset(static_cast<int>(state.range(0)),
                              static_cast<int>(state.range(1)), 14);
  ErrorLaw law{ErrorLawKind::NormalMixture};
  ParamVector beta0 = simulate::default_beta0();
  WeightSpec spec = WeightSpec::known_v(beta0, law.moments());
  std::vector<Weight> w = condvar::build_weights(spec, d);
  FitOptions opts;
  opts.on_nonconvergence = FitOptions::OnNonconvergence::Return;
  FitResult fit = estimate::fit_wls_with_weights(d, w, opts, spec);
  for (auto _ : state) {
    benchmark::DoNotOptimize(inference::avar_wls(d, fit.beta, w));
  }
}
BENCHMARK(BM_AvarWls)->Args({50, 5})->Args({100, 25});

void BM_OcvLinear(benchmark::State& state) {
  Dataset d = model_a_dataset(static_cast<int>(state.range(0)), 5, 15);
  std::vector<Weight> w(d.n(), Weight::identity(5));
  for (auto _ : state) {
    benchmark::DoNotOptimize(assess::ocv(d, w));
  }
}
BENCHMARK(BM_OcvLinear)->Arg(25)->Arg(100);

void BM_StudyRep(benchmark::State& state) {
  // Cost of one full replication: draws, GLS fit, criteria, test errors.
  SimConfig cfg;
  cfg.model = SimModel::A;
  cfg.n = 50;
  cfg.p = 5;
  cfg.reps = 1;
  cfg.error_law = ErrorLawKind::NormalMixture;
  cfg.estimators = {EstimatorKind::GLS};
  cfg.criteria = {"cp", "rcp", "ocv"};
  std::uint64_t seed = 1;
  for (auto _ : state) {
    cfg.seed = seed++;
    benchmark::DoNotOptimize(simulate::run_study(cfg));
  }
}
BENCHMARK(BM_StudyRep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
