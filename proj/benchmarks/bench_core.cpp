#include <benchmark/benchmark.h>

#include "sosr/embedding.hpp"
#include "sosr/eval.hpp"
#include "sosr/loss.hpp"
#include "sosr/random.hpp"
#include "sosr/vmf.hpp"

namespace {

sosr::Matrix random_rows(std::size_t n, std::size_t q, std::uint64_t seed) {
  sosr::Rng rng(seed);
  sosr::Matrix m(n, q);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = sosr::sample_uniform_sphere(q, rng);
    std::copy(x.values().begin(), x.values().end(), m.row(i).begin());
  }
  return m;
}

sosr::PairBatch random_batch(std::size_t n, std::size_t q) {
  std::vector<sosr::Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<sosr::Label>(i);
  return sosr::PairBatch::from_rows(random_rows(n, q, 1), random_rows(n, q, 2), std::move(labels));
}

void BM_PairwiseDistances(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_rows(n, 128, 1);
  const auto b = random_rows(n, 128, 2);
  for (auto _ : state) benchmark::DoNotOptimize(sosr::pairwise_distances(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n));
}
BENCHMARK(BM_PairwiseDistances)->RangeMultiplier(2)->Range(64, 1024);

void BM_TotalLoss(benchmark::State& state) {
  const auto batch = random_batch(static_cast<std::size_t>(state.range(0)), 128);
  sosr::LossConfig cfg;
  cfg.enable_sosr = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(sosr::total_loss(batch, cfg));
}
BENCHMARK(BM_TotalLoss)->ArgsProduct({{128, 512, 2048}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_LogBesselI(benchmark::State& state) {
  const double nu = static_cast<double>(state.range(0));
  double x = 0.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sosr::log_bessel_i(nu, x));
    x = x < 5000.0 ? x * 1.37 : 0.5;
  }
}
BENCHMARK(BM_LogBesselI)->Arg(0)->Arg(63);

void BM_BesselRatioA(benchmark::State& state) {
  double kappa = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sosr::bessel_ratio_A(128, kappa));
    kappa = kappa < 1e5 ? kappa * 1.7 : 0.1;
  }
}
BENCHMARK(BM_BesselRatioA);

void BM_SampleVmf(benchmark::State& state) {
  std::vector<double> mu(static_cast<std::size_t>(state.range(0)), 0.0);
  mu[0] = 1.0;
  const sosr::VmfParams p{sosr::UnitDescriptor::from_unit(mu), 50.0};
  sosr::Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(sosr::sample_vmf(p, 1000, rng));
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_SampleVmf)->Arg(3)->Arg(128);

void BM_FprAtRecall(benchmark::State& state) {
  sosr::Rng rng(4);
  std::vector<double> pos(50000), neg(50000);
  for (double& d : pos) d = sosr::uniform01(rng);
  for (double& d : neg) d = 0.3 + sosr::uniform01(rng);
  for (auto _ : state) benchmark::DoNotOptimize(sosr::fpr_at_recall(pos, neg));
}
BENCHMARK(BM_FprAtRecall)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
