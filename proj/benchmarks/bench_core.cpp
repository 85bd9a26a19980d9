#include <benchmark/benchmark.h>

#include <vector>

#include "eqco/encoder.hpp"
#include "eqco/infonce.hpp"
#include "eqco/mi.hpp"

namespace {

using namespace eqco;

RealVec unit(SeededRng& rng, std::size_t dim) { return l2_normalize(sample_std_gaussian(rng, dim)); }

QueryInstance make_instance(std::size_t dim, std::size_t k) {
  SeededRng rng(1);
  QueryInstance inst{unit(rng, dim), unit(rng, dim), {}};
  for (std::size_t i = 0; i < k; ++i) inst.negs.push_back(unit(rng, dim));
  return inst;
}

void BM_LossForward(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto inst = make_instance(32, k);
  const LossConfig cfg{0.2, EqCoMargin{256.0}, k};
  for (auto _ : state) benchmark::DoNotOptimize(infonce_forward(inst, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(k));
}
BENCHMARK(BM_LossForward)->RangeMultiplier(4)->Range(4, 4096);

void BM_LossGrad(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto inst = make_instance(32, k);
  const LossConfig cfg{0.2, EqCoMargin{256.0}, k};
  for (auto _ : state) benchmark::DoNotOptimize(infonce_grad(inst, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(k));
}
BENCHMARK(BM_LossGrad)->RangeMultiplier(4)->Range(4, 4096);

void BM_SimilarityLoss(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  SeededRng rng(2);
  std::vector<double> sims(k);
  for (auto& s : sims) s = 2.0 * rng.uniform() - 1.0;
  const LossConfig cfg{0.2, EqCoMargin{256.0}, k};
  for (auto _ : state) benchmark::DoNotOptimize(infonce_from_similarities(0.5, sims, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(k));
}
BENCHMARK(BM_SimilarityLoss)->RangeMultiplier(4)->Range(4, 4096);

void BM_EncodeBatch(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  SeededRng rng(3);
  const std::vector<std::size_t> dims{16, 64, 64, 32};
  const MlpParams params = init_params(rng, dims);
  RealMat x(16, n);
  for (Eigen::Index c = 0; c < n; ++c) x.col(c) = sample_std_gaussian(rng, 16);
  for (auto _ : state) benchmark::DoNotOptimize(encode_batch(params, x));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_EncodeBatch)->RangeMultiplier(4)->Range(16, 256);

void BM_EncodeBackward(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  SeededRng rng(4);
  const std::vector<std::size_t> dims{16, 64, 64, 32};
  const MlpParams params = init_params(rng, dims);
  RealMat x(16, n);
  for (Eigen::Index c = 0; c < n; ++c) x.col(c) = sample_std_gaussian(rng, 16);
  const auto enc = encode_batch(params, x);
  RealMat upstream(32, n);
  for (Eigen::Index c = 0; c < n; ++c) upstream.col(c) = sample_std_gaussian(rng, 32);
  for (auto _ : state) benchmark::DoNotOptimize(encode_batch_backward(params, enc.cache, upstream));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_EncodeBackward)->RangeMultiplier(4)->Range(16, 256);

void BM_TheoreticalBound(benchmark::State& state) {
  const CorrelatedGaussian dist{1, 0.9};
  for (auto _ : state) {
    SeededRng rng(5);
    benchmark::DoNotOptimize(theoretical_bound_mc(dist, 512.0, 10000, rng));
  }
}
BENCHMARK(BM_TheoreticalBound);

}  // namespace

BENCHMARK_MAIN();
