// Microbenchmarks for the hot paths: Gram construction, the two estimators,
// the permutation test, and one adversarial critic step. Not part of ctest.

#include <benchmark/benchmark.h>

#include "mmdforge/data.hpp"
#include "mmdforge/kernels.hpp"
#include "mmdforge/mmd.hpp"
#include "mmdforge/networks.hpp"
#include "mmdforge/rng.hpp"
#include "mmdforge/training.hpp"

namespace {

using namespace mmdforge;

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = rng.normal();
  return out;
}

void bm_gram_mixture(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const KernelSpec kernel = KernelSpec::mixture_rbf({1, 2, 4, 8, 16});
  const Matrix x = random_matrix(n, 16, 1);
  const Matrix y = random_matrix(n, 16, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gram(x, y, kernel));
  }
  state.SetComplexityN(n);
}
BENCHMARK(bm_gram_mixture)->RangeMultiplier(2)->Range(64, 512)->Complexity();

void bm_mmd2_unbiased(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const KernelSpec kernel = KernelSpec::mixture_rbf({1, 2, 4, 8, 16});
  const Matrix x = random_matrix(n, 16, 3);
  const Matrix y = random_matrix(n, 16, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mmd2_unbiased(x, y, kernel).estimate);
  }
  state.SetComplexityN(n);
}
BENCHMARK(bm_mmd2_unbiased)->RangeMultiplier(2)->Range(64, 512)->Complexity();

void bm_permutation_test(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const KernelSpec kernel = KernelSpec::mixture_rbf({1, 2, 4, 8, 16});
  const Matrix x = random_matrix(n, 4, 5);
  const Matrix y = random_matrix(n, 4, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(permutation_test(x, y, kernel, 0.05, 200, 7).reject);
  }
}
BENCHMARK(bm_permutation_test)->Arg(64)->Arg(128)->Arg(256);

void bm_critic_step(benchmark::State& state) {
  const Eigen::Index batch = state.range(0);
  TrainConfig cfg;
  cfg.batch_size = batch;
  const DatasetSpec data;
  const NoiseSpec noise;
  const ModelShape shape;
  ModelBundle bundle =
      init_model(generator_config(shape, noise.dimension, data.dimension),
                 encoder_config(shape, data.dimension), decoder_config(shape, data.dimension),
                 1);
  Rng rng(8);
  const Matrix x = sample(data, batch, rng);
  const Matrix z = sample_noise(noise, batch, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(critic_step(bundle, x, z, cfg, rng).mmd2);
  }
}
BENCHMARK(bm_critic_step)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
