// Production (OpenMP) kernels against the serial reference loops.
// Shapes follow the first layers of the desk preset at batch 32.

#include <benchmark/benchmark.h>

#include <vector>

#include "docstyle/kernels.hpp"
#include "docstyle/random.hpp"

namespace k = docstyle::kernels;
namespace ref = docstyle::kernels::reference;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  docstyle::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

std::vector<double> random_doubles(std::size_t n, std::uint64_t seed) {
  docstyle::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// 64x64 input, 15x15x20 stride 2 pad 7.
k::ConvGeometry conv_geometry() {
  k::ConvGeometry g;
  g.batch = 32;
  g.in_channels = 1;
  g.in_h = g.in_w = 64;
  g.out_channels = 20;
  g.kernel_h = g.kernel_w = 15;
  g.stride = 2;
  g.pad = 7;
  g.out_h = g.out_w = (64 + 2 * 7 - 15) / 2 + 1;
  return g;
}

struct ConvData {
  k::ConvGeometry g = conv_geometry();
  std::vector<float> x = random_floats(g.batch * g.in_sample(), 1);
  std::vector<float> w = random_floats(g.out_channels * g.patch_size(), 2);
  std::vector<float> b = random_floats(g.out_channels, 3);
  std::vector<float> dy = random_floats(g.batch * g.out_sample(), 4);
  std::vector<float> y = std::vector<float>(g.batch * g.out_sample());
  std::vector<float> dx = std::vector<float>(x.size());
  std::vector<float> dw = std::vector<float>(w.size());
  std::vector<float> db = std::vector<float>(b.size());
};

template <bool Reference>
void BM_ConvForward(benchmark::State& state) {
  ConvData d;
  for (auto _ : state) {
    if constexpr (Reference) {
      ref::conv2d_forward<float>(d.g, d.x, d.w, d.b, d.y);
    } else {
      k::conv2d_forward<float>(d.g, d.x, d.w, d.b, d.y);
    }
    benchmark::DoNotOptimize(d.y.data());
  }
}

template <bool Reference>
void BM_ConvBackward(benchmark::State& state) {
  ConvData d;
  for (auto _ : state) {
    if constexpr (Reference) {
      ref::conv2d_backward<float>(d.g, d.x, d.w, d.dy, d.dx, d.dw, d.db);
    } else {
      k::conv2d_backward<float>(d.g, d.x, d.w, d.dy, d.dx, d.dw, d.db);
    }
    benchmark::DoNotOptimize(d.dw.data());
  }
}

// 3200 -> 1000 fully connected layer.
template <bool Reference>
void BM_Dense(benchmark::State& state) {
  const k::DenseGeometry g{32, 3200, 1000};
  const auto x = random_floats(g.batch * g.in, 5);
  const auto w = random_floats(g.in * g.out, 6);
  const auto b = random_floats(g.out, 7);
  const auto dy = random_floats(g.batch * g.out, 8);
  std::vector<float> y(g.batch * g.out), dx(x.size()), dw(w.size()), db(b.size());
  for (auto _ : state) {
    if constexpr (Reference) {
      ref::dense_forward<float>(g, x, w, b, y);
      ref::dense_backward<float>(g, x, w, dy, dx, dw, db);
    } else {
      k::dense_forward<float>(g, x, w, b, y);
      k::dense_backward<float>(g, x, w, dy, dx, dw, db);
    }
    benchmark::DoNotOptimize(dw.data());
  }
}

// 200 queries against 2000 items of 128 dims.
template <bool Reference>
void BM_SquaredDistances(benchmark::State& state) {
  const std::size_t nq = 200, nb = 2000, dim = 128;
  const auto q = random_doubles(nq * dim, 9);
  const auto b = random_doubles(nb * dim, 10);
  std::vector<double> out(nq * nb);
  for (auto _ : state) {
    if constexpr (Reference) {
      ref::squared_distances(q, nq, b, nb, dim, out);
    } else {
      k::squared_distances(q, nq, b, nb, dim, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Dense<false>)->Name("dense/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Dense<true>)->Name("dense/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SquaredDistances<false>)->Name("squared_distances/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SquaredDistances<true>)->Name("squared_distances/reference")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
