// Parallel kernels against their serial references on the shipped layer
// shapes. Run with OMP_NUM_THREADS set to compare thread counts.

#include "reglearn/core/rng.hpp"
#include "reglearn/nnet/kernels.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

#include <vector>

using namespace reglearn;
namespace k = reglearn::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    RngStream s(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng_normal(s, 0.0, 1.0);
    return v;
}

// ---- dense --------------------------------------------------------------------

struct DenseCase {
    std::size_t batch, in, out;
    std::vector<double> x, w, b, dy, y, dw, db, dx;
    explicit DenseCase(const benchmark::State& st)
        : batch(static_cast<std::size_t>(st.range(0))),
          in(static_cast<std::size_t>(st.range(1))),
          out(static_cast<std::size_t>(st.range(2))),
          x(random_values(batch * in, 1)),
          w(random_values(out * in, 2)),
          b(random_values(out, 3)),
          dy(random_values(batch * out, 4)),
          y(batch * out),
          dw(out * in),
          db(out),
          dx(batch * in) {}
    double flops() const { return 2.0 * static_cast<double>(batch * in * out); }
};

template <bool Parallel>
void bm_dense_forward(benchmark::State& st) {
    DenseCase c(st);
    for (auto _ : st) {
        if constexpr (Parallel)
            k::dense_forward(c.batch, c.in, c.out, c.x.data(), c.w.data(), c.b.data(), c.y.data());
        else
            k::reference::dense_forward(c.batch, c.in, c.out, c.x.data(), c.w.data(), c.b.data(), c.y.data());
        benchmark::DoNotOptimize(c.y.data());
    }
    st.counters["flops"] = benchmark::Counter(c.flops(), benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Parallel>
void bm_dense_backward(benchmark::State& st) {
    DenseCase c(st);
    for (auto _ : st) {
        if constexpr (Parallel) {
            k::dense_backward_weights(c.batch, c.in, c.out, c.x.data(), c.dy.data(), c.dw.data(), c.db.data());
            k::dense_backward_input(c.batch, c.in, c.out, c.w.data(), c.dy.data(), c.dx.data());
        } else {
            k::reference::dense_backward_weights(c.batch, c.in, c.out, c.x.data(), c.dy.data(), c.dw.data(),
                                                 c.db.data());
            k::reference::dense_backward_input(c.batch, c.in, c.out, c.w.data(), c.dy.data(), c.dx.data());
        }
        benchmark::DoNotOptimize(c.dx.data());
    }
    st.counters["flops"] = benchmark::Counter(2.0 * c.flops(), benchmark::Counter::kIsIterationInvariantRate);
}

// ---- conv2d -------------------------------------------------------------------

struct ConvCase {
    k::ConvShape s;
    std::vector<double> x, w, b, dy, y, dw, db, dx;
    explicit ConvCase(const benchmark::State& st) {
        s.batch = static_cast<std::size_t>(st.range(0));
        s.in_channels = static_cast<std::size_t>(st.range(1));
        s.out_channels = static_cast<std::size_t>(st.range(2));
        s.height = s.width = static_cast<std::size_t>(st.range(3));
        s.kernel_h = s.kernel_w = static_cast<std::size_t>(st.range(4));
        s.pad = s.kernel_h / 2;
        const std::size_t out_size = s.batch * s.out_channels * s.out_height() * s.out_width();
        x = random_values(s.batch * s.in_channels * s.height * s.width, 1);
        w = random_values(s.out_channels * s.in_channels * s.kernel_h * s.kernel_w, 2);
        b = random_values(s.out_channels, 3);
        dy = random_values(out_size, 4);
        y.resize(out_size);
        dw.resize(w.size());
        db.resize(b.size());
        dx.resize(x.size());
    }
    double flops() const {
        return 2.0 * static_cast<double>(s.batch * s.out_channels * s.out_height() * s.out_width() * s.in_channels *
                                         s.kernel_h * s.kernel_w);
    }
};

template <bool Parallel>
void bm_conv_forward(benchmark::State& st) {
    ConvCase c(st);
    for (auto _ : st) {
        if constexpr (Parallel)
            k::conv2d_forward(c.s, c.x.data(), c.w.data(), c.b.data(), c.y.data());
        else
            k::reference::conv2d_forward(c.s, c.x.data(), c.w.data(), c.b.data(), c.y.data());
        benchmark::DoNotOptimize(c.y.data());
    }
    st.counters["flops"] = benchmark::Counter(c.flops(), benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Parallel>
void bm_conv_backward(benchmark::State& st) {
    ConvCase c(st);
    for (auto _ : st) {
        if constexpr (Parallel) {
            k::conv2d_backward_weights(c.s, c.x.data(), c.dy.data(), c.dw.data(), c.db.data());
            k::conv2d_backward_input(c.s, c.w.data(), c.dy.data(), c.dx.data());
        } else {
            k::reference::conv2d_backward_weights(c.s, c.x.data(), c.dy.data(), c.dw.data(), c.db.data());
            k::reference::conv2d_backward_input(c.s, c.w.data(), c.dy.data(), c.dx.data());
        }
        benchmark::DoNotOptimize(c.dx.data());
    }
    st.counters["flops"] = benchmark::Counter(2.0 * c.flops(), benchmark::Counter::kIsIterationInvariantRate);
}

// batch, in, out: the heat network's first layer and the deblur lambda head.
void dense_args(benchmark::internal::Benchmark* b) {
    b->Args({64, 100, 75})->Args({32, 2048, 32})->Unit(benchmark::kMicrosecond);
}

// batch, in_ch, out_ch, side, kernel: deblur blocks one and two, diffusion block three.
void conv_args(benchmark::internal::Benchmark* b) {
    b->Args({32, 1, 8, 64, 5})->Args({32, 8, 16, 32, 5})->Args({64, 8, 16, 14, 3})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(bm_dense_forward<false>)->Name("dense_forward/reference")->Apply(dense_args);
BENCHMARK(bm_dense_forward<true>)->Name("dense_forward/openmp")->Apply(dense_args);
BENCHMARK(bm_dense_backward<false>)->Name("dense_backward/reference")->Apply(dense_args);
BENCHMARK(bm_dense_backward<true>)->Name("dense_backward/openmp")->Apply(dense_args);
BENCHMARK(bm_conv_forward<false>)->Name("conv2d_forward/reference")->Apply(conv_args);
BENCHMARK(bm_conv_forward<true>)->Name("conv2d_forward/openmp")->Apply(conv_args);
BENCHMARK(bm_conv_backward<false>)->Name("conv2d_backward/reference")->Apply(conv_args);
BENCHMARK(bm_conv_backward<true>)->Name("conv2d_backward/openmp")->Apply(conv_args);

int main(int argc, char** argv) {
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::AddCustomContext("omp_max_threads", std::to_string(omp_get_max_threads()));
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
