// Serial reference kernels against the OpenMP versions on model-sized shapes.
// Run with --benchmark_counters_tabular=true for a compact table.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "wdnet/kernels.hpp"

namespace k = wdnet::kernels;

namespace {

std::vector<float> noise(std::size_t n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

// Module-sized conv: width 64 at 64x64 (a 256x256 image at level 2), batch 4.
k::ConvGeometry conv_geometry(int dilation) {
    k::ConvGeometry g;
    g.batch = 4;
    g.in_ch = g.out_ch = 64;
    g.in_h = g.in_w = 64;
    g.dilation = dilation;
    g.pad = dilation;
    return g;
}

struct ConvData {
    k::ConvGeometry g;
    std::vector<float> in, w, b, out, grad_out, grad_in, grad_w, grad_b;
    explicit ConvData(int dilation) : g(conv_geometry(dilation)) {
        const std::size_t out_n = std::size_t(g.batch) * g.out_ch * g.out_h() * g.out_w();
        in = noise(std::size_t(g.batch) * g.in_ch * g.in_h * g.in_w, 1);
        w = noise(std::size_t(g.out_ch) * g.in_ch * g.k_h * g.k_w, 2);
        b = noise(g.out_ch, 3);
        out.resize(out_n);
        grad_out = noise(out_n, 4);
        grad_in.resize(in.size());
        grad_w.resize(w.size());
        grad_b.resize(b.size());
    }
};

template <bool Parallel>
void BM_conv_forward(benchmark::State& state) {
    ConvData d(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        if constexpr (Parallel) k::conv2d_forward(d.g, d.in.data(), d.w.data(), d.b.data(), d.out.data());
        else k::reference::conv2d_forward(d.g, d.in.data(), d.w.data(), d.b.data(), d.out.data());
        benchmark::DoNotOptimize(d.out.data());
    }
    state.counters["threads"] = Parallel ? k::max_threads() : 1;
}

template <bool Parallel>
void BM_conv_backward(benchmark::State& state) {
    ConvData d(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::conv2d_backward(d.g, d.in.data(), d.w.data(), d.grad_out.data(), d.grad_in.data(), d.grad_w.data(),
                               d.grad_b.data());
        } else {
            k::reference::conv2d_backward(d.g, d.in.data(), d.w.data(), d.grad_out.data(), d.grad_in.data(),
                                          d.grad_w.data(), d.grad_b.data());
        }
        benchmark::DoNotOptimize(d.grad_in.data());
    }
    state.counters["threads"] = Parallel ? k::max_threads() : 1;
}

// One diagonal recurrent sweep of the attention module: 32 channels at 64x64.
template <bool Parallel>
void BM_sweep(benchmark::State& state) {
    const int b = 4, c = 32, h = 64, w = 64;
    const auto x = noise(std::size_t(b) * c * h * w, 5), wt = noise(c, 6), gh = noise(x.size(), 7);
    std::vector<float> hid(x.size()), gx(x.size()), gw(c);
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::sweep_forward(b, c, h, w, 1, 1, x.data(), wt.data(), hid.data());
            k::sweep_backward(b, c, h, w, 1, 1, x.data(), wt.data(), hid.data(), gh.data(), gx.data(), gw.data());
        } else {
            k::reference::sweep_forward(b, c, h, w, 1, 1, x.data(), wt.data(), hid.data());
            k::reference::sweep_backward(b, c, h, w, 1, 1, x.data(), wt.data(), hid.data(), gh.data(), gx.data(),
                                         gw.data());
        }
        benchmark::DoNotOptimize(gx.data());
    }
}

// Forward and inverse packet transform of a 256x256 RGB batch of 8.
template <bool Parallel>
void BM_haar(benchmark::State& state) {
    const int planes = 8 * 3, side = 256, level = static_cast<int>(state.range(0));
    const auto in = noise(std::size_t(planes) * side * side, 8);
    std::vector<float> bands(in.size()), back(in.size());
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::haar_packet_forward(planes, side, side, level, in.data(), bands.data());
            k::haar_packet_inverse(planes, side, side, level, bands.data(), back.data());
        } else {
            k::reference::haar_packet_forward(planes, side, side, level, in.data(), bands.data());
            k::reference::haar_packet_inverse(planes, side, side, level, bands.data(), back.data());
        }
        benchmark::DoNotOptimize(back.data());
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * 4 * in.size() * sizeof(float));
}

}  // namespace

BENCHMARK(BM_conv_forward<false>)->Name("conv_forward/serial")->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_forward<true>)->Name("conv_forward/parallel")->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_backward<false>)->Name("conv_backward/serial")->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_backward<true>)->Name("conv_backward/parallel")->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sweep<false>)->Name("sweep/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sweep<true>)->Name("sweep/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_haar<false>)->Name("haar/serial")->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_haar<true>)->Name("haar/parallel")->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
