// Serial reference kernels vs the OpenMP kernels used by the network.

#include <benchmark/benchmark.h>

#include "atnet/kernels.hpp"
#include "atnet/network.hpp"
#include "atnet/rng.hpp"

using namespace atnet;

namespace {

Tensor random_tensor(int c, int h, int w, std::uint64_t seed) {
    SeededRng rng(seed);
    Tensor t(c, h, w);
    for (double& v : t.data) v = rng.normal();
    return t;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
    SeededRng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

struct ConvCase {
    ConvShape shape;
    Tensor input;
    Tensor grad;
    std::vector<double> weight;
    std::vector<double> bias;

    explicit ConvCase(const benchmark::State& state)
        : shape{static_cast<int>(state.range(0)), static_cast<int>(state.range(0)), static_cast<int>(state.range(2))},
          input(random_tensor(shape.in_channels, state.range(1), state.range(1), 1)),
          grad(random_tensor(shape.out_channels, state.range(1), state.range(1), 2)),
          weight(random_vector(shape.weight_count(), 3)),
          bias(random_vector(shape.out_channels, 4)) {}

    void count(benchmark::State& state) const {
        state.counters["MAC/s"] = benchmark::Counter(
            static_cast<double>(shape.weight_count()) * input.plane_size() * state.iterations(),
            benchmark::Counter::kIsRate);
    }
};

template <bool Reference>
void BM_conv_forward(benchmark::State& state) {
    ConvCase c(state);
    for (auto _ : state) {
        Tensor out = Reference ? kernels::reference::conv2d(c.input, c.weight, c.bias, c.shape)
                               : kernels::conv2d(c.input, c.weight, c.bias, c.shape);
        benchmark::DoNotOptimize(out.data.data());
    }
    c.count(state);
}

template <bool Reference>
void BM_conv_backward_input(benchmark::State& state) {
    ConvCase c(state);
    for (auto _ : state) {
        Tensor out = Reference ? kernels::reference::conv2d_backward_input(c.grad, c.weight, c.shape)
                               : kernels::conv2d_backward_input(c.grad, c.weight, c.shape);
        benchmark::DoNotOptimize(out.data.data());
    }
    c.count(state);
}

template <bool Reference>
void BM_conv_backward_params(benchmark::State& state) {
    ConvCase c(state);
    std::vector<double> gw(c.shape.weight_count()), gb(c.shape.out_channels);
    for (auto _ : state) {
        if (Reference)
            kernels::reference::conv2d_backward_params(c.input, c.grad, c.shape, gw, gb);
        else
            kernels::conv2d_backward_params(c.input, c.grad, c.shape, gw, gb);
        benchmark::DoNotOptimize(gw.data());
    }
    c.count(state);
}

template <bool Reference>
void BM_upsample(benchmark::State& state) {
    const Tensor x = random_tensor(64, state.range(0), state.range(0), 5);
    for (auto _ : state) {
        Tensor out = Reference ? kernels::reference::upsample2x(x, UpsampleMode::bilinear)
                               : kernels::upsample2x(x, UpsampleMode::bilinear);
        benchmark::DoNotOptimize(out.data.data());
    }
}

void BM_prior_network_step(benchmark::State& state) {
    const NetworkSpec spec = build_atnet1_spec();
    const ParameterStore params = init_parameters(spec, 1);
    const Tensor x = random_tensor(3, state.range(0), state.range(0), 2);
    for (auto _ : state) {
        SeededRng rng(3);
        GradientResult r = compute_gradients(spec, params, x, ForwardMode::train, &rng, [](const Tensor& out, Tensor& g) {
            g = Tensor(out.channels, out.height, out.width, 1.0);
            return 0.0;
        });
        benchmark::DoNotOptimize(r.grads.values.data());
    }
}

// {channels, side, kernel}
#define CONV_ARGS ->Args({16, 64, 3})->Args({64, 32, 3})->Args({64, 16, 1})->Unit(benchmark::kMicrosecond)

BENCHMARK(BM_conv_forward<true>) CONV_ARGS;
BENCHMARK(BM_conv_forward<false>) CONV_ARGS;
BENCHMARK(BM_conv_backward_input<true>) CONV_ARGS;
BENCHMARK(BM_conv_backward_input<false>) CONV_ARGS;
BENCHMARK(BM_conv_backward_params<true>) CONV_ARGS;
BENCHMARK(BM_conv_backward_params<false>) CONV_ARGS;
BENCHMARK(BM_upsample<true>)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_upsample<false>)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_prior_network_step)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
