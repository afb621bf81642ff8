// Serial vs OpenMP kernels. Args: samples, history steps.
//   ./aquamon_bench --benchmark_filter=predict

#include <benchmark/benchmark.h>

#include <cstring>
#include <numeric>

#include "aquamon/forecast/kernels.hpp"
#include "aquamon/forecast/model.hpp"
#include "aquamon/forecast/window.hpp"
#include "aquamon/rng.hpp"

using namespace aquamon;
using namespace aquamon::forecast;

namespace {

struct Fixture {
    CnnModel model;
    std::vector<double> inputs;
    std::vector<double> targets;
    std::vector<std::size_t> indices;

    Fixture(std::size_t samples, std::size_t history) : model(make_spec(history)) {
        init_parameters(model, 11);
        Rng rng(5);
        const auto& spec = model.spec();
        inputs.resize(samples * spec.history_steps * spec.channels());
        targets.resize(samples * spec.horizon_steps);
        for (auto& x : inputs) x = rng.normal();
        for (auto& x : targets) x = rng.normal();
        indices.resize(samples);
        std::iota(indices.begin(), indices.end(), std::size_t{0});
    }

    static WindowSpec make_spec(std::size_t history) {
        auto s = default_window_spec(MetricKind::temperature);
        s.history_steps = history;
        return s;
    }

    kernels::NetView net() const { return kernels::NetView::of(model); }
};

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void BM_batch_gradient(benchmark::State& state, kernels::Policy policy) {
    const Fixture f(state.range(0), state.range(1));
    const auto net = f.net();
    std::vector<double> grad(f.model.param_count()), reference(grad.size());
    kernels::batch_gradient(kernels::Policy::serial, net, f.inputs, f.targets, f.indices, reference);
    kernels::batch_gradient(policy, net, f.inputs, f.targets, f.indices, grad);
    if (!same_bits(grad, reference)) state.SkipWithError("gradient differs from the serial kernel");
    for (auto _ : state) {
        benchmark::DoNotOptimize(kernels::batch_gradient(policy, net, f.inputs, f.targets, f.indices, grad));
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_predict_batch(benchmark::State& state, kernels::Policy policy) {
    const Fixture f(state.range(0), state.range(1));
    const auto net = f.net();
    std::vector<double> out(f.targets.size()), reference(out.size());
    kernels::predict_batch(kernels::Policy::serial, net, f.inputs, reference);
    kernels::predict_batch(policy, net, f.inputs, out);
    if (!same_bits(out, reference)) state.SkipWithError("predictions differ from the serial kernel");
    for (auto _ : state) {
        kernels::predict_batch(policy, net, f.inputs, out);
        benchmark::DoNotOptimize(out.data());
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_dataset_loss(benchmark::State& state, kernels::Policy policy) {
    const Fixture f(state.range(0), state.range(1));
    const auto net = f.net();
    const double reference = kernels::dataset_loss(kernels::Policy::serial, net, f.inputs, f.targets);
    if (kernels::dataset_loss(policy, net, f.inputs, f.targets) != reference) {
        state.SkipWithError("loss differs from the serial kernel");
    }
    for (auto _ : state) benchmark::DoNotOptimize(kernels::dataset_loss(policy, net, f.inputs, f.targets));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void sizes(benchmark::internal::Benchmark* b) {
    for (long n : {256, 4096}) {
        for (long h : {3, 36}) b->Args({n, h});
    }
    b->ArgNames({"samples", "history"})->Unit(benchmark::kMicrosecond)->UseRealTime();
}

}  // namespace

BENCHMARK_CAPTURE(BM_batch_gradient, serial, kernels::Policy::serial)->Apply(sizes);
BENCHMARK_CAPTURE(BM_batch_gradient, parallel, kernels::Policy::parallel)->Apply(sizes);
BENCHMARK_CAPTURE(BM_predict_batch, serial, kernels::Policy::serial)->Apply(sizes);
BENCHMARK_CAPTURE(BM_predict_batch, parallel, kernels::Policy::parallel)->Apply(sizes);
BENCHMARK_CAPTURE(BM_dataset_loss, serial, kernels::Policy::serial)->Apply(sizes);
BENCHMARK_CAPTURE(BM_dataset_loss, parallel, kernels::Policy::parallel)->Apply(sizes);

BENCHMARK_MAIN();
