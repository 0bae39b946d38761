#include <benchmark/benchmark.h>

#include <numeric>

#include "vogcl/curriculum.hpp"
#include "vogcl/data.hpp"
#include "vogcl/graph.hpp"
#include "vogcl/metrics.hpp"
#include "vogcl/model.hpp"
#include "vogcl/rng.hpp"
#include "vogcl/vog.hpp"

using namespace vogcl;

namespace {

Tensor noise(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = uniform_open01(rng) - 0.5;
    return t;
}

// First block of the desk model: batch x 1 x 32 x 32 -> 8 filters.
void BM_Conv2dForward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const std::size_t channels = static_cast<std::size_t>(state.range(1));
    const Tensor x = noise({batch, channels, 32, 32}, 1);
    const Tensor k = noise({16, channels, 3, 3}, 2);
    for (auto _ : state) {
        Graph g;
        auto y = g.conv2d(g.leaf(x), g.leaf(k), 1, 1);
        benchmark::DoNotOptimize(g.value(y).data().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_Conv2dForward)->Args({32, 1})->Args({32, 8});

void BM_Conv2dBackward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const std::size_t channels = static_cast<std::size_t>(state.range(1));
    const Tensor x = noise({batch, channels, 32, 32}, 3);
    const Tensor k = noise({16, channels, 3, 3}, 4);
    for (auto _ : state) {
        Graph g;
        auto xi = g.leaf(x, true);
        auto ki = g.leaf(k, true);
        g.backward(g.sum(g.conv2d(xi, ki, 1, 1)));
        benchmark::DoNotOptimize(g.grad(ki).data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_Conv2dBackward)->Args({32, 1})->Args({32, 8});

void BM_SamplePermutation(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::vector<std::size_t> ranks(n);
    std::iota(ranks.begin(), ranks.end(), std::size_t{1});
    const CurriculumSchedule s(ranks, 10, CurriculumMode::curriculum);
    Rng rng(5);
    for (auto _ : state) benchmark::DoNotOptimize(sample_permutation(s, rng));
}
BENCHMARK(BM_SamplePermutation)->Arg(1392)->Arg(60000);

void BM_VogScores(benchmark::State& state) {
    SyntheticOptions o;
    o.profile = {{"normal", 128}, {"ring", 128}};
    const Dataset d = generate_synthetic(o);
    const ModelArch arch = default_arch(1, 32, 32, 2);
    std::vector<ModelCheckpoint> ck;
    for (std::size_t e = 1; e <= 3; ++e) ck.push_back(make_checkpoint(build_model(arch, e), e, 0));
    VogOptions opts;
    for (auto _ : state) benchmark::DoNotOptimize(compute_vog_scores(ck, d, opts));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.size()));
}
BENCHMARK(BM_VogScores)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    const Model m = build_model(default_arch(1, 32, 32, 2), 6);
    const Tensor batch = noise({32, 1, 32, 32}, 7);
    const std::vector<std::size_t> labels(32, 1);
    for (auto _ : state) {
        ForwardTrace t = trace_forward(m, batch, true, false);
        auto loss = t.graph.softmax_cross_entropy(t.logits, labels);
        t.graph.backward(loss);
        benchmark::DoNotOptimize(t.graph.grad(t.parameters[0]).data());
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_Auc(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(8);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = uniform_open01(rng);
        labels[i] = static_cast<int>(i % 2);
    }
    for (auto _ : state) benchmark::DoNotOptimize(auc(scores, labels));
}
BENCHMARK(BM_Auc)->Arg(473)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
