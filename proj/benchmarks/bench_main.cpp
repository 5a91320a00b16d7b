#include <benchmark/benchmark.h>

#include "arithlab/evaluation.hpp"
#include "arithlab/lrmc.hpp"
#include "arithlab/sampling.hpp"
#include "arithlab/training.hpp"

using namespace arithlab;

static void BM_RenderDetailed(benchmark::State& state) {
    ArithProblem p = make_add(396, 262);
    FormatSpec spec;
    spec.kind = FormatKind::detailed_scratchpad;
    for (auto _ : state) benchmark::DoNotOptimize(render(p, spec));
}
BENCHMARK(BM_RenderDetailed);

static void BM_BalancedDataset(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(build_balanced_addition(state.range(0), 1));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BalancedDataset)->Arg(1000)->Arg(10000);

static void BM_ForwardBackward(benchmark::State& state) {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_embed = static_cast<int>(state.range(0));
    cfg.context_length = 64;
    cfg.vocab_size = 14;
    cfg.dropout = 0.0f;
    GptModel model(cfg, 1);
    Rng rng(2);
    int batch = 8, seq = 64;
    std::vector<uint16_t> x(static_cast<size_t>(batch) * seq), y(x.size());
    for (auto& t : x) t = static_cast<uint16_t>(rng.below(14));
    for (auto& t : y) t = static_cast<uint16_t>(rng.below(14));
    for (auto _ : state) {
        model.zero_grads();
        benchmark::DoNotOptimize(model.step_loss(x, y, batch, seq, {}, true, 1.0, nullptr));
    }
    state.SetItemsProcessed(state.iterations() * batch * seq);
}
BENCHMARK(BM_ForwardBackward)->Arg(64)->Arg(128);

static void BM_LrmcTrial(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    std::vector<double> truth = addition_matrix(n);
    Rng rng(3);
    for (auto _ : state) {
        MaskedMatrix mm = masked_addition_matrix(n, 10 * n, rng);
        benchmark::DoNotOptimize(complete_rank2(mm, FillRule::additive, &truth));
    }
}
BENCHMARK(BM_LrmcTrial)->Arg(20)->Arg(50);

static void BM_OracleEvaluate(benchmark::State& state) {
    FormatSpec spec;
    spec.kind = FormatKind::reverse;
    OracleCompleter oracle(spec);
    Dataset train = build_balanced_addition(500, 4);
    Dataset test = build_test_set(Op::add, 500, 3, train, 5);
    for (auto _ : state) benchmark::DoNotOptimize(evaluate(oracle, test, spec));
    state.SetItemsProcessed(state.iterations() * 500);
}
BENCHMARK(BM_OracleEvaluate);

BENCHMARK_MAIN();
