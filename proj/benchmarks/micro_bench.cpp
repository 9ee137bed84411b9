#include "ragtutor/embed.hpp"
#include "ragtutor/index.hpp"
#include "ragtutor/ingest.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace ragtutor;

namespace {

EmbeddingVector random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<float> g;
    std::vector<float> v(dim);
    for (auto& x : v) x = g(rng);
    return normalize(v);
}

std::string lorem(std::size_t bytes) {
    static const char* words[] = {"cache", "warp", "rank", "thread", "kernel", "memory", "latency", "speedup"};
    std::mt19937_64 rng(1);
    std::string s;
    while (s.size() < bytes) {
        s += words[rng() % 8];
        s += ' ';
    }
    return s;
}

} // namespace

static void BM_IndexSearch(benchmark::State& state) {
    std::mt19937_64 rng(7);
    VectorIndex index(384);
    for (int i = 0; i < state.range(0); ++i) index.add("c" + std::to_string(i), random_unit(rng, 384), {});
    const auto q = random_unit(rng, 384);
    for (auto _ : state) benchmark::DoNotOptimize(index.search(q, 4));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_IndexSearch)->Arg(1000)->Arg(10000);

static void BM_MockEmbed(benchmark::State& state) {
    const auto text = lorem(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(mock_embed(text, 384));
    state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MockEmbed)->Arg(256)->Arg(2048);

static void BM_ChunkDocument(benchmark::State& state) {
    const SourceDocument doc{"d", "d", lorem(static_cast<std::size_t>(state.range(0))), "d.md"};
    for (auto _ : state) benchmark::DoNotOptimize(chunk_document(doc, 512, 64));
    state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ChunkDocument)->Arg(1 << 16)->Arg(1 << 20);

BENCHMARK_MAIN();
