#include "del/classical.hpp"
#include "del/generate.hpp"
#include "del/kernels.hpp"
#include "del/render.hpp"
#include "del/spatial.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace del;

namespace {

ParticleSystem cloud(int n) {
    std::mt19937_64 rng(7);
    const double box = 0.02 * std::cbrt(static_cast<double>(n));
    std::uniform_real_distribution<double> u(0.0, box);
    ParticleSystem s;
    for (int i = 0; i < n; ++i) s.add(Vec3(u(rng), u(rng), u(rng)), 1.0, 0.01, i % 2, i % 4);
    return s;
}

Scene scene(int image_size) {
    auto opts = parse_generator_spec("two_ball_collision:frames=1,image_size=" + std::to_string(image_size));
    return generate_scene(opts);
}

void BM_HashGraph(benchmark::State& st) {
    const auto s = cloud(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(build_graph_hash(s, kDefaultSearchRadius));
    st.SetComplexityN(st.range(0));
}
BENCHMARK(BM_HashGraph)->RangeMultiplier(4)->Range(64, 16384)->Complexity();

void BM_BruteGraph(benchmark::State& st) {
    const auto s = cloud(static_cast<int>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(build_graph_bruteforce(s, kDefaultSearchRadius));
    st.SetComplexityN(st.range(0));
}
BENCHMARK(BM_BruteGraph)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

void BM_ClassicalForces(benchmark::State& st) {
    const auto s = cloud(static_cast<int>(st.range(0)));
    const auto g = build_graph_hash(s, kDefaultSearchRadius);
    const auto table = MaterialTable::from({MaterialParams{}, MaterialParams{}});
    for (auto _ : st) benchmark::DoNotOptimize(classical_forces(s, g, table, Vec3::Zero(), 1e-3, ClassicalConfig{}));
}
BENCHMARK(BM_ClassicalForces)->Arg(256)->Arg(2048);

void BM_LearnedForces(benchmark::State& st) {
    const auto s = cloud(static_cast<int>(st.range(0)));
    const auto g = build_graph_hash(s, kDefaultSearchRadius);
    auto m = LearnedModel::create(KernelConfig{}, 2, 0, kDefaultSearchRadius, 1);
    for (auto _ : st) benchmark::DoNotOptimize(del_forces(s, g, m, Vec3::Zero()));
}
BENCHMARK(BM_LearnedForces)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_Splat(benchmark::State& st) {
    const auto sc = scene(static_cast<int>(st.range(0)));
    const auto s = sc.state(0);
    for (auto _ : st) benchmark::DoNotOptimize(splat(s, sc.materials, sc.cameras[0], sc.splat));
}
BENCHMARK(BM_Splat)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
