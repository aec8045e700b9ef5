#include "tgr/camera.hpp"
#include "tgr/csd.hpp"
#include "tgr/random.hpp"
#include "tgr/rasterizer.hpp"
#include "tgr/retrieval.hpp"
#include "tgr/scene.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

namespace {

using namespace tgr;

GaussianScene bench_scene(std::size_t n) {
    Rng rng(1);
    GaussianScene s;
    std::vector<float> lang(kLangDim);
    for (std::size_t i = 0; i < n; ++i) {
        for (float& x : lang) x = static_cast<float>(rng.normal());
        const Vec3f p(static_cast<float>(rng.uniform(-1, 1)), static_cast<float>(rng.uniform(-1, 1)),
                      static_cast<float>(rng.uniform(3, 5)));
        const float ls = std::log(static_cast<float>(rng.uniform(0.02, 0.08)));
        Vec4f q(static_cast<float>(rng.normal()), static_cast<float>(rng.normal()), static_cast<float>(rng.normal()),
                static_cast<float>(rng.normal()));
        q.normalize();
        s.push_back(p, {ls, ls, ls}, q, {0.5f, 0.5f, 0.5f}, static_cast<float>(rng.uniform(-1, 3)), lang);
    }
    return s;
}

Camera bench_camera(int size) {
    return Camera::look_at({0, 0, 0}, {0, 0, 4}, {0, -1, 0}, size, size, size, size);
}

void BM_RenderColor(benchmark::State& state) {
    const auto scene = bench_scene(static_cast<std::size_t>(state.range(0)));
    const auto cam = bench_camera(static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(render(scene, cam, ChannelSet::color_only()));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RenderColor)->Args({1000, 128})->Args({10000, 256})->Unit(benchmark::kMillisecond);

void BM_RenderColorAndFeatures(benchmark::State& state) {
    const auto scene = bench_scene(static_cast<std::size_t>(state.range(0)));
    const auto cam = bench_camera(static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(render(scene, cam, ChannelSet::all()));
}
BENCHMARK(BM_RenderColorAndFeatures)->Args({1000, 128})->Args({10000, 256})->Unit(benchmark::kMillisecond);

void BM_Backward(benchmark::State& state) {
    const auto scene = bench_scene(static_cast<std::size_t>(state.range(0)));
    const auto cam = bench_camera(static_cast<int>(state.range(1)));
    const RenderOutput out = render(scene, cam, ChannelSet::color_only());
    RenderGradients up;
    up.color.assign(out.color.size(), 1e-3f);
    for (auto _ : state) benchmark::DoNotOptimize(render_backward(scene, cam, ChannelSet::color_only(), up));
}
BENCHMARK(BM_Backward)->Args({1000, 128})->Args({10000, 256})->Unit(benchmark::kMillisecond);

void BM_Retrieve(benchmark::State& state) {
    const auto scene = bench_scene(static_cast<std::size_t>(state.range(0)));
    std::vector<float> q(kLangDim, 0.0f);
    q[0] = 1.0f;
    const auto query = QueryEmbedding::make(q, "bench");
    for (auto _ : state) benchmark::DoNotOptimize(retrieve(scene, query, 0.1));
}
BENCHMARK(BM_Retrieve)->Arg(100000)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
