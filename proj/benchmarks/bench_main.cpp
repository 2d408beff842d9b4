#include <benchmark/benchmark.h>

#include "msx/dvs_sim.hpp"
#include "msx/eye_scene.hpp"
#include "msx/farneback.hpp"
#include "msx/flow.hpp"
#include "msx/random.hpp"
#include "msx/snn/model.hpp"
#include "msx/voxel.hpp"

namespace {

using namespace msx;

void BM_RenderFrame(benchmark::State& state) {
    const EyeScene scene = state.range(0) ? EyeScene::full() : EyeScene::desk();
    double angle = 0.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(render_frame(scene, angle));
        angle = angle > 2.0 ? 0.0 : angle + 0.1;
    }
    state.SetLabel(state.range(0) ? "800x600" : "200x150");
}
BENCHMARK(BM_RenderFrame)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

FrameSequence class_sequence(int class_id) {
    Rng rng(derive_seed(7, class_id));
    return render_sequence(EyeScene::desk(), make_trajectory(class_id, rng));
}

void BM_SimulateEvents(benchmark::State& state) {
    const FrameSequence seq = class_sequence(static_cast<int>(state.range(0)));
    const SimulatorConfig cfg;
    std::size_t events = 0;
    for (auto _ : state) {
        Rng rng(11);
        const EventStream s = simulate_events(seq, cfg, rng);
        events = s.events.size();
        benchmark::DoNotOptimize(events);
    }
    state.counters["events"] = static_cast<double>(events);
}
BENCHMARK(BM_SimulateEvents)->Arg(0)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_Farneback(benchmark::State& state) {
    const int w = static_cast<int>(state.range(0));
    const int h = w * 3 / 4;
    Rng rng(3);
    std::uniform_real_distribution<float> u(0.0F, 1.0F);
    Plane a(w, h), b(w, h);
    for (float& v : a.data) v = u(rng);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) b.at(x, y) = a.at(std::max(0, x - 1), y);
    for (auto _ : state) benchmark::DoNotOptimize(farneback(a, b));
}
BENCHMARK(BM_Farneback)->Arg(110)->Arg(220)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0));
    const snn::ModelConfig c = snn::ModelConfig::from_preset("vgg16s-flow", kDefaultBins, 75, 110);
    snn::SpikingVgg<float> model(c, 1);
    snn::Tensor<float> x(c.steps * batch, 2, c.height, c.width);
    Rng rng(5);
    std::bernoulli_distribution spike(0.05);
    for (float& v : x.data) v = spike(rng) ? 1.0F : 0.0F;
    for (auto _ : state) benchmark::DoNotOptimize(model.forward(x, batch, false, true));
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
