#include <benchmark/benchmark.h>

#include "stlab/assignment.hpp"
#include "stlab/convnet.hpp"
#include "stlab/metrics.hpp"
#include "stlab/mid.hpp"
#include "stlab/mst.hpp"
#include "stlab/mtt_sim.hpp"
#include "stlab/polar_cache.hpp"
#include "stlab/raster.hpp"
#include "stlab/rng.hpp"

using namespace stlab;

namespace {

std::vector<cnn::LayerSpec> desk_arch(int in_channels) {
    using cnn::LayerKind;
    using cnn::Nonlin;
    auto layer = [](LayerKind kind, int fi, int fo, int k, int m, Nonlin nl) {
        cnn::LayerSpec s;
        s.kind = kind;
        s.in_features = fi;
        s.out_features = fo;
        s.kernel_width = k;
        s.resample = m;
        s.nonlin = nl;
        return s;
    };
    return {layer(LayerKind::encoder, in_channels, 16, 5, 2, Nonlin::leaky_relu),
            layer(LayerKind::encoder, 16, 16, 5, 2, Nonlin::leaky_relu),
            layer(LayerKind::hidden, 16, 64, 1, 1, Nonlin::leaky_relu),
            layer(LayerKind::hidden, 64, 64, 1, 1, Nonlin::leaky_relu),
            layer(LayerKind::decoder, 64, 16, 5, 2, Nonlin::leaky_relu),
            layer(LayerKind::decoder, 16, 1, 5, 2, Nonlin::identity)};
}

Tensor<float> random_input(int c, int n, uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t({c, n, n});
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.normal());
    return t;
}

void BM_forward_desk_128(benchmark::State& state) {
    const auto net = cnn::Network<float>::randomized(2, desk_arch(20), 1);
    const auto x = random_input(20, 128, 2);
    for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_forward_desk_128)->Unit(benchmark::kMillisecond);

void BM_forward_backward_desk_128(benchmark::State& state) {
    const auto net = cnn::Network<float>::randomized(2, desk_arch(20), 1);
    const auto x = random_input(20, 128, 2);
    Tensor<float> target({1, 128, 128});
    for (auto _ : state) {
        cnn::ForwardCache<float> cache;
        const auto pred = net.forward(x, cache);
        Tensor<float> grad;
        cnn::mse_loss(pred, target, &grad);
        benchmark::DoNotOptimize(net.backward(cache, grad));
    }
}
BENCHMARK(BM_forward_backward_desk_128)->Unit(benchmark::kMillisecond);

void BM_rasterize_measurement_frame(benchmark::State& state) {
    const mtt::SimParams p = mtt::SimParams::defaults(1000.0);
    mtt::SimState st = mtt::new_scenario(p, 5, 0);
    st.sensors.assign({{-300.0, 100.0}, {900.0, -900.0}, {0.0, 1500.0}});
    const auto frame = mtt::sense(st, p);
    raster::PolarCache cache(p.window());
    PointSet pts(2);
    std::vector<raster::MeasurementModel> models;
    for (const auto& m : frame.measurements) {
        pts.add(mtt::measurement_to_cartesian(st, m));
        models.push_back(raster::MeasurementModel::range_bearing(
            st.sensors[static_cast<size_t>(m.sensor_index)], p.eta_r, p.eta_theta));
    }
    for (auto _ : state)
        benchmark::DoNotOptimize(raster::rasterize_density(pts, models, p.window(), &cache));
    state.counters["measurements"] = static_cast<double>(pts.size());
}
BENCHMARK(BM_rasterize_measurement_frame)->Unit(benchmark::kMillisecond);

void BM_rasterize_gaussian_10pt(benchmark::State& state) {
    const WindowSpec win{1000.0, 1000.0 / 128.0, 2};
    Rng rng(3);
    PointSet s(2);
    for (int i = 0; i < 10; ++i) s.add(Vec2{rng.uniform(-450, 450), rng.uniform(-450, 450)});
    for (auto _ : state) benchmark::DoNotOptimize(raster::rasterize_gaussian(s, win, 10.0));
}
BENCHMARK(BM_rasterize_gaussian_10pt);

void BM_ospa(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(4);
    PointSet a(2), b(2);
    for (int i = 0; i < n; ++i) {
        a.add(Vec2{rng.uniform(-500, 500), rng.uniform(-500, 500)});
        b.add(Vec2{rng.uniform(-500, 500), rng.uniform(-500, 500)});
    }
    for (auto _ : state) benchmark::DoNotOptimize(metrics::ospa(a, b, 500.0));
}
BENCHMARK(BM_ospa)->Arg(10)->Arg(50)->Arg(200);

void BM_amtp(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(5);
    PointSet agents(2);
    for (int i = 0; i < n; ++i) agents.add(Vec2{rng.uniform(-800, 800), rng.uniform(-800, 800)});
    const mid::ChannelParams ch;
    for (auto _ : state) benchmark::DoNotOptimize(mid::amtp(agents, ch));
}
BENCHMARK(BM_amtp)->Arg(25)->Arg(100)->Arg(400);

void BM_simulate_step(benchmark::State& state) {
    const mtt::SimParams p = mtt::SimParams::defaults(1000.0);
    mtt::SimState st = mtt::new_scenario(p, 6, 0);
    for (auto _ : state) {
        mtt::propagate(st, p);
        benchmark::DoNotOptimize(mtt::sense(st, p));
    }
}
BENCHMARK(BM_simulate_step);

}  // namespace

BENCHMARK_MAIN();
