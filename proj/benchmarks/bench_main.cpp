#include <benchmark/benchmark.h>

#include <random>

#include "dtf/estimator.hpp"
#include "dtf/fusion.hpp"
#include "dtf/inversion.hpp"
#include "dtf/metrics.hpp"
#include "dtf/synth.hpp"
#include "dtf/training.hpp"

namespace {

using namespace dtf;

Grid2D random_grid(int h, int w, int c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Grid2D g(h, w, c);
    for (double& v : g.values()) v = n(rng);
    return g;
}

void BM_Conv3x3(benchmark::State& state) {
    const int ch = int(state.range(0));
    const ConvLayerSpec spec{ch, ch, 3, 1};
    const ConvNet net = ConvNet::initialized({spec}, 1);
    const Grid2D x = random_grid(48, 64, ch, 2);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, spec, net.params()[0]));
    state.SetItemsProcessed(state.iterations() * 48 * 64);
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(64)->Arg(128);

void BM_InverterForwardBackward(benchmark::State& state) {
    const InverterNetwork inv = build_inverter(1);
    const SceneFlowField bw(random_grid(48, 64, 4, 3), Direction::backward);
    NetworkParams grads = zero_params(inv.net.specs());
    for (auto _ : state) {
        ForwardTape tape;
        const SceneFlowField out = invert(inv, bw, tape);
        benchmark::DoNotOptimize(inv.net.backward(tape, out.grid(), grads));
    }
}
BENCHMARK(BM_InverterForwardBackward);

void BM_FusionForward(benchmark::State& state) {
    const FusionNetwork net = build_fusion(FusionVariant::basic, 1);
    const SceneFlowField fw(random_grid(48, 64, 4, 4), Direction::forward);
    const SceneFlowField inv(random_grid(48, 64, 4, 5), Direction::forward);
    for (auto _ : state) benchmark::DoNotOptimize(predict_weights(net, fw, inv));
}
BENCHMARK(BM_FusionForward);

void BM_FusionForwardBackward(benchmark::State& state) {
    const FusionNetwork net = build_fusion(FusionVariant::basic, 1);
    const SceneFlowField fw(random_grid(48, 64, 4, 4), Direction::forward);
    const SceneFlowField inv(random_grid(48, 64, 4, 5), Direction::forward);
    NetworkParams grads = zero_params(net.net.specs());
    for (auto _ : state) {
        ForwardTape tape;
        const FusionWeights w = predict_weights(net, fw, inv, tape);
        const Grid2D d_logits(48, 64, fusion_logit_channels(net.variant), 0.01);
        benchmark::DoNotOptimize(net.net.backward(tape, d_logits, grads));
        benchmark::DoNotOptimize(w);
    }
}
BENCHMARK(BM_FusionForwardBackward);

void BM_GenerateSample(benchmark::State& state) {
    const SceneDistribution dist = scene_preset("traffic");
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(generate_sample(sample_scene(dist, seed++)));
}
BENCHMARK(BM_GenerateSample);

void BM_NoisyOracleEstimate(benchmark::State& state) {
    const FrameTripletSample s = generate_sample(sample_scene(scene_preset("traffic"), 3), "b");
    EstimatorConfig cfg;
    cfg.noise_length = double(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(estimate(s, Direction::forward, cfg));
}
BENCHMARK(BM_NoisyOracleEstimate)->Arg(0)->Arg(3);

void BM_Evaluate(benchmark::State& state) {
    const FrameTripletSample s = generate_sample(sample_scene(scene_preset("traffic"), 4), "b");
    const SceneFlowField est = estimate(s, Direction::forward, EstimatorConfig{});
    for (auto _ : state) benchmark::DoNotOptimize(evaluate(est, s.gt_forward, s.valid_fw, s.noc_fw));
}
BENCHMARK(BM_Evaluate);

void BM_RobustLossWithGradient(benchmark::State& state) {
    const SceneFlowField a(random_grid(48, 64, 4, 6), Direction::forward);
    const SceneFlowField b(random_grid(48, 64, 4, 7), Direction::forward);
    const PixelMask valid(48, 64, true);
    Grid2D g;
    for (auto _ : state) benchmark::DoNotOptimize(robust_loss(a, b, valid, {}, &g));
}
BENCHMARK(BM_RobustLossWithGradient);

}  // namespace

BENCHMARK_MAIN();
