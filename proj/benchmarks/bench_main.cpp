#include <benchmark/benchmark.h>

#include <memory>

#include "ammpl/harness.hpp"
#include "ammpl/pipeline.hpp"
#include "ammpl/selftest.hpp"

using namespace ammpl;

namespace {

struct Setup {
    DimConfig dims;
    std::shared_ptr<const EncoderWeights> encoders;
    std::vector<PatchImage> batch;

    Setup() {
        dims.k = 8;
        encoders = std::make_shared<const EncoderWeights>(init_frozen(1, dims));
        RandomStream rng(1, "bench");
        for (std::size_t i = 0; i < 4; ++i) {
            PatchImage img;
            img.patches = Array({dims.b, dims.b, dims.q, dims.q, dims.u});
            for (std::size_t j = 0; j < img.patches.size(); ++j) img.patches[j] = rng.uniform();
            img.label = i;
            batch.push_back(std::move(img));
        }
    }

    ModelState model(Components comp) const {
        ModelConfig mc;
        mc.dims = dims;
        mc.components = comp;
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < dims.k; ++i) labels.push_back("c" + std::to_string(i));
        return make_model(encoders, labels, mc, SeedBundle::from_run_seed(1));
    }
};

const Setup& setup() {
    static const Setup s;
    return s;
}

void BM_Philox(benchmark::State& state) {
    RandomStream rng(1, "bench");
    for (auto _ : state) benchmark::DoNotOptimize(rng.next_u64());
}
BENCHMARK(BM_Philox);

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    RandomStream rng(2, "mm");
    Array a({n, n}), b({n, n});
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = rng.normal();
        b[i] = rng.normal();
    }
    for (auto _ : state) {
        ad::Tape t;
        benchmark::DoNotOptimize(ad::matmul(t.constant(a), t.constant(b)).value()[0]);
    }
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_ClassLogits(benchmark::State& state) {
    const ModelState s = setup().model(Components{});
    RandomStream rng(3, "m");
    for (auto _ : state) benchmark::DoNotOptimize(class_logits(s, setup().batch[0], rng)[0]);
}
BENCHMARK(BM_ClassLogits);

void BM_TrainStep(benchmark::State& state) {
    const bool interaction = state.range(0) != 0;
    ModelState s = setup().model(Components{true, true, interaction});
    SgdMomentum opt;
    RandomStream rng(4, "m");
    for (auto _ : state) benchmark::DoNotOptimize(train_step(s, setup().batch, 0.01, 0.9, opt, rng).loss);
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1);

void BM_Predict(benchmark::State& state) {
    const ModelState s = setup().model(Components{});
    for (auto _ : state) benchmark::DoNotOptimize(predict(s, setup().batch[1]));
}
BENCHMARK(BM_Predict);

void BM_StraightThroughSuite(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(check_straight_through(10).passed);
}
BENCHMARK(BM_StraightThroughSuite);

}  // namespace
BENCHMARK_MAIN();
