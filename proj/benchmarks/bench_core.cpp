#include <debias/data.hpp>
#include <debias/image.hpp>
#include <debias/model.hpp>
#include <debias/numerics.hpp>

#include <benchmark/benchmark.h>

namespace {

using namespace debias;

Tensor random_tensor(Shape shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) {
        v = rng.uniform();
    }
    return t;
}

void BM_Conv2d(benchmark::State& state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const Tensor input = random_tensor({c, 32, 32}, 1);
    const Tensor kernels = random_tensor({2 * c, c, 3, 3}, 2);
    const Tensor bias({2 * c});
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d(input, kernels, bias, 1));
    }
}
BENCHMARK(BM_Conv2d)->Arg(1)->Arg(8);

void BM_Clahe(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor image = random_tensor({n, n}, 3);
    const ClaheConfig cfg{2.0, 2, 2};
    for (auto _ : state) {
        benchmark::DoNotOptimize(clahe(image, cfg));
    }
}
BENCHMARK(BM_Clahe)->Arg(32)->Arg(128);

void BM_Forward(benchmark::State& state) {
    Rng rng(4);
    const ModelState model = init_model(ModelConfig{}, rng);
    const Tensor batch = random_tensor({static_cast<std::size_t>(state.range(0)), 1, 32, 32}, 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(model, batch));
    }
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(16);

void BM_TrainStep(benchmark::State& state) {
    const auto b = static_cast<std::size_t>(state.range(0));
    Rng rng(6);
    ModelState model = init_model(ModelConfig{}, rng);
    const Tensor batch = random_tensor({b, 1, 32, 32}, 7);
    std::vector<std::size_t> labels(b), groups(b);
    for (std::size_t i = 0; i < b; ++i) {
        labels[i] = i % 2;
        groups[i] = i % 4;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(train_step(model, batch, labels, groups, LossConfig{}, 1e-4));
    }
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(64);

void BM_BalancedBatches(benchmark::State& state) {
    std::vector<std::size_t> groups;
    for (std::size_t i = 0; i < 4000; ++i) {
        groups.push_back(i % 7 == 0 ? 3 : i % 3);
    }
    const std::vector<std::string> names{"a", "b", "c", "d"};
    Rng rng(8);
    for (auto _ : state) {
        benchmark::DoNotOptimize(balanced_batches(groups, names, 64, rng));
    }
}
BENCHMARK(BM_BalancedBatches);

} // namespace

BENCHMARK_MAIN();
