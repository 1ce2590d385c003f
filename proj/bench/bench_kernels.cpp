// Serial reference vs OpenMP implementations of the hot paths.
// Arg: lattice side (locations = side * side).

#include "drift/adapt/self_propagation.hpp"
#include "drift/kernel/propagate.hpp"
#include "drift/kernel/propagation.hpp"
#include "drift/kernel/reference_bank.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace drift;

namespace {

template <typename T>
BasicQueryKeySet<T> random_qk(int locations, int dim, int heads, std::uint64_t seed) {
    BasicQueryKeySet<T> qk(locations, dim, heads);
    std::mt19937_64 rng(seed);
    std::normal_distribution<T> nd(0, 1);
    for (auto& h : qk.heads) {
        for (auto& v : h.queries) v = nd(rng);
        for (auto& v : h.keys) v = nd(rng);
    }
    return qk;
}

struct KernelInputs {
    LatticeGeometry geometry;
    QueryKeySet target;
    std::vector<QueryKeySet> refs;
    std::vector<const QueryKeySet*> ptrs;
    std::vector<int> frames;

    KernelInputs(int side, int references)
        : geometry(side * 8, side * 8, side, side), target(random_qk<float>(side * side, 16, 5, 1)) {
        for (int s = 0; s < references; ++s) {
            refs.push_back(random_qk<float>(side * side, 16, 5, 10 + s));
            frames.push_back(s);
        }
        for (const auto& r : refs) ptrs.push_back(&r);
    }
};

void BM_AttentionKernel(benchmark::State& state) {
    const KernelInputs in(static_cast<int>(state.range(0)), 3);
    const HeadWeights w = HeadWeights::uniform(5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_attention_kernel(in.target, in.ptrs, in.frames, w, in.geometry, {}));
    }
}

void BM_AttentionKernelSerial(benchmark::State& state) {
    const KernelInputs in(static_cast<int>(state.range(0)), 3);
    const HeadWeights w = HeadWeights::uniform(5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::build_attention_kernel(in.target, in.ptrs, in.frames, w, in.geometry, {}));
    }
}

struct PropagationInputs {
    KernelInputs in;
    PropagationKernel kernel;
    ReferenceBank bank{7};

    explicit PropagationInputs(int side) : in(side, 8) {
        kernel = build_attention_kernel(in.target, in.ptrs, in.frames, HeadWeights::uniform(5), in.geometry, {});
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<float> u(0.0f, 1.0f);
        for (int f : in.frames) {
            SoftMaskStack m(4, side, side);
            for (auto& c : m.channels) {
                for (auto& v : c.values()) v = u(rng);
            }
            bank_update(bank, f, {}, {}, std::move(m));
        }
    }
};

void BM_Propagate(benchmark::State& state) {
    const PropagationInputs p(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        for (int c = 0; c < 4; ++c) benchmark::DoNotOptimize(propagate_channel(p.kernel, p.bank, c));
    }
}

void BM_PropagateSerial(benchmark::State& state) {
    const PropagationInputs p(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        for (int c = 0; c < 4; ++c) benchmark::DoNotOptimize(reference::propagate_channel(p.kernel, p.bank, c));
    }
}

struct LossInputs {
    QueryKeySet64 qk;
    std::vector<Grid<float>> targets;

    explicit LossInputs(int side) : qk(random_qk<double>(side * side, 16, 5, 7)) {
        Grid<float> t(side, side);
        for (int y = side / 4; y < 3 * side / 4; ++y) {
            for (int x = side / 4; x < 3 * side / 4; ++x) t(y, x) = 1.0f;
        }
        targets.push_back(std::move(t));
    }
};

void BM_LossGradient(benchmark::State& state) {
    const LossInputs in(static_cast<int>(state.range(0)));
    const HeadWeights w = HeadWeights::uniform(5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(self_propagation_loss(in.qk, w, in.targets, true));
    }
}

void BM_LossGradientSerial(benchmark::State& state) {
    const LossInputs in(static_cast<int>(state.range(0)));
    const HeadWeights w = HeadWeights::uniform(5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::self_propagation_loss(in.qk, w, in.targets, true));
    }
}

} // namespace

BENCHMARK(BM_AttentionKernel)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttentionKernelSerial)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Propagate)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_PropagateSerial)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LossGradient)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LossGradientSerial)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
