#include "drift/backend/synthetic.hpp"
#include "drift/core/error.hpp"
#include "drift/kernel/affinity.hpp"
#include "drift/kernel/kernel_dump.hpp"
#include "drift/kernel/propagate.hpp"
#include "drift/kernel/propagation.hpp"
#include "drift/kernel/reference_bank.hpp"

#include "toy_dataset.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <tuple>

using namespace drift;

namespace {

QueryKeySet random_qk(int locations, int dim, int heads, std::mt19937_64& rng, float scale = 1.0f) {
    QueryKeySet qk(locations, dim, heads);
    std::normal_distribution<float> nd(0.0f, scale);
    for (auto& h : qk.heads) {
        for (auto& v : h.queries) v = nd(rng);
        for (auto& v : h.keys) v = nd(rng);
    }
    return qk;
}

SoftMaskStack random_stack(int channels, int h, int w, std::mt19937_64& rng) {
    SoftMaskStack s(channels, h, w);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& c : s.channels) {
        for (auto& v : c.values()) v = u(rng);
    }
    return s;
}

// Independent row oracle: all in-radius candidates, sorted, cut at k, renormalized.
std::vector<std::tuple<int, int, double>> sparsify_row_oracle(const std::vector<DenseMatrix<float>>& dense, int row,
                                                              const LatticeGeometry& g, double radius, int k) {
    std::vector<std::tuple<float, int, int>> cand;
    for (int s = 0; s < static_cast<int>(dense.size()); ++s) {
        for (int loc = 0; loc < g.location_count(); ++loc) {
            const double dy = g.row_of(row) - g.row_of(loc);
            const double dx = g.col_of(row) - g.col_of(loc);
            if (dy * dy + dx * dx <= radius * radius) {
                cand.emplace_back(dense[static_cast<std::size_t>(s)](row, loc), s, loc);
            }
        }
    }
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
        return std::make_pair(std::get<1>(a), std::get<2>(a)) < std::make_pair(std::get<1>(b), std::get<2>(b));
    });
    cand.resize(std::min<std::size_t>(cand.size(), static_cast<std::size_t>(k)));
    double total = 0.0;
    for (const auto& c : cand) total += std::get<0>(c);
    std::vector<std::tuple<int, int, double>> out;
    for (const auto& c : cand) out.emplace_back(std::get<1>(c), std::get<2>(c), std::get<0>(c) / total);
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

TEST_CASE("head weights are a softmax of the logits") {
    const HeadWeights w({0.0, std::log(3.0)});
    const auto v = w.weights();
    CHECK(v[0] == doctest::Approx(0.25));
    CHECK(v[1] == doctest::Approx(0.75));
    const auto u = HeadWeights::uniform(4).weights();
    for (double x : u) CHECK(x == doctest::Approx(0.25));
    // Large logits stay finite.
    const auto big = HeadWeights({1000.0, 0.0}).weights();
    CHECK(big[0] == doctest::Approx(1.0));
}

TEST_CASE("head affinity matches a direct softmax") {
    std::mt19937_64 rng(2);
    const QueryKeySet qk = random_qk(6, 4, 1, rng);
    const auto a = head_affinity<float>(qk.heads[0].queries, qk.heads[0].keys, 4);
    for (int i = 0; i < 6; ++i) {
        std::vector<double> logits(6);
        double mx = -1e300;
        for (int j = 0; j < 6; ++j) {
            double dot = 0.0;
            for (int c = 0; c < 4; ++c) dot += qk.heads[0].queries[i * 4 + c] * qk.heads[0].keys[j * 4 + c];
            logits[j] = dot / 2.0;
            mx = std::max(mx, logits[j]);
        }
        double z = 0.0;
        for (double l : logits) z += std::exp(l - mx);
        for (int j = 0; j < 6; ++j) {
            CHECK(a(i, j) == doctest::Approx(std::exp(logits[j] - mx) / z).epsilon(1e-5));
        }
    }
}

TEST_CASE("sparsify matches the row oracle") {
    std::mt19937_64 rng(4);
    const LatticeGeometry g(40, 40, 5, 8);
    const int n = g.location_count();
    std::vector<DenseMatrix<float>> dense(3, DenseMatrix<float>(n, n));
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& d : dense) {
        for (int r = 0; r < n; ++r) {
            float total = 0.0f;
            for (auto& v : d.row(r)) total += (v = u(rng));
            for (auto& v : d.row(r)) v /= total;
        }
    }
    const std::vector<int> frames = {0, 4, 5};
    const SparsifyOptions opt{2.5, 7, 16};
    const PropagationKernel k = sparsify(dense, frames, g, opt);
    CHECK_NOTHROW(k.validate(g, opt));
    for (int row = 0; row < n; ++row) {
        const auto expect = sparsify_row_oracle(dense, row, g, opt.radius, opt.top_k);
        REQUIRE(k.row_end(row) - k.row_begin(row) == expect.size());
        for (std::size_t e = 0; e < expect.size(); ++e) {
            const auto idx = k.row_begin(row) + e;
            CHECK(static_cast<int>(k.slots[idx]) == std::get<0>(expect[e]));
            CHECK(static_cast<int>(k.locations[idx]) == std::get<1>(expect[e]));
            CHECK(k.values[idx] == doctest::Approx(std::get<2>(expect[e])).epsilon(1e-5));
        }
    }
}

TEST_CASE("rows that underflow keep the co-located cell of the latest reference") {
    const LatticeGeometry g(4, 4, 2, 2);
    std::vector<DenseMatrix<float>> dense(2, DenseMatrix<float>(4, 4, 0.0f));
    const std::vector<int> frames = {0, 3};
    const PropagationKernel k = sparsify(dense, frames, g, SparsifyOptions{1.0, 2, 4});
    for (int row = 0; row < 4; ++row) {
        REQUIRE(k.row_end(row) - k.row_begin(row) == 1);
        CHECK(k.slots[k.row_begin(row)] == 1);
        CHECK(static_cast<int>(k.locations[k.row_begin(row)]) == row);
        CHECK(k.values[k.row_begin(row)] == 1.0f);
    }
}

TEST_CASE("blocked attention kernel equals the serial reference") {
    std::mt19937_64 rng(8);
    const LatticeGeometry g(36, 36, 9, 9);
    const QueryKeySet target = random_qk(81, 4, 3, rng);
    const QueryKeySet r0 = random_qk(81, 4, 3, rng);
    const QueryKeySet r1 = random_qk(81, 4, 3, rng);
    const QueryKeySet* refs[] = {&r0, &r1};
    const int frames[] = {0, 1};
    const HeadWeights w({0.3, -0.2, 0.5});
    for (int block : {1, 7, 512}) {
        const SparsifyOptions opt{3.0, 5, block};
        const auto a = build_attention_kernel(target, refs, frames, w, g, opt);
        const auto b = reference::build_attention_kernel(target, refs, frames, w, g, opt);
        CHECK(a.row_offsets == b.row_offsets);
        CHECK(a.slots == b.slots);
        CHECK(a.locations == b.locations);
        for (std::size_t i = 0; i < a.values.size(); ++i) {
            CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-5));
        }
        CHECK_NOTHROW(a.validate(g, opt));
    }
}

TEST_CASE("cosine kernel is row-stochastic and rejects zero features") {
    const LatticeGeometry g(24, 24, 6, 6);
    const auto backend = make_synthetic_backend(1, g, 2, 4);
    const FeatureSet f0 = backend->extract_features(backend->encode_frame(testing::toy_frame(24, 24, {{1, 4, 4, 8}})));
    const FeatureSet f1 = backend->extract_features(backend->encode_frame(testing::toy_frame(24, 24, {{1, 4, 8, 8}})));
    const FeatureSet* refs[] = {&f0};
    const int frames[] = {0};
    const SparsifyOptions opt{3.0, 6, 8};
    const auto k = build_cosine_kernel(f1, refs, frames, 0.1, g, opt);
    CHECK_NOTHROW(k.validate(g, opt));
    FeatureSet zero = f1;
    std::fill(zero.values.begin(), zero.values.end(), 0.0f);
    CHECK_THROWS_AS(cosine_affinity(zero, f0, 0.1), ShapeError);
}

TEST_CASE("propagation equals the dense product and the serial reference") {
    std::mt19937_64 rng(12);
    const LatticeGeometry g(24, 32, 6, 8);
    const QueryKeySet t = random_qk(48, 4, 2, rng);
    ReferenceBank bank(3);
    std::vector<QueryKeySet> ref_qk;
    for (int f = 0; f < 3; ++f) {
        ref_qk.push_back(random_qk(48, 4, 2, rng));
        bank_update(bank, f, {}, {}, random_stack(3, 6, 8, rng));
    }
    std::vector<const QueryKeySet*> refs;
    for (const auto& q : ref_qk) refs.push_back(&q);
    const std::vector<int> frames = bank.frame_indices();
    const auto k = build_attention_kernel(t, refs, frames, HeadWeights::uniform(2), g, SparsifyOptions{2.0, 9, 16});
    for (int c = 0; c < 3; ++c) {
        const Grid<float> out = propagate_channel(k, bank, c);
        const Grid<float> ref = reference::propagate_channel(k, bank, c);
        for (int row = 0; row < 48; ++row) {
            double expect = 0.0;
            for (auto e = k.row_begin(row); e < k.row_end(row); ++e) {
                expect += k.values[e] * bank.entries()[k.slots[e]].mask[c][k.locations[e]];
            }
            CHECK(out[static_cast<std::size_t>(row)] == doctest::Approx(expect).epsilon(1e-6));
            CHECK(out[static_cast<std::size_t>(row)] == doctest::Approx(ref[static_cast<std::size_t>(row)]).epsilon(1e-6));
        }
    }
    const SoftMaskStack all = propagate(k, bank);
    CHECK(all.channel_count() == 3);
}

TEST_CASE("sharp self-attention propagates a mask unchanged") {
    const LatticeGeometry g(8, 8, 8, 8);
    const int n = 64;
    QueryKeySet qk(n, n, 1);
    for (int i = 0; i < n; ++i) {
        qk.heads[0].queries[static_cast<std::size_t>(i * n + i)] = 30.0f;
        qk.heads[0].keys[static_cast<std::size_t>(i * n + i)] = 30.0f;
    }
    std::mt19937_64 rng(5);
    ReferenceBank bank(7);
    const SoftMaskStack mask = random_stack(2, 8, 8, rng);
    bank_update(bank, 0, {}, {}, mask);
    const QueryKeySet* refs[] = {&qk};
    const int frames[] = {0};
    const auto k = build_attention_kernel(qk, refs, frames, HeadWeights::uniform(1), g, SparsifyOptions{14.0, 15, 64});
    for (int c = 0; c < 2; ++c) {
        const Grid<float> out = propagate_channel(k, bank, c);
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(std::abs(out[i] - mask[c][i]) < 1e-3);
        }
    }
}

TEST_CASE("bank keeps the initial frame plus the most recent window") {
    ReferenceBank bank(7);
    bank_update(bank, 0, {}, {}, SoftMaskStack(2, 1, 1));
    for (int f = 1; f <= 20; ++f) {
        bank_update(bank, f, {}, {}, SoftMaskStack(2, 1, 1));
        CHECK(bank.size() <= bank.capacity());
        std::vector<int> expect = {0};
        for (int s = std::max(1, f - 6); s <= f; ++s) expect.push_back(s);
        CHECK(bank.frame_indices() == expect);
    }
    CHECK(bank.find(0).frame_index == 0);
    CHECK_THROWS_AS(bank_update(bank, 20, {}, {}, SoftMaskStack(2, 1, 1)), ConfigError);
}

TEST_CASE("kernel dumps round-trip and reject corruption") {
    std::mt19937_64 rng(3);
    const LatticeGeometry g(20, 20, 5, 5);
    const QueryKeySet t = random_qk(25, 4, 2, rng);
    const QueryKeySet r = random_qk(25, 4, 2, rng);
    const QueryKeySet* refs[] = {&r};
    const int frames[] = {4};
    const auto k = build_attention_kernel(t, refs, frames, HeadWeights::uniform(2), g, SparsifyOptions{2.0, 4, 8});
    const auto dir = testing::fresh_dir("dump");
    write_kernel_dump(dir / "k.drkd", k, {"bear", 5, 2});
    const KernelDump d = read_kernel_dump(dir / "k.drkd");
    CHECK(d.key.video == "bear");
    CHECK(d.key.frame == 5);
    CHECK(d.key.object == 2);
    CHECK(d.kernel.source_frames == k.source_frames);
    CHECK(d.kernel.row_offsets == k.row_offsets);
    CHECK(d.kernel.locations == k.locations);
    CHECK(d.kernel.values == k.values);
    {
        std::fstream f(dir / "k.drkd", std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
    }
    CHECK_THROWS_AS(read_kernel_dump(dir / "k.drkd"), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("invalid sparsify options are rejected") {
    CHECK_THROWS_AS((SparsifyOptions{0.0, 15, 512}.validate()), ConfigError);
    CHECK_THROWS_AS((SparsifyOptions{14.0, 0, 512}.validate()), ConfigError);
}
