#include "drift/backend/synthetic.hpp"
#include "drift/core/error.hpp"

#include "toy_dataset.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace drift;

namespace {

PromptEmbedding random_prompt(const Backend& b, std::uint64_t seed, double sd = 0.5) {
    PromptEmbedding p(b.prompt_shape(), true);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, sd);
    for (auto& v : p.values) {
        v = nd(rng);
    }
    return p;
}

double inner(const QueryKeySet64& a, const QueryKeySet64& b) {
    double s = 0.0;
    for (std::size_t h = 0; h < a.heads.size(); ++h) {
        for (std::size_t i = 0; i < a.heads[h].queries.size(); ++i) {
            s += a.heads[h].queries[i] * b.heads[h].queries[i] + a.heads[h].keys[i] * b.heads[h].keys[i];
        }
    }
    return s;
}

} // namespace

TEST_CASE("synthetic backend is deterministic in its seed") {
    const LatticeGeometry geo(32, 32, 8, 8);
    const auto a = make_synthetic_backend(7, geo, 3, 4);
    const auto b = make_synthetic_backend(7, geo, 3, 4);
    const auto c = make_synthetic_backend(8, geo, 3, 4);
    const Image frame = testing::toy_frame(32, 32, {{1, 8, 8, 8}});
    const LatentState z = a->encode_frame(frame);
    const PromptEmbedding p = random_prompt(*a, 1);
    const QueryKeySet qa = a->extract_qk(z, p);
    const QueryKeySet qb = b->extract_qk(z, p);
    const QueryKeySet qc = c->extract_qk(z, p);
    CHECK(qa.heads[2].queries == qb.heads[2].queries);
    CHECK(qa.heads[2].keys != qc.heads[2].keys);
    CHECK(a->weights_checksum() == b->weights_checksum());
    CHECK(a->weights_checksum() != c->weights_checksum());
    CHECK(a->id() == "synthetic-s7-h3-d4-8x8");
    CHECK(qa.location_count == 64);
    CHECK(qa.head_count() == 3);
    CHECK_NOTHROW(qa.validate());
}

TEST_CASE("synthetic latents are the area-averaged frame") {
    const LatticeGeometry geo(16, 16, 4, 4);
    const auto b = make_synthetic_backend(0, geo, 2, 4);
    const Image frame = testing::toy_frame(16, 16, {{1, 0, 0, 4}});
    const LatentState z = b->encode_frame(frame);
    const auto red = testing::toy_color(1);
    const auto bg = testing::toy_color(0);
    CHECK(z.values[0] == doctest::Approx(red.r));
    CHECK(z.values[3] == doctest::Approx(bg.r));
    CHECK_THROWS_AS(b->encode_frame(Image(8, 8)), ShapeError);
}

TEST_CASE("content term makes same-colored locations agree regardless of position") {
    // With zero positional gain and the null prompt the queries depend only on the color.
    const LatticeGeometry geo(16, 16, 16, 16);
    SyntheticBackendOptions o;
    o.positional_gain = 0.0;
    o.head_count = 2;
    SyntheticBackend b(geo, o);
    const Image frame = testing::toy_frame(16, 16, {{1, 2, 2, 3}});
    const QueryKeySet qk = b.extract_qk(b.encode_frame(frame), b.null_prompt());
    const int d = qk.head_dim;
    for (int c = 0; c < d; ++c) {
        // (2,2) and (4,4) are both inside the square.
        CHECK(qk.heads[1].queries[static_cast<std::size_t>((2 * 16 + 2) * d + c)] ==
              doctest::Approx(qk.heads[1].queries[static_cast<std::size_t>((4 * 16 + 4) * d + c)]));
    }
}

TEST_CASE("null prompt is the zero embedding and text prompts are stable") {
    const auto b = make_synthetic_backend(3, LatticeGeometry(8, 8, 4, 4), 2, 4);
    const PromptEmbedding null = b->null_prompt();
    for (double v : null.values) {
        CHECK(v == 0.0);
    }
    CHECK(b->encode_prompt("dog").values == b->encode_prompt("dog").values);
    CHECK(b->encode_prompt("dog").values != b->encode_prompt("cat").values);
}

TEST_CASE("prompt vjp matches finite differences of <c, qk(prompt)>") {
    const LatticeGeometry geo(24, 24, 6, 6);
    const auto b = make_synthetic_backend(11, geo, 3, 4);
    const LatentState z = b->encode_frame(testing::toy_frame(24, 24, {{1, 4, 6, 8}}));
    const PromptEmbedding p = random_prompt(*b, 2);
    QueryKeySet64 cot = b->extract_qk64(z, p);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& h : cot.heads) {
        for (auto& v : h.queries) v = nd(rng);
        for (auto& v : h.keys) v = nd(rng);
    }
    const auto grad = b->prompt_vjp(z, p, cot);
    REQUIRE(grad.size() == p.values.size());
    for (int i : {0, 5, 17, 40, 63}) {
        PromptEmbedding hi = p;
        PromptEmbedding lo = p;
        hi.values[static_cast<std::size_t>(i)] += 1e-5;
        lo.values[static_cast<std::size_t>(i)] -= 1e-5;
        const double numeric = (inner(cot, b->extract_qk64(z, hi)) - inner(cot, b->extract_qk64(z, lo))) / 2e-5;
        CHECK(grad[static_cast<std::size_t>(i)] == doctest::Approx(numeric).epsilon(1e-6));
    }
}

TEST_CASE("lipschitz bound holds on random prompt pairs") {
    const LatticeGeometry geo(16, 16, 8, 8);
    const auto b = make_synthetic_backend(4, geo, 2, 4);
    const LatentState z = b->encode_frame(testing::toy_frame(16, 16, {{1, 4, 4, 6}}));
    const double L = b->lipschitz_constant();
    for (std::uint64_t s = 0; s < 10; ++s) {
        const PromptEmbedding p = random_prompt(*b, 100 + s);
        const PromptEmbedding q = random_prompt(*b, 200 + s);
        const auto a = b->extract_qk64(z, p);
        const auto c = b->extract_qk64(z, q);
        double num = 0.0;
        for (std::size_t h = 0; h < a.heads.size(); ++h) {
            for (std::size_t i = 0; i < a.heads[h].queries.size(); ++i) {
                num += std::pow(a.heads[h].queries[i] - c.heads[h].queries[i], 2) +
                       std::pow(a.heads[h].keys[i] - c.heads[h].keys[i], 2);
            }
        }
        double den = 0.0;
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            den += std::pow(p.values[i] - q.values[i], 2);
        }
        CHECK(std::sqrt(num) <= L * std::sqrt(den) * (1.0 + 1e-9));
    }
}

TEST_CASE("features concatenate color and positional fields") {
    const auto b = make_synthetic_backend(0, LatticeGeometry(8, 8, 4, 4), 2, 6);
    const FeatureSet f = b->extract_features(b->encode_frame(Image(8, 8, 0.5f)));
    CHECK(f.location_count == 16);
    CHECK(f.channels == 3 + 6);
    CHECK_NOTHROW(f.validate());
}

TEST_CASE("mismatched prompt shapes are rejected") {
    const auto b = make_synthetic_backend(0, LatticeGeometry(8, 8, 4, 4), 2, 4);
    const LatentState z = b->encode_frame(Image(8, 8, 0.1f));
    CHECK_THROWS_AS(b->extract_qk(z, PromptEmbedding(PromptShape{1, 3})), ShapeError);
}
