#include "drift/core/error.hpp"
#include "drift/core/mask_ops.hpp"
#include "drift/refine/crf.hpp"
#include "drift/refine/point_prompts.hpp"
#include "drift/refine/refine.hpp"
#include "drift/refine/segmenter.hpp"

#include "oracles.hpp"
#include "toy_dataset.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace drift;

namespace {

class FailingSegmenter final : public Segmenter {
  public:
    std::string id() const override { return "failing"; }
    void prepare(const Image&, int) override {}
    std::vector<SegmenterMask> segment(std::span<const Point>) const override { throw Error("device lost"); }
};

Grid<float> random_soft(int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Grid<float> g(h, w);
    for (auto& v : g.values()) v = u(rng);
    return g;
}

} // namespace

TEST_CASE("soft IoU matches the min/max summation oracle") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const Grid<float> a = random_soft(8, 8, rng);
        const Grid<std::uint8_t> b = oracle::random_binary(8, 8, rng);
        CHECK(std::abs(soft_iou(a, b) - oracle::soft_iou(a, b, kSoftIouEpsilon)) < 1e-9);
    }
    const Grid<std::uint8_t> a = oracle::random_blobs(8, 8, rng);
    Grid<float> af(8, 8);
    for (std::size_t i = 0; i < a.size(); ++i) af[i] = a[i];
    CHECK(soft_iou(af, a) >= 1.0 - 1e-5);
    Grid<float> left(1, 2, 0.0f);
    left(0, 0) = 1.0f;
    Grid<std::uint8_t> right(1, 2, 0);
    right(0, 1) = 1;
    CHECK(soft_iou(left, right) == 0.0);
    CHECK_THROWS_AS(soft_iou(Grid<float>(2, 2), Grid<std::uint8_t>(2, 3)), ShapeError);
}

TEST_CASE("cell centers map lattice cells to image coordinates") {
    const LatticeGeometry g(16, 32, 4, 4);
    const Point p = cell_center(g, 1, 2);
    CHECK(p.x == doctest::Approx(20.0));
    CHECK(p.y == doctest::Approx(6.0));
}

TEST_CASE("one-hot distributions put every point on that cell") {
    const LatticeGeometry g(16, 16, 4, 4);
    Grid<double> d(4, 4, 0.0);
    d(2, 3) = 1.0;
    std::mt19937_64 rng(1);
    const PointPromptSet s = sample_prompts(d, g, 2, 40, rng);
    CHECK(s.set_count() == 40);
    CHECK(s.points_per_set() == 2);
    for (const auto& set : s.sets) {
        for (const auto& p : set) {
            CHECK(p == cell_center(g, 2, 3));
        }
    }
}

TEST_CASE("uniform sampling frequencies stay within three sigma") {
    const LatticeGeometry g(4, 4, 2, 2);
    Grid<double> d(2, 2, 0.25);
    std::mt19937_64 rng(99);
    const int draws = 100000;
    const PointPromptSet s = sample_prompts(d, g, 1, draws, rng);
    int counts[2][2] = {};
    for (const auto& set : s.sets) {
        counts[static_cast<int>(set[0].y / 2.0)][static_cast<int>(set[0].x / 2.0)]++;
    }
    const double sigma = std::sqrt(draws * 0.25 * 0.75);
    for (auto& row : counts) {
        for (int c : row) {
            CHECK(std::abs(c - draws * 0.25) < 3.0 * sigma);
        }
    }
}

TEST_CASE("sampling rejects invalid distributions and is seed-deterministic") {
    const LatticeGeometry g(8, 8, 2, 2);
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(sample_prompts(Grid<double>(2, 2, 0.3), g, 2, 4, rng), ConfigError);
    CHECK_THROWS_AS(sample_prompts(Grid<double>(3, 3, 1.0 / 9.0), g, 2, 4, rng), ShapeError);
    Grid<double> d(2, 2, 0.25);
    std::mt19937_64 a(5);
    std::mt19937_64 b(5);
    CHECK(sample_prompts(d, g, 2, 10, a).sets == sample_prompts(d, g, 2, 10, b).sets);
}

TEST_CASE("oracle segmenter answers with the prompted components") {
    HardMask truth(10, 10, 2);
    for (int y = 1; y < 4; ++y)
        for (int x = 1; x < 4; ++x) truth.labels(y, x) = 1;
    for (int y = 6; y < 9; ++y)
        for (int x = 6; x < 9; ++x) truth.labels(y, x) = 1; // second component, same label
    truth.labels(0, 9) = 2;
    OracleSegmenter seg({truth});
    seg.prepare(Image(10, 10), 0);
    const Point on_first[] = {{2.5, 2.5}};
    const auto m = make_candidate(seg.segment(on_first));
    int count = 0;
    for (auto v : m.mask.values()) count += v;
    CHECK(count == 9);
    CHECK(m.mask(2, 2) == 1);
    CHECK(m.mask(7, 7) == 0);
    const Point both[] = {{2.5, 2.5}, {7.5, 7.5}};
    const auto u = make_candidate(seg.segment(both));
    count = 0;
    for (auto v : u.mask.values()) count += v;
    CHECK(count == 18);
    const Point background[] = {{5.5, 0.5}};
    const auto e = make_candidate(seg.segment(background));
    for (auto v : e.mask.values()) CHECK(v == 0);
    int components = 0;
    label_components(truth.labels, &components);
    CHECK(components == 3);
}

TEST_CASE("candidate selection prefers the thresholded source and breaks ties low") {
    Grid<float> source(6, 6, 0.0f);
    for (int y = 1; y < 4; ++y)
        for (int x = 1; x < 4; ++x) source(y, x) = 0.8f;
    CandidateMask exact;
    exact.mask = Grid<std::uint8_t>(6, 6, 0);
    for (int y = 1; y < 4; ++y)
        for (int x = 1; x < 4; ++x) exact.mask(y, x) = 1;
    CandidateMask shifted;
    shifted.mask = Grid<std::uint8_t>(6, 6, 0);
    for (int y = 2; y < 5; ++y)
        for (int x = 2; x < 5; ++x) shifted.mask(y, x) = 1;
    std::vector<CandidateMask> cands = {shifted, exact};
    CHECK(select_candidate(cands, source) == 1);
    CHECK(cands[1].score > cands[0].score);

    std::vector<CandidateMask> zeros(3);
    for (auto& c : zeros) c.mask = Grid<std::uint8_t>(6, 6, 0);
    CHECK(select_candidate(zeros, source) == 0);
    CHECK(zeros[0].score == doctest::Approx(0.0));

    std::vector<CandidateMask> single = {shifted};
    CHECK(select_candidate(single, Grid<float>(6, 6, 0.0f)) == 0);
    std::vector<CandidateMask> none;
    CHECK_THROWS_AS(select_candidate(none, source), ConfigError);
}

TEST_CASE("refinement with the oracle recovers the prompted component") {
    const LatticeGeometry g(32, 32, 8, 8);
    const HardMask truth = testing::toy_mask(32, 32, 1, {{1, 8, 8, 12}});
    OracleSegmenter seg({truth});
    seg.prepare(Image(32, 32), 0);
    // A blurry channel roughly over the object.
    const SoftMaskStack s = downsample_mask(testing::toy_mask(32, 32, 1, {{1, 8, 10, 12}}), g);
    std::mt19937_64 rng(3);
    const RefineOutcome out = refine_object(s[1], g, seg, RefineOptions{2, 40}, rng);
    REQUIRE(out.refined);
    CHECK(out.channel.height() == 32);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            CHECK((out.channel(y, x) > 0.5f) == (truth.labels(y, x) == 1));
        }
    }
    std::mt19937_64 rng2(3);
    CHECK(refine_object(s[1], g, seg, RefineOptions{2, 40}, rng2).channel == out.channel);
}

TEST_CASE("empty channels and segmenter failures pass through") {
    const LatticeGeometry g(16, 16, 4, 4);
    OracleSegmenter seg({HardMask(16, 16, 1)});
    seg.prepare(Image(16, 16), 0);
    std::mt19937_64 rng(1);
    const RefineOutcome empty = refine_object(Grid<float>(4, 4, 0.0f), g, seg, {}, rng);
    CHECK_FALSE(empty.refined);
    CHECK(empty.channel == Grid<float>(16, 16, 0.0f));

    Grid<float> ch(4, 4, 0.0f);
    ch(1, 1) = 0.7f;
    FailingSegmenter bad;
    const RefineOutcome failed = refine_object(ch, g, bad, {}, rng);
    CHECK_FALSE(failed.refined);
    CHECK(failed.channel == upsample_channel(ch, 16, 16));
}

TEST_CASE("fusion keeps labels within the object range") {
    std::mt19937_64 rng(2);
    const Grid<float> bg = random_soft(5, 5, rng);
    const std::vector<Grid<float>> objs = {random_soft(5, 5, rng), random_soft(5, 5, rng)};
    const HardMask m = fuse_channels(bg, objs);
    CHECK(m.object_count == 2);
    CHECK_NOTHROW(m.validate());
    CHECK_THROWS_AS(fuse_channels(bg, std::vector<Grid<float>>{Grid<float>(4, 4)}), ShapeError);
}

TEST_CASE("crf with zero steps is the identity") {
    const HardMask m = testing::toy_mask(20, 20, 1, {{1, 5, 5, 7}});
    CrfOptions o;
    o.steps = 0;
    CHECK(crf_refine(m, testing::toy_frame(20, 20, {{1, 9, 9, 3}}), o).labels == m.labels);
}

TEST_CASE("crf on a constant-color frame erodes by at most one pixel") {
    const HardMask m = testing::toy_mask(32, 32, 1, {{1, 8, 8, 14}});
    const HardMask out = crf_refine(m, Image(32, 32, 0.5f));
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const bool inner = y >= 9 && y < 21 && x >= 9 && x < 21;
            const bool outer = y >= 8 && y < 22 && x >= 8 && x < 22;
            if (inner) CHECK(out.labels(y, x) == 1);
            if (!outer) CHECK(out.labels(y, x) == 0);
        }
    }
}

TEST_CASE("crf snaps a misaligned mask to a strong color edge") {
    // The object is a red square; the mask overshoots it by one pixel on the right.
    const Image frame = testing::toy_frame(24, 24, {{1, 6, 6, 10}});
    const HardMask truth = testing::toy_mask(24, 24, 1, {{1, 6, 6, 10}});
    HardMask m = truth;
    for (int y = 6; y < 16; ++y) m.labels(y, 16) = 1;
    const HardMask out = crf_refine(m, frame);
    CHECK(out.labels == truth.labels);
    CHECK(crf_refine(truth, frame).labels == truth.labels);
}
