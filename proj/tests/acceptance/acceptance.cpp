// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Criteria 1-10 run
// on the synthetic backend; 11-15 need DAVIS 2017 and exported checkpoints.

#include "drift/adapt/objective.hpp"
#include "drift/adapt/optimizer.hpp"
#include "drift/backend/synthetic.hpp"
#include "drift/core/hash.hpp"
#include "drift/core/mask_ops.hpp"
#include "drift/eval/aggregate.hpp"
#include "drift/eval/metrics.hpp"
#include "drift/kernel/propagate.hpp"
#include "drift/kernel/propagation.hpp"
#include "drift/kernel/reference_bank.hpp"
#include "drift/pipeline/commands.hpp"
#include "drift/pipeline/factory.hpp"
#include "drift/refine/refine.hpp"

#include "oracles.hpp"
#include "toy_pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace drift;
namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
    Verdict verdict;
    std::string detail;
};

Outcome fail(std::string d) { return {Verdict::fail, std::move(d)}; }
Outcome skip(std::string d) { return {Verdict::skip, std::move(d)}; }
Outcome verdict(bool ok, std::string d) { return {ok ? Verdict::pass : Verdict::fail, std::move(d)}; }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

QueryKeySet random_qk(int locations, int dim, int heads, std::mt19937_64& rng) {
    QueryKeySet qk(locations, dim, heads);
    std::normal_distribution<float> nd(0.0f, 1.0f);
    for (auto& h : qk.heads) {
        for (auto& v : h.queries) v = nd(rng);
        for (auto& v : h.keys) v = nd(rng);
    }
    return qk;
}

Grid<float> random_soft(int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Grid<float> g(h, w);
    for (auto& v : g.values()) v = u(rng);
    return g;
}

Outcome kernel_stochasticity() {
    std::mt19937_64 rng(101);
    const LatticeGeometry g(160, 160, 20, 20);
    const SparsifyOptions opt; // r = 14, k = 15
    double worst_sum = 0.0;
    std::size_t worst_support = 0;
    double worst_distance = 0.0;
    std::normal_distribution<double> logit(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int heads = 1 + trial % 4;
        const int refs_n = 1 + trial % 3;
        const QueryKeySet target = random_qk(g.location_count(), 8, heads, rng);
        std::vector<QueryKeySet> refs;
        std::vector<const QueryKeySet*> ptrs;
        std::vector<int> frames;
        for (int s = 0; s < refs_n; ++s) {
            refs.push_back(random_qk(g.location_count(), 8, heads, rng));
            frames.push_back(s);
        }
        for (const auto& r : refs) ptrs.push_back(&r);
        std::vector<double> logits(static_cast<std::size_t>(heads));
        for (auto& l : logits) l = logit(rng);
        const auto k = build_attention_kernel(target, ptrs, frames, HeadWeights(logits), g, opt);
        for (int row = 0; row < k.target_count; ++row) {
            double sum = 0.0;
            for (auto e = k.row_begin(row); e < k.row_end(row); ++e) {
                sum += k.values[e];
                const double dy = g.row_of(row) - g.row_of(static_cast<int>(k.locations[e]));
                const double dx = g.col_of(row) - g.col_of(static_cast<int>(k.locations[e]));
                worst_distance = std::max(worst_distance, std::sqrt(dy * dy + dx * dx));
            }
            worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
            worst_support = std::max(worst_support, k.row_end(row) - k.row_begin(row));
        }
    }
    return verdict(worst_sum <= 1e-5 && worst_support <= 15 && worst_distance <= 14.0,
                   "max |row sum - 1| " + fmt(worst_sum) + ", max support " + std::to_string(worst_support) +
                       ", max distance " + fmt(worst_distance));
}

Outcome identity_propagation() {
    const LatticeGeometry g(96, 96, 12, 12);
    const int n = g.location_count();
    QueryKeySet qk(n, n, 1);
    for (int i = 0; i < n; ++i) {
        qk.heads[0].queries[static_cast<std::size_t>(i) * n + i] = 30.0f;
        qk.heads[0].keys[static_cast<std::size_t>(i) * n + i] = 30.0f;
    }
    std::mt19937_64 rng(202);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        SoftMaskStack mask(3, 12, 12);
        for (auto& c : mask.channels) c = random_soft(12, 12, rng);
        ReferenceBank bank(7);
        bank_update(bank, 0, {}, {}, mask);
        const QueryKeySet* refs[] = {&qk};
        const int frames[] = {0};
        const auto k = build_attention_kernel(qk, refs, frames, HeadWeights::uniform(1), g, SparsifyOptions{});
        for (int c = 0; c < 3; ++c) {
            const Grid<float> out = propagate_channel(k, bank, c);
            for (std::size_t i = 0; i < out.size(); ++i) {
                worst = std::max(worst, static_cast<double>(std::abs(out[i] - mask[c][i])));
            }
        }
    }
    return verdict(worst < 1e-3, "max abs error " + fmt(worst));
}

Outcome soft_iou_oracle() {
    std::mt19937_64 rng(303);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Grid<float> a = random_soft(8, 8, rng);
        const auto b = oracle::random_binary(8, 8, rng);
        worst = std::max(worst, std::abs(soft_iou(a, b) - oracle::soft_iou(a, b, kSoftIouEpsilon)));
    }
    double self = 1.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = oracle::random_blobs(8, 8, rng);
        Grid<float> af(8, 8);
        for (std::size_t i = 0; i < a.size(); ++i) af[i] = a[i];
        self = std::min(self, soft_iou(af, a));
    }
    return verdict(worst < 1e-9 && self >= 1.0 - 1e-5,
                   "max oracle error " + fmt(worst) + ", min IoU(A,A) " + fmt(self));
}

Outcome metric_oracle() {
    std::mt19937_64 rng(404);
    double worst_j = 0.0;
    double worst_f = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const bool blobs = trial % 2 == 0;
        const auto p = blobs ? oracle::random_blobs(16, 16, rng) : oracle::random_binary(16, 16, rng, 0.3);
        const auto t = blobs ? oracle::random_blobs(16, 16, rng) : oracle::random_binary(16, 16, rng, 0.3);
        worst_j = std::max(worst_j, std::abs(jaccard(p, t) - oracle::jaccard(p, t)));
        const int radius = boundary_radius(kDefaultBoundaryTolerance, 16, 16);
        worst_f = std::max(worst_f, std::abs(boundary_f(p, t) - oracle::boundary_f(p, t, radius)));
    }
    // J&F over random per-object scores.
    std::uniform_real_distribution<double> u(0.0, 1.0);
    bool exact = true;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<SequenceResult> results;
        for (int s = 0; s < 4; ++s) {
            std::vector<ObjectFrameScore> scores;
            for (int f = 1; f < 6; ++f) {
                for (int o = 1; o <= 1 + s % 3; ++o) scores.push_back({f, o, u(rng), u(rng)});
            }
            results.push_back(summarize_sequence("s" + std::to_string(s), scores));
        }
        const MetricSummary m = aggregate(results);
        exact = exact && m.jf_mean == (m.j_mean + m.f_mean) / 2.0;
    }
    return verdict(worst_j < 1e-6 && worst_f < 1e-6 && exact, "max J error " + fmt(worst_j) + ", max F error " +
                                                                  fmt(worst_f) + (exact ? ", J&F exact" : ", J&F inexact"));
}

Image blob_frame(int h, int w, int cy, int cx, int radius) {
    Image img(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool inside = (y - cy) * (y - cy) + (x - cx) * (x - cx) <= radius * radius;
            img.at(y, x, 0) = inside ? 0.9f : 0.2f + 0.002f * x;
            img.at(y, x, 1) = inside ? 0.1f : 0.5f;
            img.at(y, x, 2) = inside ? 0.3f : 0.6f + 0.002f * y;
        }
    }
    return img;
}

HardMask blob_mask(int h, int w, int cy, int cx, int radius) {
    HardMask m(h, w, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= radius * radius) m.labels(y, x) = 1;
        }
    }
    return m;
}

struct BlobInstance {
    LatticeGeometry geometry{48, 48, 12, 12};
    std::unique_ptr<SyntheticBackend> backend;
    LatentState latent;
    SoftMaskStack mask;

    explicit BlobInstance(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> c(16, 32);
        std::uniform_int_distribution<int> r(6, 12);
        const int cy = c(rng);
        const int cx = c(rng);
        const int rad = r(rng);
        backend = make_synthetic_backend(seed, geometry, 5, 8);
        latent = backend->encode_frame(blob_frame(48, 48, cy, cx, rad));
        mask = downsample_mask(blob_mask(48, 48, cy, cx, rad), geometry);
    }
};

Outcome gradient_check_criterion() {
    BlobInstance inst(505);
    SelfPropagationObjective objective(*inst.backend, inst.latent, object_target(inst.mask, 1), Precision::f64);
    PromptEmbedding prompt(inst.backend->prompt_shape(), true);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd(0.0, 0.3);
    for (auto& v : prompt.values) v = nd(rng);
    std::vector<double> logits(5);
    for (auto& l : logits) l = nd(rng);
    const auto report = gradient_check(objective, prompt, HeadWeights(logits), 20, 505);
    return verdict(report.max_relative_error < 1e-4 && report.probes.size() == 20,
                   std::to_string(report.probes.size()) + " probes, max relative error " +
                       fmt(report.max_relative_error));
}

Outcome optimization_sanity() {
    OptimizerConfig cfg; // defaults: lr 1e-4
    cfg.steps = 200;
    std::ostringstream detail;
    bool ok = true;
    double worst_simplex = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        BlobInstance inst(600 + seed);
        const auto out = optimize_instance(*inst.backend, inst.latent, inst.mask, 1, cfg,
                                           [&](int, double, const HeadWeights& w) {
                                               double sum = 0.0;
                                               for (double v : w.weights()) sum += v;
                                               worst_simplex = std::max(worst_simplex, std::abs(sum - 1.0));
                                           });
        ok = ok && out.final_loss() < out.initial_loss();
        detail << (seed > 1 ? "; " : "") << fmt(out.initial_loss()) << "->" << fmt(out.final_loss());
    }
    ok = ok && worst_simplex <= 1e-6;
    return verdict(ok, "lr " + fmt(cfg.learning_rate) + ", loss " + detail.str() + ", max |sum w - 1| " +
                           fmt(worst_simplex));
}

Outcome argmax_invariance() {
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> log_scale(-6.0, 6.0);
    int changed = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const Grid<float> bg = random_soft(24, 24, rng);
        std::vector<Grid<float>> objs;
        for (int o = 0; o < 1 + trial % 4; ++o) objs.push_back(random_soft(24, 24, rng));
        if (trial % 5 == 0) objs.front() = bg; // exact ties
        const HardMask base = fuse_channels(bg, objs);
        for (int s = 0; s < 10; ++s) {
            const float scale = static_cast<float>(std::exp(log_scale(rng)));
            Grid<float> sbg = bg;
            for (auto& v : sbg.values()) v *= scale;
            auto sobjs = objs;
            for (auto& g : sobjs) {
                for (auto& v : g.values()) v *= scale;
            }
            const HardMask scaled = fuse_channels(sbg, sobjs);
            changed += !std::ranges::equal(scaled.labels.values(), base.labels.values());
        }
    }
    return verdict(changed == 0, "500 rescalings, " + std::to_string(changed) + " changed");
}

Outcome bank_law() {
    ReferenceBank bank(7);
    bank_update(bank, 0, {}, {}, SoftMaskStack(2, 1, 1));
    bool ok = true;
    std::size_t peak = static_cast<std::size_t>(bank.size());
    for (int f = 1; f <= 40; ++f) {
        bank_update(bank, f, {}, {}, SoftMaskStack(2, 1, 1));
        std::vector<int> expect = {0};
        for (int s = std::max(1, f - 6); s <= f; ++s) expect.push_back(s);
        ok = ok && bank.frame_indices() == expect && bank.size() <= bank.capacity();
        peak = std::max(peak, static_cast<std::size_t>(bank.size()));
    }
    return verdict(ok && bank.capacity() == 8, "F = 40, peak size " + std::to_string(peak) + " of capacity " +
                                                   std::to_string(bank.capacity()));
}

Outcome toy_tracking() {
    const fs::path root = testing::write_translation_dataset("accept-track");
    const DatasetManifest m = load_manifest(root, DatasetLayout::davis);
    const TrackOutcome out = cmd_track(testing::toy_config(root / "out"), m);
    fs::remove_all(root);
    if (!out.ok()) return fail(out.record.failures.front());
    std::ostringstream detail;
    bool ok = !out.results.empty();
    for (const auto& s : out.results.front().scores) {
        ok = ok && s.j == 1.0;
        detail << " frame " << s.frame << " J=" << fmt(s.j);
    }
    return verdict(ok, detail.str().substr(1));
}

Outcome determinism() {
    const fs::path root = testing::write_translation_dataset("accept-determinism");
    const DatasetManifest m = load_manifest(root, DatasetLayout::davis);
    const TrackOutcome a = cmd_track(testing::toy_config(root / "a"), m);
    const TrackOutcome b = cmd_track(testing::toy_config(root / "b"), m);
    bool ok = a.ok() && b.ok() && !a.record.artifacts.empty();
    std::size_t files = 0;
    for (const auto& [rel, blob] : a.record.artifacts) {
        ok = ok && fs::exists(root / "b" / rel) && sha1_hex(testing::slurp(root / "a" / rel)) == sha1_hex(testing::slurp(root / "b" / rel));
        ++files;
    }
    fs::remove_all(root);
    return verdict(ok, std::to_string(files) + " mask files compared by SHA-1");
}

// Hardware-gated criteria.

struct Hardware {
    fs::path davis;
    bool backbone = false;
    bool segmenter = false;
};

Hardware hardware() {
    Hardware h;
    if (const char* v = std::getenv("DRIFT_DAVIS_ROOT")) h.davis = v;
    h.backbone = std::getenv("DRIFT_BACKBONE") != nullptr;
    h.segmenter = std::getenv("DRIFT_SEGMENTER") != nullptr;
    return h;
}

std::optional<std::string> gate(const Hardware& h, bool needs_segmenter) {
    if (h.davis.empty() || !h.backbone) return "set DRIFT_DAVIS_ROOT and DRIFT_BACKBONE";
    if (needs_segmenter && !h.segmenter) return "set DRIFT_SEGMENTER";
    if (!torch_available()) return "built without TorchScript support";
    return std::nullopt;
}

DatasetManifest davis_val(const Hardware& h) {
    ManifestOptions opt;
    opt.image_set = "ImageSets/2017/val.txt";
    return load_manifest(h.davis, DatasetLayout::davis, opt);
}

RunConfig full_config(const std::string& tag) {
    RunConfig c;
    c.backend.kind = "torchscript";
    c.segmenter.kind = "torchscript";
    c.output_dir = fs::temp_directory_path() / ("drift-accept-" + tag);
    c.cache_dir = fs::temp_directory_path() / "drift-accept-cache";
    return c;
}

bool within(double value, double expect) { return std::abs(100.0 * value - expect) <= 1.0; }

Outcome davis_no_refinement(const Hardware& h) {
    if (auto why = gate(h, false)) return skip(*why);
    RunConfig c = full_config("defaults");
    c.refinement = RefinementMode::none;
    const TrackOutcome out = cmd_track(c, davis_val(h));
    if (!out.ok()) return fail(out.record.failures.front());
    const MetricSummary m = aggregate(out.results);
    return verdict(within(m.jf_mean, 74.8) && within(m.j_mean, 70.7) && within(m.f_mean, 78.9),
                   "J&F " + fmt(100 * m.jf_mean) + ", J " + fmt(100 * m.j_mean) + ", F " + fmt(100 * m.f_mean));
}

Outcome davis_refinement(const Hardware& h) {
    if (auto why = gate(h, true)) return skip(*why);
    RunConfig c = full_config("refined");
    c.refinement = RefinementMode::segmenter;
    const TrackOutcome out = cmd_track(c, davis_val(h));
    if (!out.ok()) return fail(out.record.failures.front());
    const MetricSummary m = aggregate(out.results);
    return verdict(within(m.jf_mean, 81.3), "J&F " + fmt(100 * m.jf_mean));
}

Outcome davis_null_prompt(const Hardware& h) {
    if (auto why = gate(h, false)) return skip(*why);
    RunConfig c = full_config("null");
    c.prompt = PromptMode::null;
    c.optimizer.optimize_heads = false;
    c.refinement = RefinementMode::none;
    const TrackOutcome out = cmd_track(c, davis_val(h));
    if (!out.ok()) return fail(out.record.failures.front());
    const MetricSummary m = aggregate(out.results);
    return verdict(within(m.jf_mean, 71.8), "J&F " + fmt(100 * m.jf_mean));
}

Outcome timestep_curve(const Hardware& h) {
    if (auto why = gate(h, false)) return skip(*why);
    RunConfig c = full_config("timestep");
    c.refinement = RefinementMode::none;
    std::vector<std::string> taus;
    for (int t = 21; t <= 201; t += 20) taus.push_back(std::to_string(t));
    const auto rows = cmd_ablate(c, davis_val(h), sweep_grid(SweepKind::timestep, taus, {}),
                                 c.output_dir / "timestep.csv");
    std::map<std::string, std::vector<double>> curve;
    for (const auto& r : rows) {
        if (!r.ok) return fail(r.point.label + ": " + r.message);
        curve[r.point.label.substr(r.point.label.find(',') + 1)].push_back(r.jf);
    }
    const auto& inv = curve["ddim"];
    const auto& rnd = curve["random"];
    bool dominates = inv.size() == rnd.size() && !inv.empty();
    for (std::size_t i = 0; dominates && i < inv.size(); ++i) dominates = inv[i] >= rnd[i];
    const double inv_drop = *std::max_element(inv.begin(), inv.end()) - inv.back();
    const double rnd_drop = *std::max_element(rnd.begin(), rnd.end()) - rnd.back();
    return verdict(dominates && inv_drop < rnd_drop,
                   "peak-to-201 drop ddim " + fmt(100 * inv_drop) + ", random " + fmt(100 * rnd_drop));
}

Outcome points_sweep(const Hardware& h) {
    if (auto why = gate(h, true)) return skip(*why);
    RunConfig c = full_config("points");
    const auto rows = cmd_ablate(c, davis_val(h), sweep_grid(SweepKind::points, {"1", "2", "5"}, {"40"}),
                                 c.output_dir / "points.csv");
    if (rows.size() != 3) return fail("unexpected grid size");
    for (const auto& r : rows) {
        if (!r.ok) return fail(r.point.label + ": " + r.message);
    }
    const double n1 = 100 * rows[0].jf;
    const double n2 = 100 * rows[1].jf;
    const double n5 = 100 * rows[2].jf;
    return verdict(n2 - n1 >= 10.0 && n2 - n5 >= 1.0, "n=1 " + fmt(n1) + ", n=2 " + fmt(n2) + ", n=5 " + fmt(n5));
}

} // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    const Hardware hw = hardware();
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "kernel stochasticity", kernel_stochasticity},
        {2, "identity propagation", identity_propagation},
        {3, "soft IoU oracle", soft_iou_oracle},
        {4, "metric oracle", metric_oracle},
        {5, "gradient check", gradient_check_criterion},
        {6, "optimization sanity", optimization_sanity},
        {7, "argmax invariance", argmax_invariance},
        {8, "reference bank law", bank_law},
        {9, "toy tracking", toy_tracking},
        {10, "determinism", determinism},
        {11, "DAVIS 2017 val, no refinement", [&] { return davis_no_refinement(hw); }},
        {12, "DAVIS 2017 val, segmenter refinement", [&] { return davis_refinement(hw); }},
        {13, "null prompt, uniform heads", [&] { return davis_null_prompt(hw); }},
        {14, "timestep curve shape", [&] { return timestep_curve(hw); }},
        {15, "points sweep", [&] { return points_sweep(hw); }},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::fail ? "FAIL" : "SKIP";
        std::printf("[%s] %2d %s: %s (%.1fs)\n", tag, c.id, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.verdict == Verdict::fail;
    }
    return failures == 0 ? 0 : 1;
}
