#include "drift/core/error.hpp"
#include "drift/core/hash.hpp"
#include "drift/pipeline/commands.hpp"
#include "drift/pipeline/factory.hpp"

#include "toy_pipeline.hpp"

#include <doctest.h>

#include <cstdlib>
#include <thread>

using namespace drift;
namespace fs = std::filesystem;

TEST_CASE("default config reproduces the published hyperparameters") {
    const RunConfig c;
    CHECK(c.timestep == 41);
    CHECK(c.inversion_steps == 50);
    CHECK(c.history == 7);
    CHECK(c.radius == 14.0);
    CHECK(c.top_k == 15);
    CHECK(c.points == 2);
    CHECK(c.point_sets == 40);
    CHECK(c.optimizer.learning_rate == 1e-4);
    CHECK(c.optimizer.steps == 3500);
    CHECK(c.crf.kernel_size == 5);
    CHECK(c.crf.steps == 30);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("ini text round-trips and rejects unknown keys") {
    RunConfig c;
    c.timestep = 81;
    c.prompt = PromptMode::caption;
    c.refinement = RefinementMode::crf;
    c.optimizer.learning_rate = 3e-3;
    c.backend.layers = {"a.attn1", "b.attn1"};
    const RunConfig back = parse_config(to_ini(c));
    CHECK(to_ini(back) == to_ini(c));
    CHECK(back.backend.layers.size() == 2);
    CHECK(back.optimizer.learning_rate == 3e-3);

    CHECK(parse_config("[kernel]\ntop_k=9\n").top_k == 9);
    CHECK_THROWS_WITH_AS(parse_config("[kernel]\ntopk=9\n"), doctest::Contains("unknown key kernel.topk"),
                         ConfigError);
    CHECK_THROWS_AS(parse_config("[nope]\na=1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[kernel]\nradius=-1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[kernel]\ntop_k=many\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[prompt]\nmode=poem\n"), ConfigError);

    apply_overrides(c, {"refine.points=5", "inversion.mode=random"});
    CHECK(c.points == 5);
    CHECK(c.inversion == InversionMode::random_noise);
    CHECK_THROWS_AS(apply_overrides(c, {"refine.points"}), ConfigError);
}

TEST_CASE("stage timer laps add up to the elapsed time") {
    StageTimer t;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    t.lap("a");
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    t.lap("b");
    CHECK(t.stages().size() == 2);
    CHECK(t.charged() == doctest::Approx(t.elapsed()).epsilon(0.02));
}

TEST_CASE("toy translation is tracked exactly and reproducibly") {
    const fs::path root = testing::write_translation_dataset("track");
    const DatasetManifest m = load_manifest(root, DatasetLayout::davis);
    const TrackOutcome a = cmd_track(testing::toy_config(root / "out-a"), m);
    REQUIRE(a.ok());
    REQUIRE(a.results.size() == 1);
    for (const auto& s : a.results.front().scores) {
        CHECK(s.j == 1.0);
        CHECK(s.f == 1.0);
    }
    CHECK(a.record.artifacts.size() == 3);
    CHECK(fs::exists(root / "out-a" / "square" / "00002.png"));
    CHECK(fs::exists(root / "out-a" / "run_record.json"));

    double charged = 0.0;
    for (const auto& [stage, s] : a.record.stages) charged += s;
    CHECK(charged == doctest::Approx(a.record.wall_seconds).epsilon(0.02));

    const TrackOutcome b = cmd_track(testing::toy_config(root / "out-b"), m);
    CHECK(a.record.artifacts == b.record.artifacts);
    for (const auto& [rel, blob] : a.record.artifacts) {
        CHECK(git_blob_hash(root / "out-b" / rel) == blob);
    }
    fs::remove_all(root);
}

TEST_CASE("pipeline variants run on the toy fixture") {
    const fs::path root = testing::write_translation_dataset("variants");
    const DatasetManifest m = load_manifest(root, DatasetLayout::davis);
    struct Variant {
        const char* name;
        std::vector<std::string> overrides;
        bool exact;
    };
    const Variant variants[] = {
        {"null", {"prompt.mode=null"}, true},
        {"oracle", {"refine.mode=segmenter", "segmenter.kind=oracle"}, true},
        {"crf", {"refine.mode=crf"}, true},
        {"cosine", {"kernel.mode=cosine", "prompt.mode=null"}, false},
        {"random", {"inversion.mode=random", "prompt.mode=null"}, false},
    };
    for (const auto& v : variants) {
        CAPTURE(v.name);
        RunConfig c = testing::toy_config(root / v.name);
        apply_overrides(c, v.overrides);
        const TrackOutcome out = cmd_track(c, m);
        REQUIRE(out.ok());
        REQUIRE(out.results.size() == 1);
        if (v.exact) {
            CHECK(out.results.front().j_mean == 1.0);
        } else {
            CHECK(out.results.front().j_mean > 0.0);
        }
    }
    fs::remove_all(root);
}

TEST_CASE("class prompts read sidecar files and fail fast without them") {
    const fs::path root = testing::write_translation_dataset("sidecar");
    const DatasetManifest m = load_manifest(root, DatasetLayout::davis);
    RunConfig c = testing::toy_config(root / "out");
    c.prompt = PromptMode::class_name;
    c.prompt_dir = root / "prompts";
    const TrackOutcome missing = cmd_track(c, m);
    REQUIRE_FALSE(missing.ok());
    CHECK(missing.record.failures.front().find("[adaptation]") != std::string::npos);
    CHECK(missing.record.failures.front().find("missing prompt sidecar") != std::string::npos);
    fs::create_directories(root / "prompts" / "square");
    std::ofstream(root / "prompts" / "square" / "1.class.txt") << "red square\n";
    CHECK(cmd_track(c, m).ok());
    fs::remove_all(root);
}

TEST_CASE("missing backbone weights fail with the stage name") {
    const fs::path root = testing::write_translation_dataset("weights");
    const DatasetManifest m = load_manifest(root, DatasetLayout::davis);
    RunConfig c = testing::toy_config(root / "out");
    c.backend.kind = "torchscript";
    c.backend.weights = root / "nothing.pt";
    const TrackOutcome out = cmd_track(c, m);
    REQUIRE_FALSE(out.ok());
    CHECK(out.record.failures.front().find("missing weights: backbone") != std::string::npos);
    fs::remove_all(root);
}

TEST_CASE("several workers produce the same masks as one") {
    const fs::path root = testing::fresh_dir("workers");
    testing::write_toy_sequence(root, "s1", 32, 32, 1, testing::translation_frames());
    testing::write_toy_sequence(root, "s2", 32, 32, 1, testing::translation_frames(6, 2, 4, 4));
    testing::write_toy_sequence(root, "s3", 32, 32, 1, testing::translation_frames(8, 1, 18, 12));
    const DatasetManifest m = load_manifest(root, DatasetLayout::davis);
    RunConfig one = testing::toy_config(root / "one");
    one.prompt = PromptMode::null;
    RunConfig three = one;
    three.output_dir = root / "three";
    three.workers = 3;
    const TrackOutcome a = cmd_track(one, m);
    const TrackOutcome b = cmd_track(three, m);
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    CHECK(a.record.artifacts == b.record.artifacts);
    CHECK(b.record.stages.contains("tracking"));
    CHECK(b.record.worker_stages.contains("kernel"));
    double charged = 0.0;
    for (const auto& [stage, s] : b.record.stages) charged += s;
    CHECK(charged == doctest::Approx(b.record.wall_seconds).epsilon(0.02));
    fs::remove_all(root);
}

TEST_CASE("eval scores ground truth as perfect and lists coverage gaps") {
    const fs::path root = testing::write_translation_dataset("eval");
    const DatasetManifest m = load_manifest(root, DatasetLayout::davis);
    const fs::path gt = root / "Annotations" / "480p";
    const EvalOutcome perfect = cmd_eval(gt, m, root / "eval");
    CHECK(perfect.summary.jf_mean == 1.0);
    CHECK(fs::exists(root / "eval" / "summary.json"));
    CHECK(fs::exists(root / "eval" / "curve.csv"));
    CHECK(fs::exists(root / "eval" / "sequences" / "square.csv"));

    const fs::path blank = root / "blank" / "square";
    fs::create_directories(blank);
    for (const char* stem : {"00000", "00001", "00002"}) {
        write_label_png(blank / (std::string(stem) + ".png"), Grid<std::uint8_t>(32, 32, 0));
    }
    const EvalOutcome zero = cmd_eval(root / "blank", m, root / "eval-blank");
    CHECK(zero.summary.j_mean == 0.0);

    fs::remove(blank / "00001.png");
    fs::remove(blank / "00002.png");
    try {
        cmd_eval(root / "blank", m, root / "eval-gap");
        FAIL("expected a coverage error");
    } catch (const IoError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("missing predictions (2)") != std::string::npos);
        CHECK(msg.find("square/00001.png") != std::string::npos);
        CHECK(msg.find("square/00002.png") != std::string::npos);
    }
    fs::remove_all(root);
}

TEST_CASE("sweep grids follow the published axes") {
    const auto ts = sweep_grid(SweepKind::timestep, {}, {});
    CHECK(ts.size() == 22);
    CHECK(ts.front().label == "tau=1,random");
    CHECK(ts.back().label == "tau=201,ddim");
    const auto pts = sweep_grid(SweepKind::points, {}, {});
    CHECK(pts.size() == 40);
    CHECK(sweep_grid(SweepKind::points, {"2"}, {"40"}).front().overrides ==
          std::vector<std::string>{"refine.mode=segmenter", "refine.points=2", "refine.sets=40"});
    CHECK(sweep_grid(SweepKind::prompt, {}, {}).size() == 4);
    CHECK(sweep_grid(SweepKind::heads, {}, {}).size() == 2);
    CHECK(sweep_grid(SweepKind::refinement, {}, {}).size() == 3);
    CHECK_THROWS_AS(parse_sweep("colour"), ConfigError);
}

TEST_CASE("ablation tables mark failed rows and keep going") {
    const fs::path root = testing::write_translation_dataset("ablate");
    const DatasetManifest m = load_manifest(root, DatasetLayout::davis);
    RunConfig c = testing::toy_config(root / "out");
    c.prompt = PromptMode::null;
    c.segmenter.kind = "torchscript";
    c.segmenter.weights = root / "missing.pt";
    const auto rows = cmd_ablate(c, m, sweep_grid(SweepKind::refinement, {}, {}), root / "table.csv");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].ok);
    CHECK(rows[0].jf == 1.0);
    CHECK_FALSE(rows[1].ok);
    CHECK(rows[2].ok);
    const std::string table = testing::slurp(root / "table.csv");
    CHECK(table.rfind("setting,J&F_m,J_m,F_m,status,message\n", 0) == 0);
    CHECK(table.find("segmenter,,,,failed,") != std::string::npos);

    const auto none = cmd_ablate(c, DatasetManifest{}, {}, root / "empty.csv");
    CHECK(none.empty());
    CHECK(testing::slurp(root / "empty.csv") == "setting,J&F_m,J_m,F_m,status,message\n");
    fs::remove_all(root);
}

TEST_CASE("adapt stores one artifact per object and resumes") {
    const fs::path root = testing::fresh_dir("adapt");
    testing::write_toy_sequence(root, "two", 16, 16, 2, {{{1, 2, 2, 4}, {2, 10, 8, 4}}, {{1, 2, 3, 4}, {2, 10, 9, 4}}});
    testing::write_toy_sequence(root, "one", 16, 16, 1, {{{1, 6, 6, 5}}, {{1, 6, 7, 5}}});
    const DatasetManifest m = load_manifest(root, DatasetLayout::davis);
    RunConfig c = testing::toy_config(root / "out");
    c.backend.stride = 2;
    c.optimizer.steps = 40;
    c.cache_dir = root / "cache";
    const auto first = cmd_adapt(c, m);
    REQUIRE(first.size() == 3);
    for (const auto& inst : first) {
        CAPTURE(inst.sequence);
        CHECK(inst.status == "optimized");
        CHECK(inst.final_loss < inst.initial_loss);
    }
    int artifacts = 0;
    for (const auto& e : fs::directory_iterator(root / "cache" / "prompts")) {
        artifacts += e.path().extension() == ".json";
    }
    CHECK(artifacts == 3);

    // Simulate an interrupted batch: drop one artifact and rerun.
    for (const auto& e : fs::directory_iterator(root / "cache" / "prompts")) {
        fs::remove(e.path());
        break;
    }
    const auto second = cmd_adapt(c, m);
    int optimized = 0;
    for (const auto& inst : second) optimized += inst.status == "optimized";
    CHECK(optimized == 1);

    RunConfig zero = c;
    zero.optimizer.steps = 0;
    zero.cache_dir = root / "cache-zero";
    for (const auto& inst : cmd_adapt(zero, m)) {
        CHECK(inst.status == "optimized");
        CHECK(inst.final_loss == inst.initial_loss);
    }

    RunConfig wrong = c;
    wrong.prompt = PromptMode::null;
    CHECK_THROWS_AS(cmd_adapt(wrong, m), ConfigError);
    fs::remove_all(root);
}

TEST_CASE("late objects start from their first annotated frame") {
    const fs::path root = testing::fresh_dir("late");
    testing::write_toy_sequence(root, "late", 32, 32, 2,
                                {{{1, 4, 4, 6}}, {{1, 4, 6, 6}, {2, 20, 20, 6}}, {{1, 4, 8, 6}, {2, 20, 22, 6}}});
    const DatasetManifest m = load_manifest(root, DatasetLayout::ytvos);
    RunConfig c = testing::toy_config(root / "out");
    c.prompt = PromptMode::null;
    const TrackOutcome out = cmd_track(c, m);
    REQUIRE(out.ok());
    const auto& r = out.results.front();
    REQUIRE(r.objects.size() == 2);
    CHECK(r.objects[0].frame_count == 2);
    CHECK(r.objects[1].frame_count == 1);
    CHECK(r.objects[1].j_mean == 1.0);
    fs::remove_all(root);
}

TEST_CASE("factory builds synthetic backends per frame size") {
    BackendConfig b;
    b.stride = 8;
    const auto backend = make_backend(b, 60, 100);
    const LatticeGeometry g = backend_geometry(*backend, 60, 100);
    CHECK(g.latent_height() == 8);
    CHECK(g.latent_width() == 13);
    b.kind = "torchscript";
    b.weights = "/nonexistent/backbone.pt";
    CHECK_THROWS_AS(make_backend(b, 60, 100), NotInitializedError);
}

TEST_CASE("shipped configurations load and validate") {
    int count = 0;
    for (const auto& e : fs::directory_iterator(fs::path(DRIFT_SOURCE_DIR) / "configs")) {
        if (e.path().extension() != ".ini") continue;
        CAPTURE(e.path().string());
        CHECK_NOTHROW(load_config(e.path()).validate());
        ++count;
    }
    CHECK(count >= 5);
    const RunConfig baseline = load_config(fs::path(DRIFT_SOURCE_DIR) / "configs" / "baseline.ini");
    CHECK(baseline.prompt == PromptMode::null);
    CHECK(baseline.refinement == RefinementMode::none);
    CHECK_FALSE(baseline.optimizer.optimize_heads);
}
