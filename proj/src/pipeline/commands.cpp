#include "drift/pipeline/commands.hpp"

#include "drift/core/hash.hpp"
#include "drift/core/image_io.hpp"
#include "drift/core/mask_ops.hpp"
#include "drift/eval/report.hpp"
#include "drift/pipeline/factory.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

namespace drift {
namespace fs = std::filesystem;
namespace {

// Backends are read-only after construction, so one per frame size is shared by all jobs.
class BackendPool {
  public:
    explicit BackendPool(const BackendConfig& config) : config_(config) {}

    const Backend& get(int height, int width) {
        std::lock_guard lock(mutex_);
        auto& slot = backends_[{height, width}];
        if (!slot) {
            slot = make_backend(config_, height, width);
        }
        return *slot;
    }

  private:
    BackendConfig config_;
    std::mutex mutex_;
    std::map<std::pair<int, int>, std::unique_ptr<Backend>> backends_;
};

// Runs job(i, timer) for i in [0, count) on `workers` threads. With one worker the
// jobs run inline on `timer`; otherwise each job gets its own timer, merged into
// `worker_timer`, and the whole pool is charged to `pool_stage` on `timer`.
// `job` returns false to stop scheduling further jobs.
void run_jobs(std::size_t count, int workers, StageTimer& timer, StageTimer& worker_timer, const std::string& pool_stage,
              const std::function<bool(std::size_t, StageTimer&)>& job) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            if (!job(i, timer)) {
                break;
            }
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex merge_mutex;
    std::vector<std::jthread> pool;
    const auto n = std::min<std::size_t>(count, static_cast<std::size_t>(workers));
    for (std::size_t w = 0; w < n; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count && !stop; i = next++) {
                StageTimer own;
                const bool go_on = job(i, own);
                {
                    std::lock_guard lock(merge_mutex);
                    worker_timer.merge(own);
                }
                if (!go_on) {
                    stop = true;
                }
            }
        });
    }
    pool.clear();
    timer.lap(pool_stage);
}

std::map<int, HardMask> scored_truth(const SequenceData& seq) {
    std::map<int, HardMask> truth;
    for (const auto& [frame, mask] : seq.annotations) {
        truth.emplace(frame, mask);
    }
    return truth;
}

bool has_scored_frames(const std::map<int, int>& first_frame, const std::set<int>& annotated) {
    for (const auto& [object, first] : first_frame) {
        if (annotated.upper_bound(first) != annotated.end()) {
            return true;
        }
    }
    return false;
}

std::set<int> scored_frames(const std::map<int, int>& first_frame, const std::set<int>& annotated) {
    std::set<int> out;
    int earliest = std::numeric_limits<int>::max();
    for (const auto& [object, first] : first_frame) {
        earliest = std::min(earliest, first);
    }
    for (int f : annotated) {
        if (f > earliest) {
            out.insert(f);
        }
    }
    return out;
}

const Palette& palette_or_default(const Palette& p) { return p.empty() ? davis_palette() : p; }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

std::string sanitize_label(std::string label) {
    for (char& c : label) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.' && c != '=') {
            c = '_';
        }
    }
    return label;
}

std::vector<std::string> or_default(const std::vector<std::string>& values, std::vector<std::string> fallback) {
    return values.empty() ? fallback : values;
}

} // namespace

nlohmann::json to_json(const RunRecord& record) {
    nlohmann::json j;
    j["config"] = record.config;
    j["config_sha1"] = record.config_sha1;
    j["stages"] = record.stages;
    j["worker_stages"] = record.worker_stages;
    j["wall_seconds"] = record.wall_seconds;
    j["sequences"] = record.sequences;
    j["objects"] = record.objects;
    j["seconds_per_object"] = record.objects > 0 ? record.wall_seconds / record.objects : 0.0;
    j["metrics"] = record.metrics;
    j["artifacts"] = record.artifacts;
    j["warnings"] = record.warnings;
    j["failures"] = record.failures;
    return j;
}

TrackOutcome cmd_track(const RunConfig& config, const DatasetManifest& manifest, RunCaches* caches) {
    StageTimer timer;
    StageTimer worker_timer;
    config.validate();
    TrackOutcome outcome;
    RunRecord& record = outcome.record;
    record.config = to_ini(config);
    record.config_sha1 = sha1_hex(record.config);
    record.sequences = static_cast<int>(manifest.sequences.size());
    record.objects = manifest.object_count();

    std::unique_ptr<RunCaches> owned;
    if (caches == nullptr) {
        owned = std::make_unique<RunCaches>(config.cache_dir);
        caches = owned.get();
    }
    fs::create_directories(config.output_dir);
    BackendPool backends(config.backend);

    struct SequenceOutput {
        std::map<std::string, std::string> artifacts;
        std::vector<std::string> warnings;
        std::optional<SequenceResult> result;
        std::string failure;
    };
    std::vector<SequenceOutput> outputs(manifest.sequences.size());
    timer.lap("setup");

    run_jobs(manifest.sequences.size(), config.workers, timer, worker_timer, "tracking",
             [&](std::size_t i, StageTimer& t) {
                 const SequenceEntry& entry = manifest.sequences[i];
                 SequenceOutput& out = outputs[i];
                 try {
                     const SequenceData seq = load_sequence(entry);
                     t.lap("decode");
                     const Backend& backend = backends.get(seq.frames.front().height(), seq.frames.front().width());
                     t.lap("backend");
                     TrackingSession session(config, backend, caches);
                     TrackResult tracked = session.run(seq, t);
                     out.warnings = std::move(tracked.warnings);

                     const fs::path dir = config.output_dir / seq.name;
                     fs::create_directories(dir);
                     for (int f = 0; f < seq.frame_count(); ++f) {
                         const fs::path path = dir / (seq.stems[static_cast<std::size_t>(f)] + ".png");
                         write_label_png(path, tracked.masks[static_cast<std::size_t>(f)].labels,
                                         palette_or_default(seq.palette));
                         out.artifacts[fs::relative(path, config.output_dir).generic_string()] = git_blob_hash(path);
                     }
                     t.lap("writing");

                     if (has_scored_frames(seq.first_frame, entry.annotated_frames())) {
                         SequenceScoringInput input;
                         input.sequence = seq.name;
                         input.truth = scored_truth(seq);
                         for (int f = 0; f < seq.frame_count(); ++f) {
                             input.prediction.emplace(f, std::move(tracked.masks[static_cast<std::size_t>(f)]));
                         }
                         input.first_frame = seq.first_frame;
                         input.seen = seq.seen;
                         out.result = score_sequence(input, ScoringOptions{config.boundary_tolerance, false, -1});
                     }
                     t.lap("evaluation");
                     spdlog::info("{}: tracked {} frames", seq.name, seq.frame_count());
                     return true;
                 } catch (const std::exception& e) {
                     out.failure = entry.name + ": " + e.what();
                     spdlog::error("{}", out.failure);
                     return false;
                 }
             });

    for (auto& out : outputs) {
        record.artifacts.insert(out.artifacts.begin(), out.artifacts.end());
        for (auto& w : out.warnings) {
            record.warnings.push_back(std::move(w));
        }
        if (!out.failure.empty()) {
            record.failures.push_back(out.failure);
        }
        if (out.result) {
            outcome.results.push_back(std::move(*out.result));
        }
    }
    if (!outcome.results.empty()) {
        record.metrics = results_to_json(outcome.results);
    }
    timer.lap("record");
    record.stages = timer.stages();
    record.worker_stages = worker_timer.stages();
    record.wall_seconds = timer.elapsed();
    write_json(config.output_dir / "run_record.json", to_json(record));
    return outcome;
}

EvalOutcome cmd_eval(const fs::path& predictions, const DatasetManifest& manifest, const fs::path& output,
                     const EvalOptions& options) {
    std::vector<std::string> gaps;
    for (const auto& entry : manifest.sequences) {
        for (int f : scored_frames(entry.first_frame, entry.annotated_frames())) {
            const fs::path path = predictions / entry.name / (entry.frame_stem(f) + ".png");
            if (!fs::exists(path)) {
                gaps.push_back(entry.name + "/" + entry.frame_stem(f) + ".png");
            }
        }
    }
    if (!gaps.empty()) {
        std::string msg = "missing predictions (" + std::to_string(gaps.size()) + "):";
        for (const auto& g : gaps) {
            msg += "\n  " + g;
        }
        throw IoError(msg);
    }

    EvalOutcome outcome;
    fs::create_directories(output / "sequences");
    for (const auto& entry : manifest.sequences) {
        SequenceScoringInput input;
        input.sequence = entry.name;
        for (const auto& [frame, path] : entry.annotations) {
            input.truth.emplace(frame, load_annotation(path, entry.object_count()));
        }
        for (int f : scored_frames(entry.first_frame, entry.annotated_frames())) {
            input.prediction.emplace(
                f, load_annotation(predictions / entry.name / (entry.frame_stem(f) + ".png"), entry.object_count()));
        }
        input.first_frame = entry.first_frame;
        input.seen = entry.seen;
        const ScoringOptions scoring{options.boundary_tolerance, options.drop_last_frame, entry.frame_count() - 1};
        SequenceResult result = score_sequence(input, scoring);
        write_sequence_csv(output / "sequences" / (entry.name + ".csv"), result);
        outcome.results.push_back(std::move(result));
    }
    outcome.summary = aggregate(outcome.results);
    write_json(output / "summary.json", results_to_json(outcome.results));
    write_curve_csv(output / "curve.csv", per_frame_curve(outcome.results));
    return outcome;
}

SweepKind parse_sweep(const std::string& name) {
    static const std::map<std::string, SweepKind> kinds = {{"timestep", SweepKind::timestep},
                                                           {"prompt", SweepKind::prompt},
                                                           {"heads", SweepKind::heads},
                                                           {"refinement", SweepKind::refinement},
                                                           {"points", SweepKind::points}};
    const auto it = kinds.find(name);
    if (it == kinds.end()) {
        throw ConfigError("unknown sweep '" + name + "' (expected timestep, prompt, heads, refinement or points)");
    }
    return it->second;
}

std::string to_string(SweepKind kind) {
    switch (kind) {
    case SweepKind::timestep:
        return "timestep";
    case SweepKind::prompt:
        return "prompt";
    case SweepKind::heads:
        return "heads";
    case SweepKind::refinement:
        return "refinement";
    case SweepKind::points:
        return "points";
    }
    return "unknown";
}

std::vector<SweepPoint> sweep_grid(SweepKind kind, const std::vector<std::string>& values,
                                   const std::vector<std::string>& secondary) {
    std::vector<SweepPoint> grid;
    switch (kind) {
    case SweepKind::timestep: {
        std::vector<std::string> taus;
        for (int t = 1; t <= 201; t += 20) {
            taus.push_back(std::to_string(t));
        }
        for (const auto& tau : or_default(values, taus)) {
            for (const auto& mode : or_default(secondary, {"random", "ddim"})) {
                grid.push_back({"tau=" + tau + "," + mode, {"inversion.timestep=" + tau, "inversion.mode=" + mode}});
            }
        }
        break;
    }
    case SweepKind::prompt:
        for (const auto& mode : or_default(values, {"null", "class", "caption", "learned"})) {
            grid.push_back({mode, {"prompt.mode=" + mode}});
        }
        break;
    case SweepKind::heads:
        for (const auto& mode : or_default(values, {"uniform", "learned"})) {
            if (mode != "uniform" && mode != "learned") {
                throw ConfigError("heads sweep values are 'uniform' or 'learned', got '" + mode + "'");
            }
            grid.push_back({mode, {"optimizer.optimize_heads=" + std::string(mode == "learned" ? "true" : "false")}});
        }
        break;
    case SweepKind::refinement:
        for (const auto& mode : or_default(values, {"none", "segmenter", "crf"})) {
            grid.push_back({mode, {"refine.mode=" + mode}});
        }
        break;
    case SweepKind::points: {
        std::vector<std::string> sets;
        for (int p = 5; p <= 50; p += 5) {
            sets.push_back(std::to_string(p));
        }
        for (const auto& n : or_default(values, {"1", "2", "3", "5"})) {
            for (const auto& p : or_default(secondary, sets)) {
                grid.push_back({"n=" + n + ",p=" + p, {"refine.mode=segmenter", "refine.points=" + n, "refine.sets=" + p}});
            }
        }
        break;
    }
    }
    return grid;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& config, const DatasetManifest& manifest,
                                    const std::vector<SweepPoint>& grid, const fs::path& table) {
    std::vector<AblationRow> rows;
    RunCaches caches(config.cache_dir);
    for (const auto& point : grid) {
        AblationRow row;
        row.point = point;
        try {
            RunConfig c = config;
            apply_overrides(c, point.overrides);
            c.output_dir = config.output_dir / sanitize_label(point.label);
            const TrackOutcome out = cmd_track(c, manifest, &caches);
            if (!out.ok()) {
                row.message = out.record.failures.front();
            } else if (out.results.empty()) {
                row.message = "no frames with ground truth to score";
            } else {
                const MetricSummary s = aggregate(out.results);
                row.ok = true;
                row.jf = s.jf_mean;
                row.j = s.j_mean;
                row.f = s.f_mean;
            }
        } catch (const std::exception& e) {
            row.message = e.what();
        }
        if (!row.ok) {
            spdlog::error("ablation row {} failed: {}", point.label, row.message);
        }
        rows.push_back(std::move(row));
    }

    if (table.has_parent_path()) {
        fs::create_directories(table.parent_path());
    }
    std::ofstream out(table);
    if (!out) {
        throw IoError("cannot write " + table.string());
    }
    out << "setting,J&F_m,J_m,F_m,status,message\n";
    char buf[96];
    for (const auto& r : rows) {
        out << csv_field(r.point.label) << ',';
        if (r.ok) {
            std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f", r.jf, r.j, r.f);
            out << buf << ",ok,\n";
        } else {
            out << ",,,failed," << csv_field(r.message) << '\n';
        }
    }
    return rows;
}

std::vector<AdaptInstance> cmd_adapt(const RunConfig& config, const DatasetManifest& manifest) {
    config.validate();
    if (config.prompt != PromptMode::learned) {
        throw ConfigError("adapt requires prompt.mode = learned");
    }
    const fs::path root = config.cache_dir.empty() ? config.output_dir / "cache" : config.cache_dir;
    RunCaches caches(root);
    BackendPool backends(config.backend);

    std::vector<std::vector<AdaptInstance>> per_sequence(manifest.sequences.size());
    StageTimer timer;
    StageTimer worker_timer;
    run_jobs(manifest.sequences.size(), config.workers, timer, worker_timer, "adaptation",
             [&](std::size_t i, StageTimer&) {
                 const SequenceEntry& entry = manifest.sequences[i];
                 auto& out = per_sequence[i];
                 std::optional<SequenceData> seq;
                 const Backend* backend = nullptr;
                 try {
                     seq = load_sequence(entry);
                     backend = &backends.get(seq->frames.front().height(), seq->frames.front().width());
                 } catch (const std::exception& e) {
                     for (const auto& [object, first] : entry.first_frame) {
                         out.push_back({entry.name, object, "failed", 0.0, 0.0, e.what()});
                     }
                     return true;
                 }
                 TrackingSession session(config, *backend, &caches);
                 const LatticeGeometry geometry = session.geometry_for(*seq);
                 for (const auto& [object, first] : seq->first_frame) {
                     AdaptInstance inst{seq->name, object, "optimized", 0.0, 0.0, {}};
                     try {
                         const LatentState latent = session.frame_latent(*seq, first);
                         const SoftMaskStack mask = downsample_mask(seq->annotations.at(first), geometry);
                         const PromptKey key{seq->name, object, session.prompt_fingerprint(latent, mask, object)};
                         if (caches.prompts->contains(key)) {
                             inst.status = "cached";
                         }
                         const ChannelPrompt prompt = session.object_prompt(*seq, object, first, latent, mask);
                         inst.initial_loss = prompt.adapted->initial_loss();
                         inst.final_loss = prompt.adapted->final_loss();
                     } catch (const DivergenceError& e) {
                         inst.status = "diverged";
                         inst.message = e.what();
                     } catch (const std::exception& e) {
                         inst.status = "failed";
                         inst.message = e.what();
                     }
                     if (!inst.message.empty()) {
                         spdlog::error("{} object {}: {}", inst.sequence, inst.object, inst.message);
                     }
                     out.push_back(std::move(inst));
                 }
                 return true;
             });

    std::vector<AdaptInstance> all;
    for (auto& v : per_sequence) {
        for (auto& inst : v) {
            all.push_back(std::move(inst));
        }
    }
    return all;
}

} // namespace drift
