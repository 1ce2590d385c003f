#pragma once

#include "drift/eval/aggregate.hpp"
#include "drift/eval/dataset.hpp"
#include "drift/pipeline/config.hpp"
#include "drift/pipeline/session.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace drift {

/// Provenance of a tracking run: what was configured, where the time went,
/// what came out and how well it scored.
struct RunRecord {
    /// Canonical INI of the configuration, frozen when the run starts.
    std::string config;
    std::string config_sha1;
    /// Stage -> seconds on the main thread; sums to `wall_seconds`.
    std::map<std::string, double> stages;
    /// Stage -> seconds summed over workers (only when workers > 1).
    std::map<std::string, double> worker_stages;
    double wall_seconds = 0.0;
    int sequences = 0;
    int objects = 0;
    /// Per-sequence and global metrics where ground truth exists beyond the first frame.
    nlohmann::json metrics;
    /// Output path relative to the output directory -> git blob id.
    std::map<std::string, std::string> artifacts;
    std::vector<std::string> warnings;
    std::vector<std::string> failures;
};

nlohmann::json to_json(const RunRecord& record);

struct TrackOutcome {
    RunRecord record;
    std::vector<SequenceResult> results;
    bool ok() const { return record.failures.empty(); }
};

/// Tracks every sequence of the manifest, writes `<output>/<sequence>/<stem>.png`
/// and `<output>/run_record.json`. Sequences run as independent jobs on
/// `config.workers` threads; the first failure stops further jobs.
TrackOutcome cmd_track(const RunConfig& config, const DatasetManifest& manifest, RunCaches* caches = nullptr);

struct EvalOptions {
    double boundary_tolerance = 0.008;
    bool drop_last_frame = false;
};

struct EvalOutcome {
    std::vector<SequenceResult> results;
    MetricSummary summary;
};

/// Scores `<predictions>/<sequence>/<stem>.png` against the manifest's ground
/// truth and writes `<output>/summary.json`, `<output>/curve.csv` and one
/// `<output>/sequences/<sequence>.csv` per sequence. Throws Error listing every
/// missing prediction before scoring anything.
EvalOutcome cmd_eval(const std::filesystem::path& predictions, const DatasetManifest& manifest,
                     const std::filesystem::path& output, const EvalOptions& options = {});

enum class SweepKind { timestep, prompt, heads, refinement, points };

SweepKind parse_sweep(const std::string& name);
std::string to_string(SweepKind kind);

/// One grid point: a label and the overrides applied to the base config.
struct SweepPoint {
    std::string label;
    std::vector<std::string> overrides;
};

/// Grid of a sweep. Empty value lists select the published grids:
/// timestep {1, 21, ..., 201} x {random, ddim}; prompt {null, class, caption, learned};
/// heads {uniform, learned}; refinement {none, segmenter, crf}; points {1,2,3,5} x {5, 10, ..., 50}.
/// `values` overrides the first axis, `secondary` the second (points: p).
std::vector<SweepPoint> sweep_grid(SweepKind kind, const std::vector<std::string>& values,
                                   const std::vector<std::string>& secondary);

struct AblationRow {
    SweepPoint point;
    bool ok = false;
    double jf = 0.0;
    double j = 0.0;
    double f = 0.0;
    std::string message;
};

/// Runs cmd_track for every grid point under `<output>/<sweep>/<label>` with
/// shared caches and writes the table to `table`. Failed rows are marked and
/// the sweep continues.
std::vector<AblationRow> cmd_ablate(const RunConfig& config, const DatasetManifest& manifest,
                                    const std::vector<SweepPoint>& grid, const std::filesystem::path& table);

struct AdaptInstance {
    std::string sequence;
    int object = 0;
    /// "optimized", "cached", "diverged" or "failed".
    std::string status;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::string message;
};

/// Optimizes and stores the prompt of every (sequence, object) at its first
/// frame. Instances already in the store are skipped; failures are reported
/// per instance. The store lives in `<cache_dir>/prompts`
/// (`<output_dir>/cache/prompts` when no cache directory is configured).
std::vector<AdaptInstance> cmd_adapt(const RunConfig& config, const DatasetManifest& manifest);

} // namespace drift
