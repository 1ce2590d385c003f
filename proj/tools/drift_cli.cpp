#include "drift/pipeline/commands.hpp"

#include "drift/eval/report.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>
#include <optional>

namespace {

using namespace drift;

struct DatasetArgs {
    std::filesystem::path root;
    std::string layout = "davis";
    std::string image_set;
    std::string resolution = "480p";
    std::filesystem::path unseen;
    std::vector<std::string> only;
};

// Flags that mirror RunConfig fields; each one set on the command line becomes an override.
struct ConfigArgs {
    std::filesystem::path file;
    std::vector<std::string> assignments;
    std::map<std::string, std::string> flags;
    bool print = false;
};

void add_dataset_flags(CLI::App* app, DatasetArgs& d) {
    app->add_option("--dataset", d.root, "Dataset root (JPEGImages/ and Annotations/)")->required();
    app->add_option("--layout", d.layout, "davis, ytvos or longvideos")->capture_default_str();
    app->add_option("--image-set", d.image_set, "Sequence list below ImageSets/ (e.g. 2017/val.txt)");
    app->add_option("--resolution", d.resolution, "Resolution subdirectory")->capture_default_str();
    app->add_option("--unseen-categories", d.unseen, "File listing unseen category names");
    app->add_option("--sequence", d.only, "Restrict to these sequences");
}

void add_config_flags(CLI::App* app, ConfigArgs& c) {
    app->add_option("--config", c.file, "INI run configuration")->check(CLI::ExistingFile);
    app->add_option("--set", c.assignments, "Override section.key=value (repeatable)");
    app->add_flag("--print-config", c.print, "Print the effective configuration and continue");
    static const std::vector<std::pair<std::string, std::string>> mirrored = {
        {"--backend", "backend.kind"},
        {"--backend-weights", "backend.weights"},
        {"--layers", "backend.layers"},
        {"--segmenter", "segmenter.kind"},
        {"--segmenter-weights", "segmenter.weights"},
        {"--inversion", "inversion.mode"},
        {"--timestep", "inversion.timestep"},
        {"--inversion-steps", "inversion.steps"},
        {"--kernel", "kernel.mode"},
        {"--history", "kernel.history"},
        {"--radius", "kernel.radius"},
        {"--top-k", "kernel.top_k"},
        {"--prompt", "prompt.mode"},
        {"--prompt-dir", "prompt.dir"},
        {"--lr", "optimizer.learning_rate"},
        {"--opt-steps", "optimizer.steps"},
        {"--refinement", "refine.mode"},
        {"--points", "refine.points"},
        {"--sets", "refine.sets"},
        {"--seed", "run.seed"},
        {"--cache-dir", "run.cache_dir"},
        {"--output", "run.output_dir"},
        {"--workers", "run.workers"},
    };
    for (const auto& [flag, key] : mirrored) {
        app->add_option_function<std::string>(
            flag, [&c, key = key](const std::string& v) { c.flags[key] = v; }, "Sets " + key);
    }
}

RunConfig resolve_config(const ConfigArgs& args) {
    RunConfig config = args.file.empty() ? RunConfig{} : load_config(args.file);
    std::vector<std::string> overrides;
    for (const auto& [key, value] : args.flags) {
        overrides.push_back(key + "=" + value);
    }
    overrides.insert(overrides.end(), args.assignments.begin(), args.assignments.end());
    apply_overrides(config, overrides);
    config.validate();
    if (args.print) {
        std::cout << to_ini(config);
    }
    return config;
}

DatasetManifest resolve_manifest(const DatasetArgs& d) {
    ManifestOptions options;
    options.image_set = d.image_set;
    options.resolution = d.resolution;
    options.unseen_categories = d.unseen;
    options.only = d.only;
    return load_manifest(d.root, parse_layout(d.layout), options);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diffusion-attention video object segmentation: tracking, evaluation, ablation, adaptation"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

    DatasetArgs dataset;
    ConfigArgs config_args;

    auto* track = app.add_subcommand("track", "Track every sequence and write indexed PNG masks");
    add_dataset_flags(track, dataset);
    add_config_flags(track, config_args);

    std::filesystem::path predictions;
    std::filesystem::path eval_output = "eval";
    double tolerance = 0.008;
    bool drop_last = false;
    auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
    add_dataset_flags(eval, dataset);
    eval->add_option("--predictions", predictions, "Directory of <sequence>/<frame>.png predictions")->required();
    eval->add_option("--output", eval_output, "Directory for summary.json, curve.csv, sequences/")
        ->capture_default_str();
    eval->add_option("--boundary-tolerance", tolerance, "Fraction of the diagonal (< 1) or pixels")
        ->capture_default_str();
    eval->add_flag("--drop-last-frame", drop_last, "Skip the last frame of every sequence");

    std::string sweep;
    std::vector<std::string> values;
    std::vector<std::string> secondary;
    std::filesystem::path table;
    auto* ablate = app.add_subcommand("ablate", "Run a sweep of tracking runs and tabulate J&F");
    add_dataset_flags(ablate, dataset);
    add_config_flags(ablate, config_args);
    ablate->add_option("--sweep", sweep, "timestep, prompt, heads, refinement or points")->required();
    ablate->add_option("--values", values, "First grid axis (default: the published grid)");
    ablate->add_option("--secondary", secondary, "Second grid axis (timestep: modes, points: p)");
    bool empty_grid = false;
    ablate->add_flag("--empty-grid", empty_grid, "Run an empty grid (writes the table header only)");
    ablate->add_option("--table", table, "Output table (default <output>/<sweep>.csv)");

    auto* adapt = app.add_subcommand("adapt", "Optimize and store per-object prompts");
    add_dataset_flags(adapt, dataset);
    add_config_flags(adapt, config_args);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*track) {
            const RunConfig config = resolve_config(config_args);
            const TrackOutcome out = cmd_track(config, resolve_manifest(dataset));
            if (!out.results.empty()) {
                std::cout << summary_to_json(aggregate(out.results)).dump(2) << '\n';
            }
            for (const auto& f : out.record.failures) {
                std::cerr << "failed: " << f << '\n';
            }
            return out.ok() ? 0 : 1;
        }
        if (*eval) {
            const EvalOutcome out = cmd_eval(predictions, resolve_manifest(dataset), eval_output,
                                             EvalOptions{tolerance, drop_last});
            std::cout << summary_to_json(out.summary).dump(2) << '\n';
            return 0;
        }
        if (*ablate) {
            const RunConfig config = resolve_config(config_args);
            const SweepKind kind = parse_sweep(sweep);
            std::vector<SweepPoint> grid;
            if (!empty_grid) {
                grid = sweep_grid(kind, values, secondary);
            }
            if (table.empty()) {
                table = config.output_dir / (to_string(kind) + ".csv");
            }
            // An empty grid never touches the dataset.
            const DatasetManifest manifest = grid.empty() ? DatasetManifest{} : resolve_manifest(dataset);
            const auto rows = cmd_ablate(config, manifest, grid, table);
            int failed = 0;
            for (const auto& r : rows) {
                failed += r.ok ? 0 : 1;
            }
            std::cout << "wrote " << table.string() << " (" << rows.size() << " rows, " << failed << " failed)\n";
            return failed == 0 ? 0 : 1;
        }
        if (*adapt) {
            const RunConfig config = resolve_config(config_args);
            const auto instances = cmd_adapt(config, resolve_manifest(dataset));
            int failed = 0;
            for (const auto& inst : instances) {
                std::cout << inst.sequence << '\t' << inst.object << '\t' << inst.status;
                if (inst.status == "optimized" || inst.status == "cached") {
                    std::cout << '\t' << inst.initial_loss << " -> " << inst.final_loss;
                } else {
                    std::cout << '\t' << inst.message;
                    ++failed;
                }
                std::cout << '\n';
            }
            return failed == 0 ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
