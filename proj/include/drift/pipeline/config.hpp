#pragma once

#include "drift/adapt/optimizer.hpp"
#include "drift/refine/crf.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace drift {

enum class RefinementMode { none, segmenter, crf };
enum class PromptMode { null, class_name, caption, learned };
enum class InversionMode { ddim, random_noise, none };
enum class KernelMode { attention, cosine };

std::string to_string(RefinementMode m);
std::string to_string(PromptMode m);
std::string to_string(InversionMode m);
std::string to_string(KernelMode m);

struct BackendConfig {
    /// "synthetic" or "torchscript".
    std::string kind = "synthetic";
    /// Attention layers whose heads form the kernel (torchscript backbones).
    std::vector<std::string> layers = {"up_blocks.3.attentions.0.transformer_blocks.0.attn1"};
    /// Exported backbone module; DRIFT_BACKBONE is used when empty.
    std::filesystem::path weights;
    // Synthetic backend.
    std::uint64_t seed = 0;
    int heads = 5;
    int head_dim = 8;
    /// Image pixels per lattice cell.
    int stride = 8;
    double content_gain = 4.0;
    double positional_gain = 0.25;
    double prompt_gain = 1.0;
};

struct SegmenterConfig {
    /// "torchscript" (promptable segmentation checkpoint) or "oracle" (ground-truth double).
    std::string kind = "torchscript";
    /// Exported segmenter module; DRIFT_SEGMENTER is used when empty.
    std::filesystem::path weights;
};

struct RunConfig {
    BackendConfig backend;
    SegmenterConfig segmenter;

    // Inversion.
    InversionMode inversion = InversionMode::ddim;
    int timestep = 41;
    int inversion_steps = 50;

    // Propagation.
    KernelMode kernel = KernelMode::attention;
    int history = 7;
    double radius = 14.0;
    int top_k = 15;
    int block_rows = 512;
    double cosine_temperature = 0.1;

    // Prompts and adaptation.
    PromptMode prompt = PromptMode::learned;
    /// Sidecar strings for class/caption prompts: <prompt_dir>/<sequence>/<object>.<class|caption>.txt
    std::filesystem::path prompt_dir = "prompts";
    OptimizerConfig optimizer;

    // Refinement.
    RefinementMode refinement = RefinementMode::segmenter;
    int points = 2;
    int point_sets = 40;
    CrfOptions crf;

    // Run.
    std::uint64_t seed = 0;
    std::filesystem::path cache_dir;
    std::filesystem::path output_dir = "output";
    int workers = 1;
    /// Evaluation boundary tolerance (fraction of the diagonal below 1, else pixels).
    double boundary_tolerance = 0.008;

    /// Throws ConfigError on any non-positive knob or inconsistent combination.
    void validate() const;
};

/// Parses an INI document; unknown keys are errors.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical INI text; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const RunConfig& config);

/// Applies "section.key=value" overrides.
void apply_overrides(RunConfig& config, const std::vector<std::string>& assignments);

} // namespace drift
