#include "drift/pipeline/factory.hpp"

#include "drift/backend/synthetic.hpp"
#include "drift/core/error.hpp"

#ifdef DRIFT_HAVE_TORCH
#include "drift/torch/torch_backend.hpp"
#include "drift/torch/torch_segmenter.hpp"
#endif

#include <cmath>
#include <cstdlib>
#include <filesystem>

namespace drift {
namespace {

std::filesystem::path resolve_weights(const std::filesystem::path& configured, const char* env, const char* what) {
    std::filesystem::path path = configured;
    if (path.empty()) {
        if (const char* v = std::getenv(env)) {
            path = v;
        }
    }
    if (path.empty()) {
        throw NotInitializedError(std::string("missing weights: no ") + what + " module configured (set " + env + ")");
    }
    if (!std::filesystem::exists(path)) {
        throw NotInitializedError(std::string("missing weights: ") + what + " module " + path.string() + " not found");
    }
    return path;
}

} // namespace

bool torch_available() {
#ifdef DRIFT_HAVE_TORCH
    return true;
#else
    return false;
#endif
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config, int image_height, int image_width) {
    if (config.kind == "synthetic") {
        const int lh = std::max(1, static_cast<int>(std::lround(static_cast<double>(image_height) / config.stride)));
        const int lw = std::max(1, static_cast<int>(std::lround(static_cast<double>(image_width) / config.stride)));
        SyntheticBackendOptions options;
        options.seed = config.seed;
        options.head_count = config.heads;
        options.head_dim = config.head_dim;
        options.content_gain = config.content_gain;
        options.positional_gain = config.positional_gain;
        options.prompt_gain = config.prompt_gain;
        return std::make_unique<SyntheticBackend>(LatticeGeometry(image_height, image_width, lh, lw), options);
    }
    if (config.kind == "torchscript") {
        const auto path = resolve_weights(config.weights, "DRIFT_BACKBONE", "backbone");
#ifdef DRIFT_HAVE_TORCH
        return std::make_unique<TorchBackend>(path, config.layers);
#else
        throw NotInitializedError("backend torchscript: this build has no TorchScript support (" + path.string() + ")");
#endif
    }
    throw ConfigError("unknown backend kind '" + config.kind + "'");
}

std::unique_ptr<Segmenter> make_segmenter(const SegmenterConfig& config, const std::map<int, HardMask>& truth,
                                          int frame_count) {
    if (config.kind == "oracle") {
        std::vector<HardMask> frames(static_cast<std::size_t>(frame_count));
        for (const auto& [f, m] : truth) {
            if (f >= 0 && f < frame_count) {
                frames[static_cast<std::size_t>(f)] = m;
            }
        }
        return std::make_unique<OracleSegmenter>(std::move(frames));
    }
    if (config.kind == "torchscript") {
        const auto path = resolve_weights(config.weights, "DRIFT_SEGMENTER", "segmenter");
#ifdef DRIFT_HAVE_TORCH
        return std::make_unique<TorchSegmenter>(path);
#else
        throw NotInitializedError("segmenter torchscript: this build has no TorchScript support (" + path.string() + ")");
#endif
    }
    throw ConfigError("unknown segmenter kind '" + config.kind + "'");
}

LatticeGeometry backend_geometry(const Backend& backend, int image_height, int image_width) {
    return LatticeGeometry(image_height, image_width, backend.latent_height(), backend.latent_width());
}

} // namespace drift
