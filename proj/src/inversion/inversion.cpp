#include "drift/inversion/inversion.hpp"

#include "drift/core/error.hpp"

#include <cmath>

namespace drift {
namespace {

void check_clean(const LatentState& clean) {
    if (clean.timestep != 0 || clean.provenance != LatentProvenance::clean) {
        throw ConfigError("inversion expects a clean latent at timestep 0");
    }
}

// One DDIM update between noise levels alpha_from -> alpha_to using eps.
void ddim_step(std::vector<float>& x, const std::vector<float>& eps, double alpha_from, double alpha_to) {
    if (eps.size() != x.size()) {
        throw ShapeError("noise prediction shape mismatch");
    }
    const double sa = std::sqrt(alpha_from);
    const double sb = std::sqrt(1.0 - alpha_from);
    const double ta = std::sqrt(alpha_to);
    const double tb = std::sqrt(1.0 - alpha_to);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = (x[i] - sb * eps[i]) / sa;
        x[i] = static_cast<float>(ta * x0 + tb * eps[i]);
    }
}

} // namespace

LatentState encode_frame(const Backend& backend, const Image& frame) {
    if (frame.height() != backend.input_height() || frame.width() != backend.input_width()) {
        throw ShapeError("encode_frame: frame is " + std::to_string(frame.height()) + "x" +
                         std::to_string(frame.width()) + ", backend expects " +
                         std::to_string(backend.input_height()) + "x" + std::to_string(backend.input_width()));
    }
    LatentState latent = backend.encode_frame(frame);
    latent.timestep = 0;
    latent.provenance = LatentProvenance::clean;
    return latent;
}

LatentState ddim_invert(const NoisePredictor& predictor, const LatentState& clean, const PromptEmbedding& prompt,
                        int timestep, int step_count) {
    check_clean(clean);
    const auto& schedule = predictor.schedule();
    const int target = schedule.resolve_timestep(timestep, step_count);
    if (target == 0) {
        return clean;
    }
    const int stride = schedule.train_steps() / step_count;
    LatentState x = clean;
    for (int t : schedule.sub_schedule(step_count)) {
        if (t > target) {
            break;
        }
        // eps is predicted at the destination timestep from the current latent.
        const auto eps = predictor.predict_noise(x, t, prompt);
        ddim_step(x.values, eps, schedule.alpha_bar(t - stride), schedule.alpha_bar(t));
        x.timestep = t;
    }
    x.provenance = LatentProvenance::ddim_inversion;
    return x;
}

LatentState ddim_invert(const Backend& backend, const LatentState& clean, const PromptEmbedding& prompt,
                        int timestep, int step_count) {
    if (const auto* predictor = backend.noise_predictor()) {
        return ddim_invert(*predictor, clean, prompt, timestep, step_count);
    }
    check_clean(clean);
    const auto schedule = NoiseSchedule::scaled_linear();
    LatentState x = clean;
    x.timestep = schedule.resolve_timestep(timestep, step_count);
    if (x.timestep != 0) {
        x.provenance = LatentProvenance::ddim_inversion;
    }
    return x;
}

LatentState ddim_sample(const NoisePredictor& predictor, const LatentState& noisy, const PromptEmbedding& prompt,
                        int step_count) {
    const auto& schedule = predictor.schedule();
    const int stride = schedule.train_steps() / step_count;
    LatentState x = noisy;
    for (int t = noisy.timestep; t > 0; t -= stride) {
        const auto eps = predictor.predict_noise(x, t, prompt);
        ddim_step(x.values, eps, schedule.alpha_bar(t), schedule.alpha_bar(t - stride));
    }
    x.timestep = 0;
    x.provenance = LatentProvenance::clean;
    return x;
}

LatentState random_noise_latent(const NoiseSchedule& schedule, const LatentState& clean, int timestep,
                                std::mt19937_64& rng) {
    if (timestep < 0 || timestep >= schedule.train_steps()) {
        throw ConfigError("random_noise_latent: timestep outside schedule");
    }
    LatentState x = clean;
    if (timestep == 0) {
        return x;
    }
    const double a = schedule.alpha_bar(timestep);
    const double sa = std::sqrt(a);
    const double sb = std::sqrt(1.0 - a);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : x.values) {
        v = static_cast<float>(sa * v + sb * normal(rng));
    }
    x.timestep = timestep;
    x.provenance = LatentProvenance::random_noise;
    return x;
}

} // namespace drift
