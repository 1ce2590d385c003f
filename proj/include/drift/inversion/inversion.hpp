#pragma once

#include "drift/backend/backend.hpp"

#include <cstdint>
#include <random>

namespace drift {

/// Autoencoder encode at timestep 0. Throws ShapeError on resolution mismatch.
LatentState encode_frame(const Backend& backend, const Image& frame);

/// Deterministic DDIM inversion of a clean latent up to `timestep`, walking the
/// uniform `step_count` sub-schedule of the predictor's training schedule.
/// `timestep` is snapped to the first sub-schedule step at or above it.
LatentState ddim_invert(const NoisePredictor& predictor, const LatentState& clean,
                        const PromptEmbedding& prompt, int timestep, int step_count);

/// Backend-level inversion: identity (timestep relabelled) when the backend has
/// no diffusion process.
LatentState ddim_invert(const Backend& backend, const LatentState& clean, const PromptEmbedding& prompt,
                        int timestep, int step_count);

/// Deterministic (eta = 0) DDIM sampling from `noisy.timestep` back to a clean latent.
LatentState ddim_sample(const NoisePredictor& predictor, const LatentState& noisy,
                        const PromptEmbedding& prompt, int step_count);

/// Forward-diffusion perturbation sqrt(a) x0 + sqrt(1 - a) eps at `timestep`.
LatentState random_noise_latent(const NoiseSchedule& schedule, const LatentState& clean, int timestep,
                                std::mt19937_64& rng);

} // namespace drift
