#pragma once

#include "drift/core/types.hpp"
#include "drift/refine/point_prompts.hpp"
#include "drift/refine/segmenter.hpp"

#include <random>
#include <span>
#include <vector>

namespace drift {

inline constexpr double kSoftIouEpsilon = 1e-6;

/// sum(min(a, b)) / (sum(max(a, b)) + epsilon) for a soft grid a and binary grid b.
double soft_iou(const Grid<float>& soft, const Grid<std::uint8_t>& binary, double epsilon = kSoftIouEpsilon);

struct CandidateMask {
    Grid<std::uint8_t> mask;
    Grid<float> logits;
    double score = 0.0;
};

/// Turns the best-scoring hypothesis of a segmenter call into a candidate.
CandidateMask make_candidate(const std::vector<SegmenterMask>& hypotheses);

/// Scores every candidate against `source` and returns the index of the
/// best one; ties go to the lower index. Throws ConfigError on an empty list.
int select_candidate(std::span<CandidateMask> candidates, const Grid<float>& source);

struct RefineOptions {
    int points = 2;
    int sets = 40;
};

struct RefineOutcome {
    /// Object channel at image resolution.
    Grid<float> channel;
    bool refined = false;
    int selected = -1;
    double score = 0.0;
};

/// Point-prompted refinement of one latent-resolution object channel.
///
/// The channel is normalized into a distribution for sampling `sets` prompt
/// sets of `points` points; each set is answered by the segmenter; candidates
/// are scored by soft IoU against the upsampled (unnormalized) channel and the
/// winner's logits are squashed with a sigmoid. An empty channel or a
/// segmenter failure passes the upsampled channel through unchanged.
/// The segmenter must already be prepared for the frame.
RefineOutcome refine_object(const Grid<float>& channel, const LatticeGeometry& geometry, const Segmenter& segmenter,
                            const RefineOptions& options, std::mt19937_64& rng);

/// Image-resolution argmax over the upsampled propagated background channel and
/// the given per-object channels (1..O).
HardMask fuse_channels(const Grid<float>& background, std::span<const Grid<float>> objects);

} // namespace drift
