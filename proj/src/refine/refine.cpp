#include "drift/refine/refine.hpp"

#include "drift/core/error.hpp"
#include "drift/core/mask_ops.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace drift {

double soft_iou(const Grid<float>& soft, const Grid<std::uint8_t>& binary, double epsilon) {
    if (!soft.same_shape(binary)) {
        throw ShapeError("soft_iou: shape mismatch");
    }
    double inter = 0.0;
    double uni = 0.0;
    for (std::size_t i = 0; i < soft.size(); ++i) {
        const double a = soft[i];
        const double b = binary[i] != 0 ? 1.0 : 0.0;
        inter += std::min(a, b);
        uni += std::max(a, b);
    }
    return inter / (uni + epsilon);
}

CandidateMask make_candidate(const std::vector<SegmenterMask>& hypotheses) {
    if (hypotheses.empty()) {
        throw Error("segmenter returned no mask");
    }
    const auto best = std::max_element(hypotheses.begin(), hypotheses.end(),
                                       [](const SegmenterMask& a, const SegmenterMask& b) { return a.score < b.score; });
    CandidateMask out;
    out.logits = best->logits;
    out.mask = Grid<std::uint8_t>(out.logits.height(), out.logits.width());
    for (std::size_t i = 0; i < out.logits.size(); ++i) {
        out.mask[i] = out.logits[i] > 0.0f ? 1 : 0;
    }
    return out;
}

int select_candidate(std::span<CandidateMask> candidates, const Grid<float>& source) {
    if (candidates.empty()) {
        throw ConfigError("select_candidate: no candidates");
    }
    int best = 0;
    for (int i = 0; i < static_cast<int>(candidates.size()); ++i) {
        auto& c = candidates[static_cast<std::size_t>(i)];
        c.score = soft_iou(source, c.mask);
        if (c.score > candidates[static_cast<std::size_t>(best)].score) {
            best = i;
        }
    }
    return best;
}

RefineOutcome refine_object(const Grid<float>& channel, const LatticeGeometry& geometry, const Segmenter& segmenter,
                            const RefineOptions& options, std::mt19937_64& rng) {
    RefineOutcome out;
    out.channel = upsample_channel(channel, geometry.image_height(), geometry.image_width());
    Grid<double> distribution;
    try {
        distribution = normalize_to_distribution(channel);
    } catch (const EmptyObjectError&) {
        return out;
    }
    try {
        const PointPromptSet prompts = sample_prompts(distribution, geometry, options.points, options.sets, rng);
        std::vector<CandidateMask> candidates;
        candidates.reserve(prompts.sets.size());
        for (const auto& set : prompts.sets) {
            candidates.push_back(make_candidate(segmenter.segment(set)));
            if (!candidates.back().mask.same_shape(out.channel)) {
                throw ShapeError("segmenter mask resolution differs from the frame");
            }
        }
        const int best = select_candidate(candidates, out.channel);
        const auto& logits = candidates[static_cast<std::size_t>(best)].logits;
        Grid<float> refined(logits.height(), logits.width());
        for (std::size_t i = 0; i < logits.size(); ++i) {
            refined[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(logits[i]))));
        }
        out.channel = std::move(refined);
        out.refined = true;
        out.selected = best;
        out.score = candidates[static_cast<std::size_t>(best)].score;
    } catch (const std::exception& e) {
        spdlog::warn("refinement skipped ({}): {}", segmenter.id(), e.what());
    }
    return out;
}

HardMask fuse_channels(const Grid<float>& background, std::span<const Grid<float>> objects) {
    SoftMaskStack stack;
    stack.channels.reserve(objects.size() + 1);
    stack.channels.push_back(background);
    for (const auto& o : objects) {
        if (!o.same_shape(background)) {
            throw ShapeError("fuse_channels: channel shapes differ");
        }
        stack.channels.push_back(o);
    }
    return argmax_fuse(stack);
}

} // namespace drift
