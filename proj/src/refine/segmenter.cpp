#include "drift/refine/segmenter.hpp"

#include "drift/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace drift {

Grid<int> label_components(const Grid<std::uint8_t>& labels, int* component_count) {
    const int h = labels.height();
    const int w = labels.width();
    Grid<int> comp(h, w, -1);
    int next = 0;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (labels(y, x) == 0 || comp(y, x) >= 0) {
                continue;
            }
            const auto label = labels(y, x);
            comp(y, x) = next;
            stack.emplace_back(y, x);
            while (!stack.empty()) {
                const auto [cy, cx] = stack.back();
                stack.pop_back();
                const int ny[] = {cy - 1, cy + 1, cy, cy};
                const int nx[] = {cx, cx, cx - 1, cx + 1};
                for (int k = 0; k < 4; ++k) {
                    if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) {
                        continue;
                    }
                    if (labels(ny[k], nx[k]) == label && comp(ny[k], nx[k]) < 0) {
                        comp(ny[k], nx[k]) = next;
                        stack.emplace_back(ny[k], nx[k]);
                    }
                }
            }
            ++next;
        }
    }
    if (component_count != nullptr) {
        *component_count = next;
    }
    return comp;
}

OracleSegmenter::OracleSegmenter(std::vector<HardMask> truth, float logit_magnitude)
    : truth_(std::move(truth)), magnitude_(logit_magnitude) {}

void OracleSegmenter::prepare(const Image& frame, int frame_index) {
    if (frame_index < 0 || frame_index >= static_cast<int>(truth_.size())) {
        throw NotInitializedError("oracle segmenter: no ground truth for frame " + std::to_string(frame_index));
    }
    const auto& gt = truth_[static_cast<std::size_t>(frame_index)];
    if (gt.height() != frame.height() || gt.width() != frame.width()) {
        throw ShapeError("oracle segmenter: ground truth and frame sizes differ");
    }
    components_ = label_components(gt.labels);
    frame_ = frame_index;
}

std::vector<SegmenterMask> OracleSegmenter::segment(std::span<const Point> points) const {
    if (frame_ < 0) {
        throw NotInitializedError("oracle segmenter: prepare() was not called");
    }
    const int h = components_.height();
    const int w = components_.width();
    std::vector<int> hit;
    for (const auto& p : points) {
        const int x = std::clamp(static_cast<int>(std::floor(p.x)), 0, w - 1);
        const int y = std::clamp(static_cast<int>(std::floor(p.y)), 0, h - 1);
        if (components_(y, x) >= 0) {
            hit.push_back(components_(y, x));
        }
    }
    SegmenterMask out{Grid<float>(h, w, -magnitude_), 1.0};
    for (std::size_t i = 0; i < components_.size(); ++i) {
        if (std::find(hit.begin(), hit.end(), components_[i]) != hit.end()) {
            out.logits[i] = magnitude_;
        }
    }
    return {std::move(out)};
}

} // namespace drift
