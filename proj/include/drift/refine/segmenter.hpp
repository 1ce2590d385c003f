#pragma once

#include "drift/core/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace drift {

/// One mask hypothesis of a promptable segmenter; the mask is logits > 0.
struct SegmenterMask {
    Grid<float> logits;
    double score = 0.0;
};

/// Promptable segmenter: positive point prompts in, scored mask logits out.
///
/// `prepare` runs once per frame (image encoding); `segment` may then be called
/// concurrently for different prompt sets of that frame.
class Segmenter {
  public:
    virtual ~Segmenter() = default;
    virtual std::string id() const = 0;
    virtual void prepare(const Image& frame, int frame_index) = 0;
    /// At least one mask at the prepared frame's resolution.
    virtual std::vector<SegmenterMask> segment(std::span<const Point> points) const = 0;
};

/// Test double answering from ground truth: the mask is the union of the
/// 4-connected same-label components (labels > 0) under the prompt points.
class OracleSegmenter final : public Segmenter {
  public:
    /// `truth[t]` is the ground truth of frame t.
    explicit OracleSegmenter(std::vector<HardMask> truth, float logit_magnitude = 8.0f);

    std::string id() const override { return "oracle"; }
    void prepare(const Image& frame, int frame_index) override;
    std::vector<SegmenterMask> segment(std::span<const Point> points) const override;

  private:
    std::vector<HardMask> truth_;
    float magnitude_;
    int frame_ = -1;
    // Component id per pixel of the prepared frame (-1 on background).
    Grid<int> components_;
};

/// 4-connected components of equal nonzero labels; background is -1.
Grid<int> label_components(const Grid<std::uint8_t>& labels, int* component_count = nullptr);

} // namespace drift
