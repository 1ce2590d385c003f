#pragma once

#include "drift/refine/segmenter.hpp"

#include <filesystem>
#include <memory>

namespace drift {

/// Promptable segmenter exported as a TorchScript module (see tools/export_sam.py).
///
/// Module methods:
///   embed(image[1,3,H,W] in [0,1]) -> embedding (any value, passed back to segment)
///   segment(embedding, coords[1,P,2] as (x, y) pixels, labels[1,P])
///       -> (logits[1,M,H,W], scores[1,M])
class TorchSegmenter final : public Segmenter {
  public:
    explicit TorchSegmenter(const std::filesystem::path& module);
    ~TorchSegmenter() override;

    std::string id() const override;
    void prepare(const Image& frame, int frame_index) override;
    std::vector<SegmenterMask> segment(std::span<const Point> points) const override;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace drift
