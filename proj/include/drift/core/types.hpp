#pragma once

#include "drift/core/grid.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace drift {

/// RGB image with interleaved float samples in [0, 1].
class Image {
  public:
    Image() = default;
    Image(int height, int width, float fill = 0.0f);

    int height() const { return height_; }
    int width() const { return width_; }
    bool empty() const { return samples_.empty(); }

    float& at(int y, int x, int c) { return samples_[offset(y, x, c)]; }
    float at(int y, int x, int c) const { return samples_[offset(y, x, c)]; }

    std::span<float> samples() { return samples_; }
    std::span<const float> samples() const { return samples_; }

  private:
    std::size_t offset(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c);
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<float> samples_;
};

/// Ordered frames of one video. All frames share one resolution.
struct VideoSequence {
    std::string identifier;
    std::vector<Image> frames;

    int frame_count() const { return static_cast<int>(frames.size()); }
    void validate() const;
};

/// Integer label grid: 0 is background, 1..object_count are object identities.
struct HardMask {
    Grid<std::uint8_t> labels;
    int object_count = 0;

    HardMask() = default;
    HardMask(Grid<std::uint8_t> l, int objects) : labels(std::move(l)), object_count(objects) {}
    HardMask(int height, int width, int objects)
        : labels(height, width, 0), object_count(objects) {}

    int height() const { return labels.height(); }
    int width() const { return labels.width(); }

    /// Throws ShapeError if any label exceeds object_count.
    void validate() const;

    /// Binary indicator grid of one label.
    Grid<std::uint8_t> binary(int object) const;
};

/// Per-channel nonnegative score grids. Channel 0 is background.
struct SoftMaskStack {
    std::vector<Grid<float>> channels;

    SoftMaskStack() = default;
    SoftMaskStack(int channel_count, int height, int width, float fill = 0.0f)
        : channels(static_cast<std::size_t>(channel_count), Grid<float>(height, width, fill)) {}

    int channel_count() const { return static_cast<int>(channels.size()); }
    int object_count() const { return channel_count() - 1; }
    int height() const { return channels.empty() ? 0 : channels.front().height(); }
    int width() const { return channels.empty() ? 0 : channels.front().width(); }

    Grid<float>& operator[](int c) { return channels[static_cast<std::size_t>(c)]; }
    const Grid<float>& operator[](int c) const { return channels[static_cast<std::size_t>(c)]; }
};

/// Latent lattice of the attention layer and its relation to image pixels.
class LatticeGeometry {
  public:
    LatticeGeometry() = default;
    LatticeGeometry(int image_height, int image_width, int latent_height, int latent_width);

    int image_height() const { return image_height_; }
    int image_width() const { return image_width_; }
    int latent_height() const { return latent_height_; }
    int latent_width() const { return latent_width_; }
    int location_count() const { return latent_height_ * latent_width_; }

    /// Image pixels per latent cell along each axis.
    double scale_y() const { return static_cast<double>(image_height_) / latent_height_; }
    double scale_x() const { return static_cast<double>(image_width_) / latent_width_; }

    int row_of(int location) const { return location / latent_width_; }
    int col_of(int location) const { return location % latent_width_; }
    int location(int row, int col) const { return row * latent_width_ + col; }

    double squared_distance(int a, int b) const;

    friend bool operator==(const LatticeGeometry&, const LatticeGeometry&) = default;

  private:
    int image_height_ = 0;
    int image_width_ = 0;
    int latent_height_ = 0;
    int latent_width_ = 0;
};

/// Image-plane point prompt, pixel units with the origin at the top-left corner.
struct Point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
};

} // namespace drift
