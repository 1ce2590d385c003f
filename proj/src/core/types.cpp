#include "drift/core/types.hpp"

#include "drift/core/error.hpp"

#include <string>

namespace drift {

Image::Image(int height, int width, float fill) : height_(height), width_(width) {
    if (height < 0 || width < 0) {
        throw ShapeError("Image: negative dimension");
    }
    samples_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3, fill);
}

void VideoSequence::validate() const {
    if (frames.empty()) {
        throw ShapeError("video '" + identifier + "' has no frames");
    }
    const int h = frames.front().height();
    const int w = frames.front().width();
    for (const auto& frame : frames) {
        if (frame.height() != h || frame.width() != w) {
            throw ShapeError("video '" + identifier + "' mixes frame resolutions");
        }
    }
}

void HardMask::validate() const {
    if (object_count < 0 || object_count > 255) {
        throw ShapeError("HardMask: object count out of range");
    }
    for (auto v : labels.values()) {
        if (v > object_count) {
            throw ShapeError("HardMask: label " + std::to_string(v) + " exceeds object count " +
                             std::to_string(object_count));
        }
    }
}

Grid<std::uint8_t> HardMask::binary(int object) const {
    Grid<std::uint8_t> out(labels.height(), labels.width(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out[i] = labels[i] == object ? 1 : 0;
    }
    return out;
}

LatticeGeometry::LatticeGeometry(int image_height, int image_width, int latent_height,
                                 int latent_width)
    : image_height_(image_height), image_width_(image_width), latent_height_(latent_height),
      latent_width_(latent_width) {
    if (image_height <= 0 || image_width <= 0 || latent_height <= 0 || latent_width <= 0) {
        throw ShapeError("LatticeGeometry: dimensions must be positive");
    }
}

double LatticeGeometry::squared_distance(int a, int b) const {
    const double dy = row_of(a) - row_of(b);
    const double dx = col_of(a) - col_of(b);
    return dy * dy + dx * dx;
}

} // namespace drift
