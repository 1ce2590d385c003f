#pragma once

#include "drift/core/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace drift {

using Palette = std::vector<std::array<std::uint8_t, 3>>;

/// The 256-entry indexed palette used by DAVIS annotations (PASCAL VOC colormap).
const Palette& davis_palette();

/// Single-channel label image as stored on disk.
struct LabelImage {
    Grid<std::uint8_t> labels;
    bool indexed = false; // palette PNG (true) or 8-bit grayscale (false)
    Palette palette;
};

/// Decode a JPEG or PNG frame into RGB floats in [0, 1].
Image read_image(const std::filesystem::path& path);

/// Write an 8-bit RGB PNG.
void write_image_png(const std::filesystem::path& path, const Image& image);

/// Read an indexed-palette or 8-bit grayscale PNG as raw label values.
/// Throws IoError for any other color type ("palette mismatch").
LabelImage read_label_png(const std::filesystem::path& path);

/// Write labels as an 8-bit indexed-palette PNG.
void write_label_png(const std::filesystem::path& path, const Grid<std::uint8_t>& labels,
                     const Palette& palette = davis_palette());

} // namespace drift
