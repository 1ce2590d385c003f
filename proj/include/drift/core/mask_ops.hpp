#pragma once

#include "drift/core/types.hpp"

namespace drift {

/// Area-fraction pooling of a hard mask onto the latent lattice.
///
/// Channel o of the result holds the fraction of each latent cell covered by
/// label o, computed from exact (possibly fractional) pixel/cell overlaps, so
/// the channel sums of every cell are 1.
SoftMaskStack downsample_mask(const HardMask& mask, const LatticeGeometry& geometry);

/// Pixel-wise argmax over channels; ties resolve to the lower channel index.
HardMask argmax_fuse(const SoftMaskStack& stack);

/// Rescale a nonnegative grid so its entries sum to one.
/// Throws EmptyObjectError when the grid carries no positive mass.
Grid<double> normalize_to_distribution(const Grid<float>& channel);

/// Bilinear resize (half-pixel centers, edge clamped) of a single channel.
Grid<float> upsample_channel(const Grid<float>& channel, int height, int width);

/// Bilinear resize of every channel of a stack.
SoftMaskStack upsample_stack(const SoftMaskStack& stack, int height, int width);

/// Bilinear resize of an RGB image.
Image resize_image(const Image& image, int height, int width);

/// Area-average of an RGB image onto a coarser grid (exact fractional overlaps).
Image area_resize_image(const Image& image, int height, int width);

} // namespace drift
