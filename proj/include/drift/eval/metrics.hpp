#pragma once

#include "drift/core/types.hpp"

namespace drift {

/// Boundary match tolerance used by the DAVIS toolkit: 0.8% of the image diagonal.
inline constexpr double kDefaultBoundaryTolerance = 0.008;

/// Region similarity of label `object`: |P & G| / |P | G|, 1 when both are empty.
double jaccard(const HardMask& prediction, const HardMask& truth, int object);
double jaccard(const Grid<std::uint8_t>& prediction, const Grid<std::uint8_t>& truth);

/// One-pixel boundary map of a binary mask (DAVIS seg2bmap at native size).
Grid<std::uint8_t> boundary_map(const Grid<std::uint8_t>& binary);

/// Match radius in pixels: values below 1 are a fraction of the image
/// diagonal (rounded up), values of 1 and above are pixels.
int boundary_radius(double tolerance, int height, int width);

/// Contour accuracy of label `object`: F-measure of boundary precision and
/// recall where boundary pixels match within a disk of boundary_radius().
/// Both boundaries empty gives 1; exactly one empty gives 0.
double boundary_f(const HardMask& prediction, const HardMask& truth, int object,
                  double tolerance = kDefaultBoundaryTolerance);
double boundary_f(const Grid<std::uint8_t>& prediction, const Grid<std::uint8_t>& truth,
                  double tolerance = kDefaultBoundaryTolerance);

} // namespace drift
