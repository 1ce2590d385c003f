#pragma once

#include "drift/core/types.hpp"

namespace drift {

struct CrfOptions {
    int kernel_size = 5;
    int steps = 30;
    /// Probability the unary term assigns to the input label.
    double confidence = 0.9;
    /// Potts compatibility weight of the pairwise messages.
    double compatibility = 3.0;
    /// Gaussian width of the color affinity (RGB in [0, 1]).
    double color_sigma = 0.1;
    /// Gaussian width of the spatial affinity, in pixels.
    double spatial_sigma = 2.0;

    void validate() const;
};

/// Mean-field smoothing of a label map with pixel-adaptive (color x spatial)
/// pairwise kernels over a local window. Labels only move across weak edges.
HardMask crf_refine(const HardMask& mask, const Image& frame, const CrfOptions& options = {});

} // namespace drift
