#pragma once

#include "drift/core/types.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace drift {

/// p sets of n image-plane points.
struct PointPromptSet {
    std::vector<std::vector<Point>> sets;
    std::uint64_t seed = 0;

    int set_count() const { return static_cast<int>(sets.size()); }
    int points_per_set() const { return sets.empty() ? 0 : static_cast<int>(sets.front().size()); }
};

/// Draws `sets` x `points` i.i.d. lattice cells from `distribution` and maps
/// each to the image-plane center of its cell. Throws ConfigError unless the
/// distribution is nonnegative and sums to one (1e-6), and ShapeError when it
/// is not on the geometry's lattice.
PointPromptSet sample_prompts(const Grid<double>& distribution, const LatticeGeometry& geometry, int points, int sets,
                              std::mt19937_64& rng);

/// Image-plane center of a lattice cell.
Point cell_center(const LatticeGeometry& geometry, int row, int col);

} // namespace drift
