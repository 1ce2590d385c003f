#include "drift/refine/point_prompts.hpp"

#include "drift/core/error.hpp"

#include <cmath>

namespace drift {

Point cell_center(const LatticeGeometry& geometry, int row, int col) {
    return Point{(col + 0.5) * geometry.scale_x(), (row + 0.5) * geometry.scale_y()};
}

PointPromptSet sample_prompts(const Grid<double>& distribution, const LatticeGeometry& geometry, int points, int sets,
                              std::mt19937_64& rng) {
    if (points <= 0 || sets <= 0) {
        throw ConfigError("sample_prompts: point and set counts must be positive");
    }
    if (distribution.height() != geometry.latent_height() || distribution.width() != geometry.latent_width()) {
        throw ShapeError("sample_prompts: distribution is not on the latent lattice");
    }
    double total = 0.0;
    for (double v : distribution.values()) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ConfigError("sample_prompts: distribution has a negative or non-finite entry");
        }
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) {
        throw ConfigError("sample_prompts: distribution does not sum to one");
    }
    std::discrete_distribution<int> cells(distribution.values().begin(), distribution.values().end());
    PointPromptSet out;
    out.sets.resize(static_cast<std::size_t>(sets));
    for (auto& set : out.sets) {
        set.reserve(static_cast<std::size_t>(points));
        for (int i = 0; i < points; ++i) {
            const int cell = cells(rng);
            set.push_back(cell_center(geometry, geometry.row_of(cell), geometry.col_of(cell)));
        }
    }
    return out;
}

} // namespace drift
