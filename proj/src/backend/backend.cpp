#include "drift/backend/backend.hpp"

#include "drift/core/error.hpp"

#include <cmath>

namespace drift {

template <typename T>
void BasicQueryKeySet<T>::validate() const {
    const auto n = static_cast<std::size_t>(location_count) * static_cast<std::size_t>(head_dim);
    if (location_count <= 0 || head_dim <= 0 || heads.empty()) {
        throw ShapeError("QueryKeySet: empty");
    }
    for (const auto& h : heads) {
        if (h.queries.size() != n || h.keys.size() != n) {
            throw ShapeError("QueryKeySet: head is not location_count x head_dim");
        }
    }
}

template struct BasicQueryKeySet<float>;
template struct BasicQueryKeySet<double>;

void FeatureSet::validate() const {
    if (values.size() != static_cast<std::size_t>(location_count) * static_cast<std::size_t>(channels)) {
        throw ShapeError("FeatureSet: size mismatch");
    }
    for (float v : values) {
        if (!std::isfinite(v)) {
            throw ShapeError("FeatureSet: non-finite entry");
        }
    }
}

std::string_view to_string(LatentProvenance p) {
    switch (p) {
    case LatentProvenance::clean:
        return "clean";
    case LatentProvenance::random_noise:
        return "random_noise";
    case LatentProvenance::ddim_inversion:
        return "ddim_inversion";
    }
    return "unknown";
}

void LatentState::validate() const {
    if (values.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
                             static_cast<std::size_t>(channels)) {
        throw ShapeError("LatentState: size mismatch");
    }
    if (timestep < 0 || timestep >= 1000) {
        throw ShapeError("LatentState: timestep out of schedule bounds");
    }
    for (float v : values) {
        if (!std::isfinite(v)) {
            throw ShapeError("LatentState: non-finite entry");
        }
    }
}

} // namespace drift
