#include "drift/eval/metrics.hpp"

#include "drift/core/error.hpp"

#include <cmath>

namespace drift {
namespace {

void check_shapes(const Grid<std::uint8_t>& a, const Grid<std::uint8_t>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("metric inputs differ in shape");
    }
}

void check_shapes(const HardMask& a, const HardMask& b) { check_shapes(a.labels, b.labels); }

// Binary dilation by a disk of radius r (offsets with dy^2 + dx^2 <= r^2).
Grid<std::uint8_t> dilate(const Grid<std::uint8_t>& in, int r) {
    const int h = in.height();
    const int w = in.width();
    Grid<std::uint8_t> out(h, w, 0);
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            if (dy * dy + dx * dx <= r * r) {
                offsets.emplace_back(dy, dx);
            }
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (in(y, x) == 0) {
                continue;
            }
            for (const auto& [dy, dx] : offsets) {
                const int yy = y + dy;
                const int xx = x + dx;
                if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
                    out(yy, xx) = 1;
                }
            }
        }
    }
    return out;
}

} // namespace

double jaccard(const Grid<std::uint8_t>& prediction, const Grid<std::uint8_t>& truth) {
    check_shapes(prediction, truth);
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const bool p = prediction[i] != 0;
        const bool g = truth[i] != 0;
        inter += (p && g) ? 1 : 0;
        uni += (p || g) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double jaccard(const HardMask& prediction, const HardMask& truth, int object) {
    check_shapes(prediction, truth);
    return jaccard(prediction.binary(object), truth.binary(object));
}

Grid<std::uint8_t> boundary_map(const Grid<std::uint8_t>& binary) {
    const int h = binary.height();
    const int w = binary.width();
    Grid<std::uint8_t> b(h, w, 0);
    auto at = [&](int y, int x) -> bool { return y < h && x < w && binary(y, x) != 0; };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool s = at(y, x);
            bool edge = false;
            if (y == h - 1 && x == w - 1) {
                edge = false;
            } else if (y == h - 1) {
                edge = s != at(y, x + 1);
            } else if (x == w - 1) {
                edge = s != at(y + 1, x);
            } else {
                edge = (s != at(y, x + 1)) || (s != at(y + 1, x)) || (s != at(y + 1, x + 1));
            }
            b(y, x) = edge ? 1 : 0;
        }
    }
    return b;
}

int boundary_radius(double tolerance, int height, int width) {
    if (!(tolerance > 0.0)) {
        throw ConfigError("boundary tolerance must be positive");
    }
    if (tolerance >= 1.0) {
        return static_cast<int>(tolerance);
    }
    return static_cast<int>(std::ceil(tolerance * std::hypot(static_cast<double>(height), static_cast<double>(width))));
}

double boundary_f(const Grid<std::uint8_t>& prediction, const Grid<std::uint8_t>& truth, double tolerance) {
    check_shapes(prediction, truth);
    const int r = boundary_radius(tolerance, prediction.height(), prediction.width());
    const auto pb = boundary_map(prediction);
    const auto gb = boundary_map(truth);
    const auto pd = dilate(pb, r);
    const auto gd = dilate(gb, r);
    std::size_t n_pred = 0;
    std::size_t n_truth = 0;
    std::size_t pred_match = 0;
    std::size_t truth_match = 0;
    for (std::size_t i = 0; i < pb.size(); ++i) {
        n_pred += pb[i];
        n_truth += gb[i];
        pred_match += (pb[i] != 0 && gd[i] != 0) ? 1 : 0;
        truth_match += (gb[i] != 0 && pd[i] != 0) ? 1 : 0;
    }
    double precision = 0.0;
    double recall = 0.0;
    if (n_pred == 0 && n_truth == 0) {
        return 1.0;
    }
    if (n_pred == 0) {
        precision = 1.0;
        recall = 0.0;
    } else if (n_truth == 0) {
        precision = 0.0;
        recall = 1.0;
    } else {
        precision = static_cast<double>(pred_match) / static_cast<double>(n_pred);
        recall = static_cast<double>(truth_match) / static_cast<double>(n_truth);
    }
    if (precision + recall == 0.0) {
        return 0.0;
    }
    return 2.0 * precision * recall / (precision + recall);
}

double boundary_f(const HardMask& prediction, const HardMask& truth, int object, double tolerance) {
    check_shapes(prediction, truth);
    return boundary_f(prediction.binary(object), truth.binary(object), tolerance);
}

} // namespace drift
