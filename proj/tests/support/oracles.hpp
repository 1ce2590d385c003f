#pragma once

// Brute-force reference computations used as independent test oracles.

#include "drift/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace drift::oracle {

inline double soft_iou(const Grid<float>& soft, const Grid<std::uint8_t>& binary, double eps) {
    double num = 0.0;
    double den = 0.0;
    for (int y = 0; y < soft.height(); ++y) {
        for (int x = 0; x < soft.width(); ++x) {
            const double a = soft(y, x);
            const double b = binary(y, x) ? 1.0 : 0.0;
            num += std::min(a, b);
            den += std::max(a, b);
        }
    }
    return num / (den + eps);
}

inline double jaccard(const Grid<std::uint8_t>& p, const Grid<std::uint8_t>& g) {
    int inter = 0;
    int uni = 0;
    for (int y = 0; y < p.height(); ++y) {
        for (int x = 0; x < p.width(); ++x) {
            inter += (p(y, x) && g(y, x)) ? 1 : 0;
            uni += (p(y, x) || g(y, x)) ? 1 : 0;
        }
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

// Array formulation of the DAVIS toolkit's seg2bmap: east, south and
// south-east shifted copies padded with zeros, with the last row/column
// compared along one axis only and the corner cleared.
inline Grid<std::uint8_t> seg2bmap(const Grid<std::uint8_t>& seg) {
    const int h = seg.height();
    const int w = seg.width();
    Grid<std::uint8_t> e(h, w, 0);
    Grid<std::uint8_t> s(h, w, 0);
    Grid<std::uint8_t> se(h, w, 0);
    Grid<std::uint8_t> b(h, w, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (x + 1 < w) e(y, x) = seg(y, x + 1) ? 1 : 0;
            if (y + 1 < h) s(y, x) = seg(y + 1, x) ? 1 : 0;
            if (y + 1 < h && x + 1 < w) se(y, x) = seg(y + 1, x + 1) ? 1 : 0;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int v = seg(y, x) ? 1 : 0;
            b(y, x) = static_cast<std::uint8_t>((v ^ e(y, x)) | (v ^ s(y, x)) | (v ^ se(y, x)));
        }
    }
    for (int x = 0; x < w; ++x) b(h - 1, x) = static_cast<std::uint8_t>((seg(h - 1, x) ? 1 : 0) ^ e(h - 1, x));
    for (int y = 0; y < h; ++y) b(y, w - 1) = static_cast<std::uint8_t>((seg(y, w - 1) ? 1 : 0) ^ s(y, w - 1));
    b(h - 1, w - 1) = 0;
    return b;
}

// Boundary F-measure by exhaustive pairwise distance matching.
inline double boundary_f(const Grid<std::uint8_t>& p, const Grid<std::uint8_t>& g, int radius) {
    const auto pb = seg2bmap(p);
    const auto gb = seg2bmap(g);
    std::vector<std::pair<int, int>> pp;
    std::vector<std::pair<int, int>> gp;
    for (int y = 0; y < p.height(); ++y) {
        for (int x = 0; x < p.width(); ++x) {
            if (pb(y, x)) pp.emplace_back(y, x);
            if (gb(y, x)) gp.emplace_back(y, x);
        }
    }
    auto matched = [&](const std::vector<std::pair<int, int>>& from, const std::vector<std::pair<int, int>>& to) {
        int count = 0;
        for (const auto& [y, x] : from) {
            for (const auto& [yy, xx] : to) {
                if ((y - yy) * (y - yy) + (x - xx) * (x - xx) <= radius * radius) {
                    ++count;
                    break;
                }
            }
        }
        return count;
    };
    if (pp.empty() && gp.empty()) return 1.0;
    if (pp.empty() || gp.empty()) return 0.0;
    const double precision = static_cast<double>(matched(pp, gp)) / pp.size();
    const double recall = static_cast<double>(matched(gp, pp)) / gp.size();
    return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

inline Grid<std::uint8_t> random_binary(int h, int w, std::mt19937_64& rng, double p = 0.4) {
    std::bernoulli_distribution bern(p);
    Grid<std::uint8_t> g(h, w, 0);
    for (auto& v : g.values()) v = bern(rng) ? 1 : 0;
    return g;
}

// Random union of axis-aligned rectangles; produces realistic blob boundaries.
inline Grid<std::uint8_t> random_blobs(int h, int w, std::mt19937_64& rng, int count = 3) {
    Grid<std::uint8_t> g(h, w, 0);
    std::uniform_int_distribution<int> ry(0, h - 1);
    std::uniform_int_distribution<int> rx(0, w - 1);
    for (int i = 0; i < count; ++i) {
        int y0 = ry(rng), y1 = ry(rng), x0 = rx(rng), x1 = rx(rng);
        if (y0 > y1) std::swap(y0, y1);
        if (x0 > x1) std::swap(x0, x1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) g(y, x) = 1;
    }
    return g;
}

} // namespace drift::oracle
