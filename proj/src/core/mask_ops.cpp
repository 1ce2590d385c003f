#include "drift/core/mask_ops.hpp"

#include "drift/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace drift {
namespace {

struct Tap {
    int source;
    double weight;
};

// Overlap of each output cell with source pixels, normalized per cell.
std::vector<std::vector<Tap>> area_taps(int source_size, int target_size) {
    std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(target_size));
    const double scale = static_cast<double>(source_size) / target_size;
    for (int i = 0; i < target_size; ++i) {
        const double lo = i * scale;
        const double hi = (i + 1) * scale;
        const int first = static_cast<int>(std::floor(lo));
        const int last = std::min(source_size - 1, static_cast<int>(std::ceil(hi)) - 1);
        for (int p = first; p <= last; ++p) {
            const double overlap = std::min<double>(p + 1, hi) - std::max<double>(p, lo);
            if (overlap > 0.0) {
                taps[static_cast<std::size_t>(i)].push_back({p, overlap / scale});
            }
        }
    }
    return taps;
}

struct LinearTap {
    int lo;
    int hi;
    double frac; // weight of hi
};

std::vector<LinearTap> linear_taps(int source_size, int target_size) {
    std::vector<LinearTap> taps(static_cast<std::size_t>(target_size));
    const double scale = static_cast<double>(source_size) / target_size;
    for (int i = 0; i < target_size; ++i) {
        double src = (i + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(source_size - 1));
        const int lo = static_cast<int>(std::floor(src));
        const int hi = std::min(lo + 1, source_size - 1);
        taps[static_cast<std::size_t>(i)] = {lo, hi, src - lo};
    }
    return taps;
}

} // namespace

SoftMaskStack downsample_mask(const HardMask& mask, const LatticeGeometry& geometry) {
    if (mask.height() != geometry.image_height() || mask.width() != geometry.image_width()) {
        throw ShapeError("downsample_mask: mask is " + std::to_string(mask.height()) + "x" +
                         std::to_string(mask.width()) + " but geometry expects " +
                         std::to_string(geometry.image_height()) + "x" +
                         std::to_string(geometry.image_width()));
    }
    mask.validate();
    const int lh = geometry.latent_height();
    const int lw = geometry.latent_width();
    const auto ty = area_taps(mask.height(), lh);
    const auto tx = area_taps(mask.width(), lw);
    SoftMaskStack out(mask.object_count + 1, lh, lw);
    std::vector<double> acc(static_cast<std::size_t>(mask.object_count + 1));

#pragma omp parallel for schedule(static) firstprivate(acc)
    for (int cy = 0; cy < lh; ++cy) {
        for (int cx = 0; cx < lw; ++cx) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (const auto& [y, wy] : ty[static_cast<std::size_t>(cy)]) {
                for (const auto& [x, wx] : tx[static_cast<std::size_t>(cx)]) {
                    acc[mask.labels(y, x)] += wy * wx;
                }
            }
            for (int o = 0; o <= mask.object_count; ++o) {
                out[o](cy, cx) = static_cast<float>(acc[static_cast<std::size_t>(o)]);
            }
        }
    }
    return out;
}

HardMask argmax_fuse(const SoftMaskStack& stack) {
    if (stack.channel_count() == 0) {
        throw ShapeError("argmax_fuse: empty stack");
    }
    const int h = stack.height();
    const int w = stack.width();
    for (const auto& ch : stack.channels) {
        if (ch.height() != h || ch.width() != w) {
            throw ShapeError("argmax_fuse: channel shapes differ");
        }
    }
    HardMask out(h, w, stack.object_count());
    const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        float best_score = stack[0][i];
        for (int c = 1; c < stack.channel_count(); ++c) {
            if (stack[c][i] > best_score) {
                best_score = stack[c][i];
                best = c;
            }
        }
        out.labels[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

Grid<double> normalize_to_distribution(const Grid<float>& channel) {
    double total = 0.0;
    for (float v : channel.values()) {
        if (v > 0.0f) {
            total += v;
        }
    }
    if (!(total > 0.0)) {
        throw EmptyObjectError("normalize_to_distribution: channel has no positive mass");
    }
    Grid<double> out(channel.height(), channel.width(), 0.0);
    for (std::size_t i = 0; i < channel.size(); ++i) {
        out[i] = channel[i] > 0.0f ? channel[i] / total : 0.0;
    }
    return out;
}

Grid<float> upsample_channel(const Grid<float>& channel, int height, int width) {
    if (channel.empty() || height <= 0 || width <= 0) {
        throw ShapeError("upsample_channel: empty source or target");
    }
    const auto ty = linear_taps(channel.height(), height);
    const auto tx = linear_taps(channel.width(), width);
    Grid<float> out(height, width);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < width; ++x) {
            const auto& b = tx[static_cast<std::size_t>(x)];
            const double top = (1.0 - b.frac) * channel(a.lo, b.lo) + b.frac * channel(a.lo, b.hi);
            const double bottom =
                (1.0 - b.frac) * channel(a.hi, b.lo) + b.frac * channel(a.hi, b.hi);
            out(y, x) = static_cast<float>(std::max(0.0, (1.0 - a.frac) * top + a.frac * bottom));
        }
    }
    return out;
}

SoftMaskStack upsample_stack(const SoftMaskStack& stack, int height, int width) {
    SoftMaskStack out;
    out.channels.reserve(stack.channels.size());
    for (const auto& ch : stack.channels) {
        out.channels.push_back(upsample_channel(ch, height, width));
    }
    return out;
}

Image resize_image(const Image& image, int height, int width) {
    if (image.empty() || height <= 0 || width <= 0) {
        throw ShapeError("resize_image: empty source or target");
    }
    if (image.height() == height && image.width() == width) {
        return image;
    }
    const auto ty = linear_taps(image.height(), height);
    const auto tx = linear_taps(image.width(), width);
    Image out(height, width);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < width; ++x) {
            const auto& b = tx[static_cast<std::size_t>(x)];
            for (int c = 0; c < 3; ++c) {
                const double top =
                    (1.0 - b.frac) * image.at(a.lo, b.lo, c) + b.frac * image.at(a.lo, b.hi, c);
                const double bottom =
                    (1.0 - b.frac) * image.at(a.hi, b.lo, c) + b.frac * image.at(a.hi, b.hi, c);
                out.at(y, x, c) = static_cast<float>((1.0 - a.frac) * top + a.frac * bottom);
            }
        }
    }
    return out;
}

Image area_resize_image(const Image& image, int height, int width) {
    if (image.empty() || height <= 0 || width <= 0) {
        throw ShapeError("area_resize_image: empty source or target");
    }
    const auto ty = area_taps(image.height(), height);
    const auto tx = area_taps(image.width(), width);
    Image out(height, width);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc[3] = {0.0, 0.0, 0.0};
            for (const auto& [sy, wy] : ty[static_cast<std::size_t>(y)]) {
                for (const auto& [sx, wx] : tx[static_cast<std::size_t>(x)]) {
                    for (int c = 0; c < 3; ++c) {
                        acc[c] += wy * wx * image.at(sy, sx, c);
                    }
                }
            }
            for (int c = 0; c < 3; ++c) {
                out.at(y, x, c) = static_cast<float>(acc[c]);
            }
        }
    }
    return out;
}

} // namespace drift
