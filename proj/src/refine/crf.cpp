#include "drift/refine/crf.hpp"

#include "drift/core/error.hpp"

#include <cmath>
#include <vector>

namespace drift {

void CrfOptions::validate() const {
    if (kernel_size < 1 || kernel_size % 2 == 0) {
        throw ConfigError("crf: kernel size must be a positive odd number");
    }
    if (steps < 0) {
        throw ConfigError("crf: step count must be nonnegative");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw ConfigError("crf: confidence must lie in (0, 1)");
    }
    if (!(color_sigma > 0.0) || !(spatial_sigma > 0.0) || !(compatibility >= 0.0)) {
        throw ConfigError("crf: widths must be positive and the compatibility nonnegative");
    }
}

HardMask crf_refine(const HardMask& mask, const Image& frame, const CrfOptions& options) {
    options.validate();
    if (mask.height() != frame.height() || mask.width() != frame.width()) {
        throw ShapeError("crf_refine: mask and frame sizes differ");
    }
    mask.validate();
    if (options.steps == 0) {
        return mask;
    }
    const int h = mask.height();
    const int w = mask.width();
    const int labels = mask.object_count + 1;
    const int r = options.kernel_size / 2;
    const int taps = options.kernel_size * options.kernel_size;
    const auto hw = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);

    // Normalized neighbor weights per pixel (self excluded).
    std::vector<float> kernel(hw * static_cast<std::size_t>(taps), 0.0f);
    const double inv_color = 1.0 / (2.0 * options.color_sigma * options.color_sigma);
    const double inv_space = 1.0 / (2.0 * options.spatial_sigma * options.spatial_sigma);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float* k = &kernel[(static_cast<std::size_t>(y) * w + x) * taps];
            double total = 0.0;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    const int yy = y + dy;
                    const int xx = x + dx;
                    if ((dy == 0 && dx == 0) || yy < 0 || yy >= h || xx < 0 || xx >= w) {
                        continue;
                    }
                    double c2 = 0.0;
                    for (int c = 0; c < 3; ++c) {
                        const double diff = frame.at(y, x, c) - frame.at(yy, xx, c);
                        c2 += diff * diff;
                    }
                    const double v = std::exp(-c2 * inv_color - (dy * dy + dx * dx) * inv_space);
                    k[(dy + r) * options.kernel_size + (dx + r)] = static_cast<float>(v);
                    total += v;
                }
            }
            if (total > 0.0) {
                for (int t = 0; t < taps; ++t) {
                    k[t] = static_cast<float>(k[t] / total);
                }
            }
        }
    }

    const double on = std::log(options.confidence);
    const double off = labels > 1 ? std::log((1.0 - options.confidence) / (labels - 1)) : on;
    std::vector<float> q(hw * static_cast<std::size_t>(labels));
    for (std::size_t i = 0; i < hw; ++i) {
        for (int l = 0; l < labels; ++l) {
            q[i * labels + l] = mask.labels[i] == l ? static_cast<float>(options.confidence)
                                                    : static_cast<float>(labels > 1 ? (1.0 - options.confidence) / (labels - 1) : 0.0);
        }
    }
    std::vector<float> next(q.size());
    for (int step = 0; step < options.steps; ++step) {
#pragma omp parallel for schedule(static)
        for (int y = 0; y < h; ++y) {
            std::vector<double> energy(static_cast<std::size_t>(labels));
            for (int x = 0; x < w; ++x) {
                const auto i = static_cast<std::size_t>(y) * w + x;
                const float* k = &kernel[i * taps];
                for (int l = 0; l < labels; ++l) {
                    energy[static_cast<std::size_t>(l)] = mask.labels[i] == l ? on : off;
                }
                for (int dy = -r; dy <= r; ++dy) {
                    for (int dx = -r; dx <= r; ++dx) {
                        const float kv = k[(dy + r) * options.kernel_size + (dx + r)];
                        if (kv == 0.0f) {
                            continue;
                        }
                        const auto j = static_cast<std::size_t>(y + dy) * w + (x + dx);
                        for (int l = 0; l < labels; ++l) {
                            // Potts: agreeing neighbors pull toward l, disagreeing ones push away.
                            energy[static_cast<std::size_t>(l)] +=
                                options.compatibility * kv * (2.0 * q[j * labels + l] - 1.0);
                        }
                    }
                }
                double top = energy[0];
                for (int l = 1; l < labels; ++l) {
                    top = std::max(top, energy[static_cast<std::size_t>(l)]);
                }
                double total = 0.0;
                for (int l = 0; l < labels; ++l) {
                    energy[static_cast<std::size_t>(l)] = std::exp(energy[static_cast<std::size_t>(l)] - top);
                    total += energy[static_cast<std::size_t>(l)];
                }
                for (int l = 0; l < labels; ++l) {
                    next[i * labels + l] = static_cast<float>(energy[static_cast<std::size_t>(l)] / total);
                }
            }
        }
        q.swap(next);
    }

    HardMask out(h, w, mask.object_count);
    for (std::size_t i = 0; i < hw; ++i) {
        int best = 0;
        for (int l = 1; l < labels; ++l) {
            if (q[i * labels + l] > q[i * labels + best]) {
                best = l;
            }
        }
        out.labels[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

} // namespace drift
