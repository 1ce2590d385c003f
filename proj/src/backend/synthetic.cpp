#include "drift/backend/synthetic.hpp"

#include "drift/core/error.hpp"
#include "drift/core/hash.hpp"
#include "drift/core/mask_ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace drift {
namespace {

// Gaussian-smoothed white noise on the lattice with `channels` independent
// fields, each rescaled to zero mean and unit variance.
std::vector<double> smooth_noise(std::mt19937_64& rng, int lh, int lw, int channels, double sigma) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t n = static_cast<std::size_t>(lh) * static_cast<std::size_t>(lw);
    std::vector<double> field(n * static_cast<std::size_t>(channels));
    for (auto& v : field) {
        v = normal(rng);
    }
    if (sigma > 0.0) {
        const int radius = static_cast<int>(std::ceil(3.0 * sigma));
        std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
        for (int i = -radius; i <= radius; ++i) {
            taps[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        }
        std::vector<double> tmp(field.size());
        auto blur = [&](bool horizontal, const std::vector<double>& src, std::vector<double>& dst) {
            for (int y = 0; y < lh; ++y) {
                for (int x = 0; x < lw; ++x) {
                    for (int c = 0; c < channels; ++c) {
                        double acc = 0.0, norm = 0.0;
                        for (int i = -radius; i <= radius; ++i) {
                            const int yy = horizontal ? y : std::clamp(y + i, 0, lh - 1);
                            const int xx = horizontal ? std::clamp(x + i, 0, lw - 1) : x;
                            const double t = taps[static_cast<std::size_t>(i + radius)];
                            acc += t * src[(static_cast<std::size_t>(yy) * lw + xx) * channels + c];
                            norm += t;
                        }
                        dst[(static_cast<std::size_t>(y) * lw + x) * channels + c] = acc / norm;
                    }
                }
            }
        };
        blur(true, field, tmp);
        blur(false, tmp, field);
    }
    for (int c = 0; c < channels; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mean += field[i * channels + c];
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = field[i * channels + c] - mean;
            var += d * d;
        }
        const double scale = var > 0.0 ? 1.0 / std::sqrt(var / static_cast<double>(n)) : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            field[i * channels + c] = (field[i * channels + c] - mean) * scale;
        }
    }
    return field;
}

} // namespace

SyntheticBackend::SyntheticBackend(const LatticeGeometry& geometry, const SyntheticBackendOptions& options)
    : geometry_(geometry), options_(options) {
    if (options.head_count <= 0 || options.head_dim <= 0 || options.prompt_tokens <= 0 ||
        options.embedding_dim <= 0) {
        throw ConfigError("synthetic backend: dimensions must be positive");
    }
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int lh = geometry.latent_height();
    const int lw = geometry.latent_width();
    const int n = geometry.location_count();
    const int d = options.head_dim;
    const int e = options.embedding_dim;
    const double prompt_scale = options.prompt_gain / std::sqrt(static_cast<double>(e));
    for (int h = 0; h < options.head_count; ++h) {
        std::vector<double> proj(static_cast<std::size_t>(d) * 4);
        for (auto& v : proj) {
            v = normal(rng);
        }
        color_projection_.push_back(std::move(proj));

        auto pos = smooth_noise(rng, lh, lw, d, options.smoothing);
        for (int i = 0; i < n; ++i) {
            double norm = 0.0;
            for (int c = 0; c < d; ++c) {
                norm += pos[static_cast<std::size_t>(i) * d + c] * pos[static_cast<std::size_t>(i) * d + c];
            }
            norm = std::sqrt(norm);
            for (int c = 0; c < d; ++c) {
                pos[static_cast<std::size_t>(i) * d + c] = norm > 0.0 ? pos[static_cast<std::size_t>(i) * d + c] / norm : 0.0;
            }
        }
        positional_.push_back(std::move(pos));

        auto pq = smooth_noise(rng, lh, lw, d * e, options.smoothing);
        auto pk = smooth_noise(rng, lh, lw, d * e, options.smoothing);
        for (auto& v : pq) {
            v *= prompt_scale;
        }
        for (auto& v : pk) {
            v *= prompt_scale;
        }
        prompt_query_map_.push_back(std::move(pq));
        prompt_key_map_.push_back(std::move(pk));
    }
}

std::string SyntheticBackend::id() const {
    std::ostringstream os;
    os << "synthetic-s" << options_.seed << "-h" << options_.head_count << "-d" << options_.head_dim
       << "-" << geometry_.latent_height() << "x" << geometry_.latent_width();
    return os.str();
}

HeadLayout SyntheticBackend::head_layout() const {
    return HeadLayout{{"synthetic.attn1"}, options_.head_count, options_.head_dim};
}

PromptShape SyntheticBackend::prompt_shape() const {
    return PromptShape{options_.prompt_tokens, options_.embedding_dim};
}

PromptEmbedding SyntheticBackend::encode_prompt(std::string_view text) const {
    PromptEmbedding prompt(prompt_shape());
    if (text.empty()) {
        return prompt;
    }
    std::mt19937_64 rng(stable_hash(text) ^ options_.seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(options_.embedding_dim)));
    for (auto& v : prompt.values) {
        v = normal(rng);
    }
    return prompt;
}

LatentState SyntheticBackend::encode_frame(const Image& frame) const {
    if (frame.height() != input_height() || frame.width() != input_width()) {
        throw ShapeError("synthetic backend: frame resolution does not match geometry");
    }
    const Image small = area_resize_image(frame, latent_height(), latent_width());
    LatentState latent(latent_height(), latent_width(), 3);
    std::copy(small.samples().begin(), small.samples().end(), latent.values.begin());
    return latent;
}

Image SyntheticBackend::decode_latent(const LatentState& latent) const {
    check_latent(latent);
    Image small(latent.height, latent.width);
    std::copy(latent.values.begin(), latent.values.end(), small.samples().begin());
    return resize_image(small, input_height(), input_width());
}

void SyntheticBackend::check_latent(const LatentState& latent) const {
    if (latent.height != latent_height() || latent.width != latent_width() || latent.channels != 3 ||
        latent.values.size() != static_cast<std::size_t>(geometry_.location_count()) * 3) {
        throw ShapeError("synthetic backend: latent shape mismatch");
    }
}

void SyntheticBackend::check_prompt(const PromptEmbedding& prompt) const {
    if (!(prompt.shape == prompt_shape()) ||
        prompt.values.size() != static_cast<std::size_t>(prompt_shape().parameter_count())) {
        throw ShapeError("synthetic backend: prompt shape mismatch");
    }
}

std::vector<double> SyntheticBackend::pooled(const PromptEmbedding& prompt) const {
    const int t = options_.prompt_tokens;
    const int e = options_.embedding_dim;
    std::vector<double> pool(static_cast<std::size_t>(e), 0.0);
    for (int i = 0; i < t; ++i) {
        for (int j = 0; j < e; ++j) {
            pool[static_cast<std::size_t>(j)] += prompt.values[static_cast<std::size_t>(i) * e + j];
        }
    }
    for (auto& v : pool) {
        v /= t;
    }
    return pool;
}

template <typename T>
BasicQueryKeySet<T> SyntheticBackend::compute(const LatentState& latent, const PromptEmbedding& prompt) const {
    check_latent(latent);
    check_prompt(prompt);
    const int n = geometry_.location_count();
    const int d = options_.head_dim;
    const int e = options_.embedding_dim;
    const auto pool = pooled(prompt);
    bool prompt_is_zero = std::all_of(pool.begin(), pool.end(), [](double v) { return v == 0.0; });
    BasicQueryKeySet<T> out(n, d, options_.head_count);
    for (int h = 0; h < options_.head_count; ++h) {
        const auto& proj = color_projection_[static_cast<std::size_t>(h)];
        const auto& pos = positional_[static_cast<std::size_t>(h)];
        const auto& pq = prompt_query_map_[static_cast<std::size_t>(h)];
        const auto& pk = prompt_key_map_[static_cast<std::size_t>(h)];
        auto& dst = out.heads[static_cast<std::size_t>(h)];
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) {
            const float* z = &latent.values[static_cast<std::size_t>(i) * 3];
            double emb[64];
            std::vector<double> spill;
            double* content = emb;
            if (d > 64) {
                spill.resize(static_cast<std::size_t>(d));
                content = spill.data();
            }
            double norm = 0.0;
            for (int c = 0; c < d; ++c) {
                const double* r = &proj[static_cast<std::size_t>(c) * 4];
                content[c] = r[0] * z[0] + r[1] * z[1] + r[2] * z[2] + r[3];
                norm += content[c] * content[c];
            }
            norm = std::sqrt(norm);
            for (int c = 0; c < d; ++c) {
                const std::size_t idx = static_cast<std::size_t>(i) * d + c;
                const double base = options_.content_gain * (norm > 0.0 ? content[c] / norm : 0.0) +
                                    options_.positional_gain * pos[idx];
                double q = base;
                double k = base;
                if (!prompt_is_zero) {
                    const double* mq = &pq[idx * e];
                    const double* mk = &pk[idx * e];
                    for (int j = 0; j < e; ++j) {
                        q += mq[j] * pool[static_cast<std::size_t>(j)];
                        k += mk[j] * pool[static_cast<std::size_t>(j)];
                    }
                }
                dst.queries[idx] = static_cast<T>(q);
                dst.keys[idx] = static_cast<T>(k);
            }
        }
    }
    return out;
}

QueryKeySet SyntheticBackend::extract_qk(const LatentState& latent, const PromptEmbedding& prompt) const {
    return compute<float>(latent, prompt);
}

QueryKeySet64 SyntheticBackend::extract_qk64(const LatentState& latent, const PromptEmbedding& prompt) const {
    return compute<double>(latent, prompt);
}

QueryKeySet64 SyntheticBackend::base_fields(const LatentState& latent) const {
    return compute<double>(latent, PromptEmbedding(prompt_shape()));
}

std::vector<double> SyntheticBackend::prompt_vjp(const LatentState& latent, const PromptEmbedding& prompt,
                                                 const QueryKeySet64& cotangent) const {
    check_latent(latent);
    check_prompt(prompt);
    const int n = geometry_.location_count();
    const int d = options_.head_dim;
    const int e = options_.embedding_dim;
    const int t = options_.prompt_tokens;
    if (cotangent.location_count != n || cotangent.head_dim != d ||
        cotangent.head_count() != options_.head_count) {
        throw ShapeError("synthetic backend: cotangent shape mismatch");
    }
    cotangent.validate();
    std::vector<double> grad_pool(static_cast<std::size_t>(e), 0.0);
    for (int h = 0; h < options_.head_count; ++h) {
        const auto& pq = prompt_query_map_[static_cast<std::size_t>(h)];
        const auto& pk = prompt_key_map_[static_cast<std::size_t>(h)];
        const auto& cot = cotangent.heads[static_cast<std::size_t>(h)];
        for (std::size_t idx = 0; idx < static_cast<std::size_t>(n) * d; ++idx) {
            const double gq = cot.queries[idx];
            const double gk = cot.keys[idx];
            if (gq == 0.0 && gk == 0.0) {
                continue;
            }
            const double* mq = &pq[idx * e];
            const double* mk = &pk[idx * e];
            for (int j = 0; j < e; ++j) {
                grad_pool[static_cast<std::size_t>(j)] += gq * mq[j] + gk * mk[j];
            }
        }
    }
    std::vector<double> grad(static_cast<std::size_t>(t) * e);
    for (int i = 0; i < t; ++i) {
        for (int j = 0; j < e; ++j) {
            grad[static_cast<std::size_t>(i) * e + j] = grad_pool[static_cast<std::size_t>(j)] / t;
        }
    }
    return grad;
}

FeatureSet SyntheticBackend::extract_features(const LatentState& latent) const {
    check_latent(latent);
    const int n = geometry_.location_count();
    const int d = options_.head_dim;
    FeatureSet f;
    f.location_count = n;
    f.channels = 3 + d;
    f.values.resize(static_cast<std::size_t>(n) * f.channels);
    const auto& pos = positional_.front();
    for (int i = 0; i < n; ++i) {
        float* dst = &f.values[static_cast<std::size_t>(i) * f.channels];
        for (int c = 0; c < 3; ++c) {
            dst[c] = latent.values[static_cast<std::size_t>(i) * 3 + c];
        }
        for (int c = 0; c < d; ++c) {
            dst[3 + c] = static_cast<float>(options_.positional_gain * pos[static_cast<std::size_t>(i) * d + c]);
        }
    }
    return f;
}

std::string SyntheticBackend::weights_checksum() const {
    std::string bytes;
    auto append = [&bytes](const std::vector<double>& v) {
        bytes.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    };
    for (std::size_t h = 0; h < color_projection_.size(); ++h) {
        append(color_projection_[h]);
        append(positional_[h]);
        append(prompt_query_map_[h]);
        append(prompt_key_map_[h]);
    }
    return sha1_hex(bytes);
}

double SyntheticBackend::lipschitz_constant() const {
    // ||P pool(delta)||_F <= ||P||_F ||pool(delta)|| and ||pool(delta)|| <= ||delta||_F / sqrt(T).
    double sq = 0.0;
    for (std::size_t h = 0; h < prompt_query_map_.size(); ++h) {
        for (double v : prompt_query_map_[h]) {
            sq += v * v;
        }
        for (double v : prompt_key_map_[h]) {
            sq += v * v;
        }
    }
    return std::sqrt(sq) / std::sqrt(static_cast<double>(options_.prompt_tokens));
}

std::unique_ptr<SyntheticBackend> make_synthetic_backend(std::uint64_t seed, const LatticeGeometry& geometry,
                                                         int head_count, int head_dim) {
    SyntheticBackendOptions options;
    options.seed = seed;
    options.head_count = head_count;
    options.head_dim = head_dim;
    return std::make_unique<SyntheticBackend>(geometry, options);
}

} // namespace drift
