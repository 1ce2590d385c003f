#pragma once

#include "drift/core/types.hpp"
#include "drift/inversion/schedule.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace drift {

struct PromptShape {
    int token_count = 0;
    int embedding_dim = 0;

    int parameter_count() const { return token_count * embedding_dim; }
    friend bool operator==(const PromptShape&, const PromptShape&) = default;
};

/// Text-conditioning input of the backbone (token_count x embedding_dim).
struct PromptEmbedding {
    PromptShape shape;
    std::vector<double> values;
    bool learnable = false;

    PromptEmbedding() = default;
    explicit PromptEmbedding(PromptShape s, bool learn = false)
        : shape(s), values(static_cast<std::size_t>(s.parameter_count()), 0.0), learnable(learn) {}

    int parameter_count() const { return shape.parameter_count(); }
};

/// Attention layers exposed by a backend and the head split of each.
struct HeadLayout {
    std::vector<std::string> layers;
    int heads_per_layer = 0;
    int head_dim = 0;

    int head_count() const { return static_cast<int>(layers.size()) * heads_per_layer; }
};

/// Query and key matrices of one head, each location_count x head_dim, row-major.
template <typename T>
struct HeadQueryKey {
    std::vector<T> queries;
    std::vector<T> keys;
};

/// Per-(layer, head) query/key matrices over the latent lattice.
/// Heads are stored layer-major: index = layer * heads_per_layer + head.
template <typename T>
struct BasicQueryKeySet {
    int location_count = 0;
    int head_dim = 0;
    std::vector<HeadQueryKey<T>> heads;

    BasicQueryKeySet() = default;
    BasicQueryKeySet(int locations, int dim, int head_count)
        : location_count(locations), head_dim(dim), heads(static_cast<std::size_t>(head_count)) {
        const auto n = static_cast<std::size_t>(locations) * static_cast<std::size_t>(dim);
        for (auto& h : heads) {
            h.queries.assign(n, T{});
            h.keys.assign(n, T{});
        }
    }

    int head_count() const { return static_cast<int>(heads.size()); }

    template <typename U>
    BasicQueryKeySet<U> cast() const {
        BasicQueryKeySet<U> out;
        out.location_count = location_count;
        out.head_dim = head_dim;
        out.heads.resize(heads.size());
        for (std::size_t i = 0; i < heads.size(); ++i) {
            out.heads[i].queries.assign(heads[i].queries.begin(), heads[i].queries.end());
            out.heads[i].keys.assign(heads[i].keys.begin(), heads[i].keys.end());
        }
        return out;
    }

    /// Throws ShapeError unless every head is location_count x head_dim.
    void validate() const;
};

using QueryKeySet = BasicQueryKeySet<float>;
using QueryKeySet64 = BasicQueryKeySet<double>;

/// Raw per-location features of a designated layer (cosine-similarity baseline input).
struct FeatureSet {
    int location_count = 0;
    int channels = 0;
    std::vector<float> values; // location_count x channels

    void validate() const;
};

enum class LatentProvenance { clean, random_noise, ddim_inversion };

std::string_view to_string(LatentProvenance p);

/// Latent grid (height x width x channels, interleaved) at a diffusion timestep.
struct LatentState {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> values;
    int timestep = 0;
    LatentProvenance provenance = LatentProvenance::clean;

    LatentState() = default;
    LatentState(int h, int w, int c)
        : height(h), width(w), channels(c),
          values(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), 0.0f) {}

    std::size_t size() const { return values.size(); }
    void validate() const;
};

/// Epsilon-prediction network used by DDIM inversion and sampling.
class NoisePredictor {
  public:
    virtual ~NoisePredictor() = default;
    virtual const NoiseSchedule& schedule() const = 0;
    virtual std::vector<float> predict_noise(const LatentState& latent, int timestep,
                                             const PromptEmbedding& prompt) const = 0;
};

/// Source of attention queries/keys for a frame conditioned on a prompt.
///
/// Implementations are read-only after construction and may be called from
/// several threads at once.
class Backend {
  public:
    virtual ~Backend() = default;

    virtual std::string id() const = 0;
    virtual int latent_height() const = 0;
    virtual int latent_width() const = 0;
    virtual int latent_channels() const = 0;
    /// Resolution frames must have before encode_frame.
    virtual int input_height() const = 0;
    virtual int input_width() const = 0;

    virtual HeadLayout head_layout() const = 0;
    virtual PromptShape prompt_shape() const = 0;
    virtual PromptEmbedding encode_prompt(std::string_view text) const = 0;
    PromptEmbedding null_prompt() const { return encode_prompt(""); }

    virtual LatentState encode_frame(const Image& frame) const = 0;
    virtual Image decode_latent(const LatentState& latent) const = 0;

    /// nullptr when the backend has no diffusion process (inversion is then the identity).
    virtual const NoisePredictor* noise_predictor() const { return nullptr; }

    virtual QueryKeySet extract_qk(const LatentState& latent, const PromptEmbedding& prompt) const = 0;
    virtual QueryKeySet64 extract_qk64(const LatentState& latent, const PromptEmbedding& prompt) const {
        return extract_qk(latent, prompt).cast<double>();
    }

    /// Vector-Jacobian product: gradient w.r.t. the prompt values of
    /// <cotangent, extract_qk(latent, prompt)>.
    virtual std::vector<double> prompt_vjp(const LatentState& latent, const PromptEmbedding& prompt,
                                           const QueryKeySet64& cotangent) const = 0;

    virtual FeatureSet extract_features(const LatentState& latent) const = 0;

    /// Digest of the frozen backbone parameters.
    virtual std::string weights_checksum() const = 0;

    int location_count() const { return latent_height() * latent_width(); }
};

} // namespace drift
