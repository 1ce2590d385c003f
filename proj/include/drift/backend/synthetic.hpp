#pragma once

#include "drift/backend/backend.hpp"

#include <cstdint>
#include <memory>

namespace drift {

struct SyntheticBackendOptions {
    std::uint64_t seed = 0;
    int head_count = 5;
    int head_dim = 8;
    int prompt_tokens = 4;
    int embedding_dim = 16;
    /// Scale of the content (color) embedding in queries and keys.
    double content_gain = 4.0;
    /// Scale of the smooth positional field shared by queries and keys.
    double positional_gain = 0.25;
    /// Scale of the prompt-dependent term.
    double prompt_gain = 1.0;
    /// Gaussian sigma, in lattice cells, used to smooth seed noise into fields.
    double smoothing = 2.0;
};

/// Deterministic, differentiable stand-in for a diffusion backbone.
///
/// For every head, queries and keys are
///     Q = B_q(z) + P_q * pool(theta),   K = B_k(z) + P_k * pool(theta)
/// where z is the latent (the frame area-resized onto the lattice), B_* is a
/// normalized per-head color embedding of z plus a smooth positional field, P_*
/// are fixed smooth linear maps from the embedding space onto the lattice and
/// pool() averages the prompt tokens. The color term is translation
/// equivariant; the positional term gives attention maps spatial locality.
class SyntheticBackend final : public Backend {
  public:
    SyntheticBackend(const LatticeGeometry& geometry, const SyntheticBackendOptions& options);

    std::string id() const override;
    int latent_height() const override { return geometry_.latent_height(); }
    int latent_width() const override { return geometry_.latent_width(); }
    int latent_channels() const override { return 3; }
    int input_height() const override { return geometry_.image_height(); }
    int input_width() const override { return geometry_.image_width(); }

    HeadLayout head_layout() const override;
    PromptShape prompt_shape() const override;
    PromptEmbedding encode_prompt(std::string_view text) const override;

    LatentState encode_frame(const Image& frame) const override;
    Image decode_latent(const LatentState& latent) const override;

    QueryKeySet extract_qk(const LatentState& latent, const PromptEmbedding& prompt) const override;
    QueryKeySet64 extract_qk64(const LatentState& latent, const PromptEmbedding& prompt) const override;
    std::vector<double> prompt_vjp(const LatentState& latent, const PromptEmbedding& prompt,
                                   const QueryKeySet64& cotangent) const override;

    FeatureSet extract_features(const LatentState& latent) const override;
    std::string weights_checksum() const override;

    /// Prompt-independent part of the queries and keys.
    QueryKeySet64 base_fields(const LatentState& latent) const;

    /// Bound L with sqrt(||Q(a) - Q(b)||_F^2 + ||K(a) - K(b)||_F^2) <= L ||a - b||_F over prompts.
    double lipschitz_constant() const;

    const LatticeGeometry& geometry() const { return geometry_; }
    const SyntheticBackendOptions& options() const { return options_; }

  private:
    template <typename T>
    BasicQueryKeySet<T> compute(const LatentState& latent, const PromptEmbedding& prompt) const;
    std::vector<double> pooled(const PromptEmbedding& prompt) const;
    void check_latent(const LatentState& latent) const;
    void check_prompt(const PromptEmbedding& prompt) const;

    LatticeGeometry geometry_;
    SyntheticBackendOptions options_;
    // Per head: head_dim x 4 color projection ([r, g, b, 1] -> head_dim).
    std::vector<std::vector<double>> color_projection_;
    // Per head: location_count x head_dim, unit-norm rows.
    std::vector<std::vector<double>> positional_;
    // Per head: location_count x head_dim x embedding_dim.
    std::vector<std::vector<double>> prompt_query_map_;
    std::vector<std::vector<double>> prompt_key_map_;
};

std::unique_ptr<SyntheticBackend> make_synthetic_backend(std::uint64_t seed,
                                                         const LatticeGeometry& geometry,
                                                         int head_count, int head_dim);

} // namespace drift
