#pragma once

#include "drift/backend/backend.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace drift {

/// Backbone exported as a TorchScript module (see tools/export_sd21_backbone.py).
///
/// Module methods:
///   meta() -> Dict[str, int]     latent_height, latent_width, latent_channels,
///                                input_height, input_width, heads_per_layer,
///                                head_dim, token_count, embedding_dim
///   layer_names() -> List[str]   hooked attention layers, in head order
///   alphas_cumprod() -> Tensor   [train_steps]
///   encode_frame(image[1,3,H,W] in [0,1]) -> latent[1,C,h,w]
///   decode_latent(latent) -> image[1,3,H,W]
///   encode_prompt(text) -> [1,T,D]
///   predict_noise(latent, timestep, prompt) -> [1,C,h,w]
///   qk(latent, timestep, prompt) -> (Q, K), each [layers*heads, h*w, head_dim]
///   features(latent, timestep) -> [h*w, channels]
///
/// Calls into the module are serialized.
class TorchBackend final : public Backend {
  public:
    /// `layers` must equal the exported layer list when non-empty.
    TorchBackend(const std::filesystem::path& module, const std::vector<std::string>& layers);
    ~TorchBackend() override;

    std::string id() const override;
    int latent_height() const override;
    int latent_width() const override;
    int latent_channels() const override;
    int input_height() const override;
    int input_width() const override;

    HeadLayout head_layout() const override;
    PromptShape prompt_shape() const override;
    PromptEmbedding encode_prompt(std::string_view text) const override;

    LatentState encode_frame(const Image& frame) const override;
    Image decode_latent(const LatentState& latent) const override;
    const NoisePredictor* noise_predictor() const override;

    QueryKeySet extract_qk(const LatentState& latent, const PromptEmbedding& prompt) const override;
    std::vector<double> prompt_vjp(const LatentState& latent, const PromptEmbedding& prompt,
                                   const QueryKeySet64& cotangent) const override;
    FeatureSet extract_features(const LatentState& latent) const override;
    std::string weights_checksum() const override;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace drift
