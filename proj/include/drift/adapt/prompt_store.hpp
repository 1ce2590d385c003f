#pragma once

#include "drift/adapt/optimizer.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace drift {

struct PromptKey {
    std::string video;
    int object = 0;
    /// Everything else the result depends on (backend, latent, mask, optimizer).
    std::string fingerprint;

    std::string digest() const;
};

/// Adapted prompts on disk, one pair of files per key:
///   <digest>.json  metadata (key, head logits, loss trace, shape, blob hash)
///   <digest>.bin   prompt values as little-endian float64
/// Files are written to a temporary name and renamed, so an interrupted run
/// never leaves a partial entry behind.
class PromptStore {
  public:
    explicit PromptStore(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    bool contains(const PromptKey& key) const;
    std::optional<AdaptedPrompt> load(const PromptKey& key) const;
    void store(const PromptKey& key, const AdaptedPrompt& prompt) const;

  private:
    std::filesystem::path root_;
};

} // namespace drift
