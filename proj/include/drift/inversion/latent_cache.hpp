#pragma once

#include "drift/backend/backend.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace drift {

struct LatentKey {
    std::string video;
    int frame = 0;
    int timestep = 0;
    std::string backbone;
    LatentProvenance provenance = LatentProvenance::clean;

    /// Content address of the key (hex SHA-1).
    std::string digest() const;
};

/// Binary latent blob: "DRLT" magic, u32 version, u32 dtype (0 = f32),
/// u32 height, u32 width, u32 channels, i32 timestep, u32 provenance, then
/// little-endian float data in height x width x channels order.
void write_latent(const std::filesystem::path& path, const LatentState& latent);
LatentState read_latent(const std::filesystem::path& path);

/// On-disk latent store keyed by (video, frame, timestep, backbone, provenance).
/// An empty root disables the cache.
class LatentCache {
  public:
    LatentCache() = default;
    explicit LatentCache(std::filesystem::path root);

    bool enabled() const { return !root_.empty(); }
    std::optional<LatentState> load(const LatentKey& key) const;
    void store(const LatentKey& key, const LatentState& latent) const;
    std::filesystem::path path_for(const LatentKey& key) const;

  private:
    std::filesystem::path root_;
};

} // namespace drift
