#pragma once

#include "drift/adapt/optimizer.hpp"
#include "drift/adapt/prompt_store.hpp"
#include "drift/backend/backend.hpp"
#include "drift/core/error.hpp"
#include "drift/core/image_io.hpp"
#include "drift/eval/dataset.hpp"
#include "drift/inversion/latent_cache.hpp"
#include "drift/pipeline/config.hpp"
#include "drift/pipeline/timer.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace drift {

/// Failure inside a tracking run, tagged with the stage and frame it happened in.
class StageError : public Error {
  public:
    StageError(std::string stage, const std::string& sequence, int frame, const std::string& message)
        : Error(sequence + " frame " + std::to_string(frame) + " [" + stage + "]: " + message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

/// Decoded frames and annotations of one sequence.
struct SequenceData {
    std::string name;
    std::vector<Image> frames;
    std::vector<std::string> stems;
    std::map<int, HardMask> annotations;
    /// Object id -> initialization frame.
    std::map<int, int> first_frame;
    std::map<int, bool> seen;
    Palette palette = davis_palette();

    int frame_count() const { return static_cast<int>(frames.size()); }
    int object_count() const { return first_frame.empty() ? 0 : first_frame.rbegin()->first; }
    /// Throws IoError unless frames share one size and frame 0 is annotated.
    void validate() const;
};

SequenceData load_sequence(const SequenceEntry& entry);

/// In-memory query/key store keyed by content digests, bounded by a byte budget
/// (oldest entries are evicted first). Thread-safe.
class QueryKeyCache {
  public:
    explicit QueryKeyCache(std::size_t budget_bytes = std::size_t{1} << 31) : budget_(budget_bytes) {}

    std::shared_ptr<const QueryKeySet> find(const std::string& key) const;
    void insert(const std::string& key, std::shared_ptr<const QueryKeySet> value);
    std::size_t hits() const;

  private:
    mutable std::mutex mutex_;
    std::size_t budget_;
    std::size_t used_ = 0;
    mutable std::size_t hits_ = 0;
    std::map<std::string, std::shared_ptr<const QueryKeySet>> entries_;
    std::vector<std::string> order_;
};

/// Content-addressed stores shared by every session of a run.
struct RunCaches {
    LatentCache latents;
    std::unique_ptr<PromptStore> prompts;
    QueryKeyCache query_keys;

    /// Disk caches live below `root`; an empty root keeps only the in-memory cache.
    explicit RunCaches(const std::filesystem::path& root = {});
};

/// Prompt and head weights driving one propagated channel.
struct ChannelPrompt {
    PromptEmbedding prompt;
    HeadWeights heads;
    std::optional<AdaptedPrompt> adapted;
};

struct TrackResult {
    std::string sequence;
    /// Image-resolution label maps, one per frame.
    std::vector<HardMask> masks;
    std::vector<AdaptedPrompt> adapted;
    std::vector<std::string> warnings;
};

/// Frame-recurrent tracker for one sequence: per-frame inversion, per-channel
/// kernels against the reference bank, propagation, optional refinement and
/// the bank update with the fused result.
class TrackingSession {
  public:
    TrackingSession(const RunConfig& config, const Backend& backend, RunCaches* caches = nullptr);

    TrackResult run(const SequenceData& sequence, StageTimer& timer);

    /// Latent of one frame at the configured timestep and inversion mode.
    LatentState frame_latent(const SequenceData& sequence, int frame) const;

    /// Prompt of object `object` initialized at `frame` (adapted in learned mode).
    ChannelPrompt object_prompt(const SequenceData& sequence, int object, int frame, const LatentState& latent,
                                const SoftMaskStack& mask) const;

    /// Content address of an adaptation run.
    std::string prompt_fingerprint(const LatentState& latent, const SoftMaskStack& mask, int object) const;

    /// Lattice relating the sequence's frames to the backend's latent grid.
    LatticeGeometry geometry_for(const SequenceData& sequence) const;

  private:
    std::shared_ptr<const QueryKeySet> query_keys(const LatentState& latent, const std::string& latent_digest,
                                                  const PromptEmbedding& prompt) const;

    const RunConfig& config_;
    const Backend& backend_;
    RunCaches* caches_;
};

/// Hex SHA-1 of a latent's shape, timestep and values.
std::string latent_digest(const LatentState& latent);

} // namespace drift
