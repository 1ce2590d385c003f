#pragma once

#include "drift/backend/backend.hpp"
#include "drift/core/types.hpp"

#include <vector>

namespace drift {

/// Features and mask of one reference frame.
struct BankEntry {
    int frame_index = 0;
    /// Key sets per propagated channel (index 0 is background). Queries may be dropped.
    std::vector<QueryKeySet> keys;
    /// Raw features for the cosine-similarity kernel.
    FeatureSet features;
    /// Mask at latent resolution.
    SoftMaskStack mask;
};

/// Reference frames {initial} plus the `history` most recent frames.
///
/// The first inserted entry is pinned; later entries form a sliding window and
/// the oldest non-initial entry is evicted once the window exceeds `history`.
class ReferenceBank {
  public:
    explicit ReferenceBank(int history);

    int history() const { return history_; }
    int capacity() const { return history_ + 1; }
    bool empty() const { return entries_.empty(); }
    int size() const { return static_cast<int>(entries_.size()); }

    /// Throws ConfigError unless frame indices strictly increase.
    void insert(BankEntry entry);

    const std::vector<BankEntry>& entries() const { return entries_; }
    std::vector<BankEntry>& entries() { return entries_; }
    std::vector<int> frame_indices() const;
    const BankEntry& find(int frame_index) const;

  private:
    int history_;
    std::vector<BankEntry> entries_;
};

/// Inserts (frame, keys, features, stack) into the bank; returns the bank for chaining.
ReferenceBank& bank_update(ReferenceBank& bank, int frame_index, std::vector<QueryKeySet> keys,
                           FeatureSet features, SoftMaskStack stack);

} // namespace drift
