#pragma once

#include "drift/backend/backend.hpp"
#include "drift/core/types.hpp"
#include "drift/kernel/dense.hpp"
#include "drift/kernel/head_weights.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace drift {

struct SparsifyOptions {
    /// Euclidean radius on the latent lattice; sources farther away are dropped.
    double radius = 14.0;
    /// Entries retained per target row across all reference frames jointly.
    int top_k = 15;
    /// Target rows materialized densely at a time by the blocked builders.
    int block_rows = 512;

    void validate() const;
};

/// Sparse row-stochastic affinity from target locations to the concatenated
/// reference context. Column (slot, location) addresses location `location` of
/// reference frame `source_frames[slot]`. Rows are stored CSR-style, entries of
/// a row ordered by (slot, location).
struct PropagationKernel {
    int target_count = 0;
    int source_locations = 0;
    std::vector<int> source_frames;
    std::vector<std::uint32_t> row_offsets; // target_count + 1
    std::vector<std::uint32_t> slots;
    std::vector<std::uint32_t> locations;
    std::vector<float> values;

    std::size_t entry_count() const { return values.size(); }
    std::size_t row_begin(int row) const { return row_offsets[static_cast<std::size_t>(row)]; }
    std::size_t row_end(int row) const { return row_offsets[static_cast<std::size_t>(row) + 1]; }

    /// Checks the stochastic/support/radius invariants; throws ShapeError on violation.
    void validate(const LatticeGeometry& geometry, const SparsifyOptions& options, double tolerance = 1e-5) const;
};

/// Radius mask + joint top-k + renormalization of dense affinity rows.
/// `per_reference[s]` holds target x location affinities against frame `source_frames[s]`.
PropagationKernel sparsify(std::span<const DenseMatrix<float>> per_reference, std::span<const int> source_frames,
                           const LatticeGeometry& geometry, const SparsifyOptions& options);

/// Multi-head attention kernel built in row blocks (OpenMP-parallel over rows).
PropagationKernel build_attention_kernel(const QueryKeySet& target, std::span<const QueryKeySet* const> references,
                                         std::span<const int> source_frames, const HeadWeights& weights,
                                         const LatticeGeometry& geometry, const SparsifyOptions& options);

/// Cosine-similarity kernel built in row blocks (OpenMP-parallel over rows).
PropagationKernel build_cosine_kernel(const FeatureSet& target, std::span<const FeatureSet* const> references,
                                      std::span<const int> source_frames, double temperature,
                                      const LatticeGeometry& geometry, const SparsifyOptions& options);

/// Serial reference implementations, kept for cross-checking and benchmarking.
namespace reference {

/// Dense per-head affinities, aggregated, then sparsified; no blocking or threads.
PropagationKernel build_attention_kernel(const QueryKeySet& target, std::span<const QueryKeySet* const> references,
                                         std::span<const int> source_frames, const HeadWeights& weights,
                                         const LatticeGeometry& geometry, const SparsifyOptions& options);

} // namespace reference

} // namespace drift
