#pragma once

#include "drift/backend/backend.hpp"
#include "drift/kernel/dense.hpp"
#include "drift/kernel/head_weights.hpp"

#include <span>

namespace drift {

/// softmax(Q K^T / sqrt(d)) for one head; rows index target locations.
/// `queries` is rows x head_dim and `keys` is cols x head_dim, both row-major.
template <typename T>
DenseMatrix<T> head_affinity(std::span<const T> queries, std::span<const T> keys, int head_dim);

/// Row softmax of temperature-scaled cosine similarities between feature rows.
/// Throws ShapeError on a zero-norm feature row.
DenseMatrix<float> cosine_affinity(const FeatureSet& target, const FeatureSet& source, double temperature);

/// Weighted sum of per-head affinity matrices.
template <typename T>
DenseMatrix<T> aggregate_heads(std::span<const DenseMatrix<T>> per_head, const HeadWeights& weights);

/// All heads of the target queries against the source keys, aggregated.
DenseMatrix<float> attention_affinity(const QueryKeySet& target, const QueryKeySet& source,
                                      const HeadWeights& weights);

} // namespace drift
