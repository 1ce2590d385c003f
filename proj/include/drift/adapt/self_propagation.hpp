#pragma once

#include "drift/backend/backend.hpp"
#include "drift/core/grid.hpp"
#include "drift/kernel/dense.hpp"
#include "drift/kernel/head_weights.hpp"

#include <span>
#include <vector>

namespace drift {

/// BCE inputs are clamped to [epsilon, 1 - epsilon].
inline constexpr double kBceEpsilon = 1e-6;

struct SelfPropagationResult {
    double loss = 0.0;
    /// d loss / d (Q, K); empty unless a gradient was requested.
    QueryKeySet64 qk_gradient;
    /// d loss / d head logits; empty unless a gradient was requested.
    std::vector<double> logit_gradient;
};

/// Mean BCE between the frame's self-propagated masks and the masks themselves.
///
/// The frame attends to itself through every head (full rows: no radius, no
/// top-k), heads are mixed with `weights`, and each target channel is pushed
/// through the mixed kernel. The mean runs over locations and channels.
///
/// Rows are streamed: a row pass computes predictions, the loss and the query
/// gradient, and a column pass recomputes attention entries from the stored
/// row statistics to accumulate the key gradient. Both passes are parallel
/// over independent rows/columns and reduce in a fixed order, so results do not
/// depend on the thread count.
template <typename T>
SelfPropagationResult self_propagation_loss(const BasicQueryKeySet<T>& qk, const HeadWeights& weights,
                                            std::span<const Grid<float>> targets, bool with_gradient,
                                            double epsilon = kBceEpsilon);

namespace reference {

/// mean_i BCE(clamp(pred_i), target_i).
double mean_bce(std::span<const double> prediction, std::span<const double> target, double epsilon = kBceEpsilon);

/// A x for a dense square kernel.
std::vector<double> propagate_dense(const DenseMatrix<double>& kernel, std::span<const double> values);

/// Dense, serial formulation of self_propagation_loss (64-bit only).
SelfPropagationResult self_propagation_loss(const QueryKeySet64& qk, const HeadWeights& weights,
                                            std::span<const Grid<float>> targets, bool with_gradient,
                                            double epsilon = kBceEpsilon);

} // namespace reference

} // namespace drift
